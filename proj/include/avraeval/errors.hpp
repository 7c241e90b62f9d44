#pragma once

#include <stdexcept>

namespace avraeval {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace avraeval
