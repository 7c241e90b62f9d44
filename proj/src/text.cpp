#include "avraeval/text.hpp"

#include <algorithm>

namespace avraeval::text {

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](char c) {
    return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
  });
  return out;
}

std::vector<std::string> split_whitespace(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && is_space(s[i])) ++i;
    std::size_t start = i;
    while (i < s.size() && !is_space(s[i])) ++i;
    if (i > start) out.emplace_back(s.substr(start, i - start));
  }
  return out;
}

std::string straighten_quotes(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    // U+2018..U+201D are encoded as E2 80 98..9D.
    if (i + 2 < s.size() && static_cast<unsigned char>(s[i]) == 0xE2 &&
        static_cast<unsigned char>(s[i + 1]) == 0x80) {
      const auto third = static_cast<unsigned char>(s[i + 2]);
      if (third == 0x98 || third == 0x99) {
        out.push_back('\'');
        i += 2;
        continue;
      }
      if (third == 0x9C || third == 0x9D) {
        out.push_back('"');
        i += 2;
        continue;
      }
    }
    out.push_back(s[i]);
  }
  return out;
}

std::string normalize_name(std::string_view s) {
  const std::string straight = straighten_quotes(s);
  std::string out;
  out.reserve(straight.size());
  bool pending_space = false;
  for (char c : straight) {
    if (c == '\'' || c == '"') continue;
    if (is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back((c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c);
  }
  return out;
}

std::size_t utf8_length(std::string_view s) {
  std::size_t count = 0;
  for (std::size_t i = 0; i < s.size();) {
    const auto lead = static_cast<unsigned char>(s[i]);
    std::size_t width = 1;
    if (lead >= 0xF0 && lead <= 0xF4) {
      width = 4;
    } else if (lead >= 0xE0 && lead <= 0xEF) {
      width = 3;
    } else if (lead >= 0xC2 && lead <= 0xDF) {
      width = 2;
    }
    if (width > 1) {
      if (i + width > s.size()) {
        width = 1;
      } else {
        for (std::size_t k = 1; k < width; ++k) {
          if ((static_cast<unsigned char>(s[i + k]) & 0xC0) != 0x80) {
            width = 1;
            break;
          }
        }
      }
    }
    i += width;
    ++count;
  }
  return count;
}

bool starts_with(std::string_view s, std::string_view prefix) {
  return s.substr(0, prefix.size()) == prefix;
}

}  // namespace avraeval::text
