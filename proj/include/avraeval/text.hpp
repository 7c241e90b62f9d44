#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace avraeval::text {

std::string_view trim(std::string_view s);
std::string to_lower(std::string_view s);
bool is_space(char c);

// Splits on runs of ASCII whitespace; no empty pieces.
std::vector<std::string> split_whitespace(std::string_view s);

// Replaces U+2018/U+2019/U+201C/U+201D with their ASCII counterparts.
std::string straighten_quotes(std::string_view s);

// Lowercase, typographic quotes straightened, quote characters removed,
// internal whitespace collapsed to one space, trimmed.
std::string normalize_name(std::string_view s);

// Number of Unicode code points, counting each invalid byte as one.
std::size_t utf8_length(std::string_view s);

bool starts_with(std::string_view s, std::string_view prefix);

}  // namespace avraeval::text
