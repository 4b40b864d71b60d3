#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace guidebench::text {

std::string_view trim(std::string_view s) noexcept;

/// Trims and collapses internal whitespace runs to a single space.
std::string normalize_whitespace(std::string_view s);

std::string to_lower(std::string_view s);

inline bool is_word_char(char c) noexcept {
    return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_' ||
           static_cast<unsigned char>(c) >= 0x80;
}

/// Case-insensitive ASCII search; npos when absent.
std::size_t find_ci(std::string_view haystack, std::string_view needle, std::size_t from = 0) noexcept;

/// True when [pos, pos+len) is delimited by non-word characters (or string ends).
bool at_word_boundary(std::string_view s, std::size_t pos, std::size_t len) noexcept;

std::vector<std::string> split(std::string_view s, char sep);

}  // namespace guidebench::text
