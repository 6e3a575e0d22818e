#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace eae::text {

// Number of Unicode scalar values in a UTF-8 string (continuation bytes are
// not counted, so malformed input degrades to a byte-ish count).
std::size_t codepoint_count(std::string_view s) noexcept;

// Longest prefix holding at most `n` code points, cut on a code point boundary.
std::string_view utf8_prefix(std::string_view s, std::size_t n) noexcept;

std::string_view trim(std::string_view s) noexcept;
std::string ascii_lower(std::string_view s);
bool iequals(std::string_view a, std::string_view b) noexcept;

// Splits on '\n' and drops a trailing '\r' from each line. An empty input
// yields a single empty line.
std::vector<std::string_view> split_lines(std::string_view s);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

// Replaces every `{name}` slot with its value. Unknown slots are left intact.
std::string substitute(std::string_view tmpl,
                       const std::vector<std::pair<std::string, std::string>>& values);

// Hex-encoded SHA-256.
std::string sha256_hex(std::string_view data);

}  // namespace eae::text
