#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace dforge {

// Minimal UTF-8 iteration. A "character" is one code point; malformed lead
// bytes are passed through as single-byte characters.

// Byte length of the code point starting at position i.
std::size_t utf8_char_len(std::string_view text, std::size_t i);

// Splits into code-point substrings.
std::vector<std::string> utf8_chars(std::string_view text);

std::size_t utf8_length(std::string_view text);

}  // namespace dforge
