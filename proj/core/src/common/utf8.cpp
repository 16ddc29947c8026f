#include "dforge/common/utf8.hpp"

namespace dforge {

std::size_t utf8_char_len(std::string_view text, std::size_t i) {
  const auto b = static_cast<unsigned char>(text[i]);
  std::size_t len = 1;
  if ((b & 0xe0) == 0xc0)
    len = 2;
  else if ((b & 0xf0) == 0xe0)
    len = 3;
  else if ((b & 0xf8) == 0xf0)
    len = 4;
  if (i + len > text.size()) len = 1;
  // Continuation bytes must actually continue; otherwise treat as 1 byte.
  for (std::size_t k = 1; k < len; ++k) {
    if ((static_cast<unsigned char>(text[i + k]) & 0xc0) != 0x80) return 1;
  }
  return len;
}

std::vector<std::string> utf8_chars(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const std::size_t len = utf8_char_len(text, i);
    out.emplace_back(text.substr(i, len));
    i += len;
  }
  return out;
}

std::size_t utf8_length(std::string_view text) {
  std::size_t n = 0;
  std::size_t i = 0;
  while (i < text.size()) {
    i += utf8_char_len(text, i);
    ++n;
  }
  return n;
}

}  // namespace dforge
