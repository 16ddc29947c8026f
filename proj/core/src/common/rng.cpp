#include "dforge/common/rng.hpp"

#include <charconv>

namespace dforge {

std::string Rng::state_string() const {
  std::string out;
  char buf[32];
  for (int i = 0; i < 4; ++i) {
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), state_[i], 16);
    out.append(buf, ptr);
    if (i != 3) out.push_back(':');
  }
  return out;
}

Rng Rng::from_state_string(std::string_view text) {
  Rng rng;
  std::size_t pos = 0;
  for (int i = 0; i < 4; ++i) {
    const std::size_t next = text.find(':', pos);
    const std::string_view part =
        text.substr(pos, next == std::string_view::npos ? next : next - pos);
    auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(),
                                     rng.state_[i], 16);
    if (ec != std::errc{} || ptr != part.data() + part.size())
      throw ValidationError("Rng: malformed state string");
    pos = next + 1;
  }
  return rng;
}

std::uint64_t mix_seed(std::uint64_t seed, std::string_view tag, std::uint64_t n) {
  // FNV-1a over the tag, then two splitmix64 finalization rounds.
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  std::uint64_t z = seed ^ h ^ (n + 0x9e3779b97f4a7c15ull * (n + 1));
  for (int round = 0; round < 2; ++round) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    z = z ^ (z >> 31);
  }
  return z;
}

}  // namespace dforge
