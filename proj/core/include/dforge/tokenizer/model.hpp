#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace dforge::tok {

inline constexpr std::int32_t kPadId = 0;
inline constexpr std::int32_t kUnkId = 1;
inline constexpr std::int32_t kBosId = 2;
inline constexpr std::int32_t kEosId = 3;
inline constexpr std::int32_t kMaskId = 4;
inline constexpr std::int32_t kNumSpecials = 5;

// First id that the masking policy may sample as a random replacement.
inline constexpr std::int32_t kFirstPieceId = kNumSpecials;

// Word-boundary marker prepended to every word before segmentation (U+2581).
inline constexpr std::string_view kWordMarker = "\xe2\x96\x81";

const std::vector<std::string>& special_pieces();

// Unigram subword vocabulary. Ids 0..4 are the specials; everything after is
// a scored piece. Segmentation is per word: each whitespace word is prefixed
// with the boundary marker and decoded losslessly (single-space convention).
class TokenizerModel {
 public:
  TokenizerModel() = default;

  // `pieces` excludes the specials, which are prepended here.
  TokenizerModel(std::vector<std::pair<std::string, double>> pieces,
                 std::set<std::string> forced);

  std::size_t size() const { return pieces_.size(); }
  const std::vector<std::pair<std::string, double>>& pieces() const {
    return pieces_;
  }
  const std::set<std::string>& forced() const { return forced_; }

  // -1 when the string is not a (non-special) piece.
  std::int32_t piece_id(std::string_view piece) const;
  const std::string& piece_text(std::int32_t id) const;
  double piece_log_prob(std::int32_t id) const;

  // Maximum-likelihood segmentation; ties resolved toward the
  // lexicographically first piece sequence. Unseen characters become unk.
  std::vector<std::int32_t> encode(std::string_view text) const;
  std::string decode(std::span<const std::int32_t> ids) const;

  // Pieces emitted for one marker-prefixed word.
  std::vector<std::int32_t> encode_word(std::string_view word) const;

  void save(const std::filesystem::path& path) const;
  static TokenizerModel load(const std::filesystem::path& path);

  // SHA-256 of the serialized model; recorded in checkpoints.
  std::string fingerprint() const;

 private:
  struct StringHash {
    using is_transparent = void;
    std::size_t operator()(std::string_view s) const {
      return std::hash<std::string_view>{}(s);
    }
  };

  std::string serialize() const;
  void build_index();

  std::vector<std::pair<std::string, double>> pieces_;  // [0..4] specials
  std::set<std::string> forced_;
  std::unordered_map<std::string, std::int32_t, StringHash, std::equal_to<>>
      index_;
  std::size_t max_piece_chars_ = 1;
};

}  // namespace dforge::tok
