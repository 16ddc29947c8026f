#include "dforge/tokenizer/model.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "dforge/common/error.hpp"
#include "dforge/common/hash.hpp"
#include "dforge/common/utf8.hpp"

namespace dforge::tok {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
// Per-token penalty for unk; large enough that segmentations always prefer
// real pieces and fewer unks.
constexpr double kUnkScore = -1.0e6;

std::string format_log_prob(double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return std::string(buf);
}

}  // namespace

const std::vector<std::string>& special_pieces() {
  static const std::vector<std::string> specials = {"<pad>", "<unk>", "<s>",
                                                    "</s>", "<mask>"};
  return specials;
}

TokenizerModel::TokenizerModel(std::vector<std::pair<std::string, double>> pieces,
                               std::set<std::string> forced)
    : forced_(std::move(forced)) {
  pieces_.reserve(pieces.size() + kNumSpecials);
  for (const auto& name : special_pieces()) pieces_.emplace_back(name, 0.0);
  for (auto& piece : pieces) pieces_.push_back(std::move(piece));
  build_index();
  for (const auto& piece : forced_)
    if (!index_.contains(piece))
      throw ConfigError("forced piece '" + piece + "' missing from vocabulary");
}

void TokenizerModel::build_index() {
  index_.clear();
  max_piece_chars_ = 1;
  for (std::size_t id = kNumSpecials; id < pieces_.size(); ++id) {
    const auto& [text, log_prob] = pieces_[id];
    if (text.empty()) throw ConfigError("empty tokenizer piece");
    if (log_prob > 0.0)
      throw ConfigError("piece '" + text + "' has positive log-probability");
    if (!index_.emplace(text, static_cast<std::int32_t>(id)).second)
      throw ConfigError("duplicate tokenizer piece '" + text + "'");
    max_piece_chars_ = std::max(max_piece_chars_, utf8_length(text));
  }
}

std::int32_t TokenizerModel::piece_id(std::string_view piece) const {
  const auto it = index_.find(piece);
  return it == index_.end() ? -1 : it->second;
}

const std::string& TokenizerModel::piece_text(std::int32_t id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= pieces_.size())
    throw ValidationError("token id " + std::to_string(id) + " out of range");
  return pieces_[static_cast<std::size_t>(id)].first;
}

double TokenizerModel::piece_log_prob(std::int32_t id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= pieces_.size())
    throw ValidationError("token id " + std::to_string(id) + " out of range");
  return pieces_[static_cast<std::size_t>(id)].second;
}

std::vector<std::int32_t> TokenizerModel::encode_word(std::string_view word) const {
  const std::string marked = std::string(kWordMarker) + std::string(word);
  const std::vector<std::string> chars = utf8_chars(marked);
  const std::size_t n = chars.size();

  // Suffix DP: best[i] scores the best segmentation of chars[i..n). Ties
  // pick the lexicographically smallest piece at the earliest position,
  // which yields the lexicographically first piece sequence overall.
  struct Cell {
    double score = kNegInf;
    std::int32_t id = -1;
    std::size_t next = 0;
  };
  std::vector<Cell> dp(n + 1);
  dp[n].score = 0.0;

  for (std::size_t i = n; i-- > 0;) {
    std::string candidate;
    bool matched = false;
    for (std::size_t len = 1; len <= max_piece_chars_ && i + len <= n; ++len) {
      candidate += chars[i + len - 1];
      const std::int32_t id = piece_id(candidate);
      if (id < 0) continue;
      matched = true;
      if (dp[i + len].score == kNegInf) continue;
      const double score = pieces_[static_cast<std::size_t>(id)].second +
                           dp[i + len].score;
      const bool better =
          score > dp[i].score ||
          (score == dp[i].score && dp[i].id >= 0 &&
           candidate < pieces_[static_cast<std::size_t>(dp[i].id)].first);
      if (better) {
        dp[i].score = score;
        dp[i].id = id;
        dp[i].next = i + len;
      }
    }
    if (!matched) {
      dp[i].score = kUnkScore + dp[i + 1].score;
      dp[i].id = kUnkId;
      dp[i].next = i + 1;
    }
  }

  std::vector<std::int32_t> out;
  std::size_t i = 0;
  while (i < n) {
    out.push_back(dp[i].id);
    i = dp[i].next;
  }
  return out;
}

std::vector<std::int32_t> TokenizerModel::encode(std::string_view text) const {
  std::vector<std::int32_t> out;
  std::istringstream stream{std::string(text)};
  std::string word;
  while (stream >> word) {
    const auto ids = encode_word(word);
    out.insert(out.end(), ids.begin(), ids.end());
  }
  return out;
}

std::string TokenizerModel::decode(std::span<const std::int32_t> ids) const {
  std::string joined;
  for (const std::int32_t id : ids) {
    if (id == kPadId || id == kBosId || id == kEosId) continue;
    joined += piece_text(id);
  }
  // Marker -> space, then drop the leading space of the first word.
  std::string out;
  std::size_t i = 0;
  while (i < joined.size()) {
    if (joined.compare(i, kWordMarker.size(), kWordMarker) == 0) {
      if (!out.empty()) out.push_back(' ');
      i += kWordMarker.size();
    } else {
      out.push_back(joined[i]);
      ++i;
    }
  }
  return out;
}

std::string TokenizerModel::serialize() const {
  std::string out;
  for (std::size_t id = 0; id < pieces_.size(); ++id) {
    const auto& [text, log_prob] = pieces_[id];
    if (id < kNumSpecials) {
      out += text;
    } else {
      out += text;
      out.push_back('\t');
      out += format_log_prob(log_prob);
    }
    out.push_back('\n');
  }
  return out;
}

void TokenizerModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write tokenizer model " + path.string());
  out << serialize();
  out.close();
  if (!out) throw IoError("write failed for " + path.string());
}

TokenizerModel TokenizerModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open tokenizer model " + path.string());
  std::string line;
  std::size_t lineno = 0;
  std::vector<std::pair<std::string, double>> pieces;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno <= kNumSpecials) {
      if (line != special_pieces()[lineno - 1])
        throw ValidationError(path.string() + ": bad specials header at line " +
                              std::to_string(lineno));
      continue;
    }
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos)
      throw ValidationError(path.string() + ":" + std::to_string(lineno) +
                            ": expected piece<TAB>log_prob");
    const std::string piece = line.substr(0, tab);
    double log_prob = 0.0;
    const char* begin = line.data() + tab + 1;
    const char* end = line.data() + line.size();
    const auto [ptr, ec] = std::from_chars(begin, end, log_prob);
    if (ec != std::errc{} || ptr != end)
      throw ValidationError(path.string() + ":" + std::to_string(lineno) +
                            ": malformed log-probability");
    pieces.emplace_back(piece, log_prob);
  }
  if (lineno < kNumSpecials)
    throw ValidationError(path.string() + ": truncated specials header");
  return TokenizerModel(std::move(pieces), {});
}

std::string TokenizerModel::fingerprint() const { return sha256_hex(serialize()); }

}  // namespace dforge::tok
