#include "dforge/tokenizer/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "dforge/common/error.hpp"
#include "dforge/common/utf8.hpp"

namespace dforge::tok {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr std::size_t kMaxPieceChars = 8;
constexpr int kEmRounds = 4;
constexpr double kPruneFraction = 0.2;
constexpr double kMinProtectedCount = 1e-6;

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

// Marker-prefixed distinct words with frequencies, in first-seen order kept
// deterministic via the ordered map.
std::map<std::string, std::uint64_t> word_frequencies(
    std::span<const std::string> corpus) {
  std::map<std::string, std::uint64_t> freqs;
  for (const auto& text : corpus) {
    std::istringstream stream(text);
    std::string word;
    while (stream >> word) ++freqs[std::string(kWordMarker) + word];
  }
  return freqs;
}

struct Candidates {
  // piece -> count (double: EM produces fractional expected counts)
  std::map<std::string, double> counts;
  std::set<std::string> protected_pieces;  // singles + forced
};

Candidates seed_candidates(const std::map<std::string, std::uint64_t>& words,
                           const std::set<std::string>& forced) {
  std::map<std::string, double> raw;
  std::set<std::string> singles;
  for (const auto& [word, freq] : words) {
    const auto chars = utf8_chars(word);
    for (std::size_t i = 0; i < chars.size(); ++i) {
      std::string piece;
      for (std::size_t len = 1; len <= kMaxPieceChars && i + len <= chars.size();
           ++len) {
        piece += chars[i + len - 1];
        raw[piece] += static_cast<double>(freq);
        if (len == 1) singles.insert(piece);
      }
    }
  }

  Candidates out;
  out.protected_pieces = singles;
  for (const auto& piece : forced) out.protected_pieces.insert(piece);
  for (const auto& [piece, count] : raw) {
    if (count >= 2.0 || out.protected_pieces.contains(piece))
      out.counts[piece] = count;
  }
  for (const auto& piece : out.protected_pieces) {
    auto [it, inserted] = out.counts.emplace(piece, kMinProtectedCount);
    if (it->second <= 0.0) it->second = kMinProtectedCount;
  }
  return out;
}

struct Lattice {
  // Log-probabilities for the current piece inventory.
  const std::map<std::string, double>* log_probs;
  std::size_t max_chars;
};

// Expected piece counts over all segmentations (forward-backward over the
// segmentation lattice), accumulated into `expected`.
void accumulate_expected_counts(const std::string& word, double freq,
                                const Lattice& lattice,
                                std::map<std::string, double>& expected) {
  const auto chars = utf8_chars(word);
  const std::size_t n = chars.size();

  struct Arc {
    std::size_t from;
    std::size_t to;
    const std::string* piece;
    double log_prob;
  };
  std::vector<Arc> arcs;
  for (std::size_t i = 0; i < n; ++i) {
    std::string piece;
    for (std::size_t len = 1; len <= lattice.max_chars && i + len <= n; ++len) {
      piece += chars[i + len - 1];
      const auto it = lattice.log_probs->find(piece);
      if (it == lattice.log_probs->end()) continue;
      arcs.push_back({i, i + len, &it->first, it->second});
    }
  }

  std::vector<double> alpha(n + 1, kNegInf);
  std::vector<double> beta(n + 1, kNegInf);
  alpha[0] = 0.0;
  for (const Arc& arc : arcs)
    alpha[arc.to] = log_add(alpha[arc.to], alpha[arc.from] + arc.log_prob);
  beta[n] = 0.0;
  for (auto it = arcs.rbegin(); it != arcs.rend(); ++it)
    beta[it->from] = log_add(beta[it->from], beta[it->to] + it->log_prob);

  const double total = alpha[n];
  if (total == kNegInf) return;  // unreachable: singles are always present
  for (const Arc& arc : arcs) {
    const double posterior =
        std::exp(alpha[arc.from] + arc.log_prob + beta[arc.to] - total);
    expected[*arc.piece] += posterior * freq;
  }
}

std::map<std::string, double> normalize(const std::map<std::string, double>& counts) {
  double total = 0.0;
  for (const auto& [piece, count] : counts) total += count;
  std::map<std::string, double> log_probs;
  for (const auto& [piece, count] : counts)
    log_probs[piece] = std::log(count / total);
  return log_probs;
}

std::map<std::string, double> e_step(const std::map<std::string, std::uint64_t>& words,
                                     const Candidates& cands, std::size_t max_chars) {
  const auto log_probs = normalize(cands.counts);
  Lattice lattice{&log_probs, max_chars};
  std::map<std::string, double> expected;
  for (const auto& [word, freq] : words)
    accumulate_expected_counts(word, static_cast<double>(freq), lattice, expected);
  return expected;
}

void apply_expected_counts(Candidates& cands,
                           const std::map<std::string, double>& expected) {
  for (auto& [piece, count] : cands.counts) {
    const auto it = expected.find(piece);
    count = it == expected.end() ? 0.0 : it->second;
    if (cands.protected_pieces.contains(piece))
      count = std::max(count, kMinProtectedCount);
  }
  // Unused, unprotected pieces drop out immediately.
  std::erase_if(cands.counts, [&](const auto& entry) {
    return entry.second <= 0.0 &&
           !cands.protected_pieces.contains(entry.first);
  });
}

// Removes up to `limit` of the lowest-count unprotected pieces.
void prune(Candidates& cands, std::size_t target, double fraction) {
  if (cands.counts.size() <= target) return;
  std::vector<std::pair<double, const std::string*>> order;
  for (const auto& [piece, count] : cands.counts) {
    if (!cands.protected_pieces.contains(piece)) order.emplace_back(count, &piece);
  }
  std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first < b.first;
    return *a.second < *b.second;
  });
  const std::size_t over = cands.counts.size() - target;
  std::size_t to_drop = std::min(
      over, std::max<std::size_t>(
                1, static_cast<std::size_t>(fraction * cands.counts.size())));
  to_drop = std::min(to_drop, order.size());
  for (std::size_t k = 0; k < to_drop; ++k) cands.counts.erase(*order[k].second);
}

TokenizerModel finalize(const Candidates& cands, const std::set<std::string>& forced) {
  // Forced pieces get at least the minimum retained count before the final
  // normalization.
  std::map<std::string, double> counts = cands.counts;
  double min_retained = std::numeric_limits<double>::infinity();
  for (const auto& [piece, count] : counts)
    if (count > 0.0) min_retained = std::min(min_retained, count);
  for (const auto& piece : forced) {
    auto it = counts.find(piece);
    if (it != counts.end()) it->second = std::max(it->second, min_retained);
  }
  const auto log_probs = normalize(counts);
  std::vector<std::pair<std::string, double>> pieces(log_probs.begin(),
                                                     log_probs.end());
  return TokenizerModel(std::move(pieces), forced);
}

std::size_t piece_target(std::size_t vocab_size) {
  return vocab_size - static_cast<std::size_t>(kNumSpecials);
}

void check_feasible(std::size_t vocab_size, const Candidates& cands) {
  const std::size_t required = cands.protected_pieces.size() +
                               static_cast<std::size_t>(kNumSpecials);
  if (vocab_size <= required)
    throw ConfigError("vocab_size " + std::to_string(vocab_size) +
                      " cannot cover " + std::to_string(required) +
                      " protected pieces and specials");
  if (cands.counts.size() < piece_target(vocab_size))
    throw ConfigError("vocab_size " + std::to_string(vocab_size) +
                      " exceeds the " + std::to_string(cands.counts.size()) +
                      " candidate pieces available from the corpus");
}

}  // namespace

TokenizerModel train_unigram(std::span<const std::string> corpus,
                             std::size_t vocab_size,
                             const std::set<std::string>& forced,
                             std::uint64_t /*seed*/) {
  const auto words = word_frequencies(corpus);
  if (words.empty()) throw ValidationError("tokenizer corpus is empty");

  Candidates cands = seed_candidates(words, forced);
  check_feasible(vocab_size, cands);
  const std::size_t target = piece_target(vocab_size);

  for (int round = 0; round < kEmRounds; ++round) {
    const auto expected = e_step(words, cands, kMaxPieceChars);
    apply_expected_counts(cands, expected);
    prune(cands, target, kPruneFraction);
  }
  while (cands.counts.size() > target) {
    const auto expected = e_step(words, cands, kMaxPieceChars);
    apply_expected_counts(cands, expected);
    prune(cands, target, kPruneFraction);
  }
  return finalize(cands, forced);
}

TokenizerMetrics measure_metrics(const TokenizerModel& model,
                                 std::span<const std::string> corpus) {
  if (corpus.empty()) throw ValidationError("metrics corpus is empty");
  std::uint64_t tokens = 0;
  std::uint64_t unks = 0;
  std::uint64_t words = 0;
  for (const auto& text : corpus) {
    std::istringstream stream(text);
    std::string word;
    while (stream >> word) {
      ++words;
      for (const std::int32_t id : model.encode_word(word)) {
        ++tokens;
        if (id == kUnkId) ++unks;
      }
    }
  }
  if (words == 0) throw ValidationError("metrics corpus contains no words");
  TokenizerMetrics metrics;
  metrics.split_ratio = static_cast<double>(tokens) / static_cast<double>(words);
  metrics.unk_portion =
      tokens == 0 ? 0.0 : static_cast<double>(unks) / static_cast<double>(tokens);
  return metrics;
}

VocabSweepResult vocab_sweep(std::span<const std::string> corpus,
                             const std::vector<std::size_t>& sizes,
                             double max_split_ratio, double max_unk,
                             const std::set<std::string>& forced,
                             std::uint64_t seed) {
  if (sizes.empty()) throw ValidationError("vocab_sweep requires at least one size");
  if (!std::is_sorted(sizes.begin(), sizes.end()))
    throw ValidationError("vocab_sweep sizes must be ascending");

  const auto words = word_frequencies(corpus);
  if (words.empty()) throw ValidationError("tokenizer corpus is empty");

  VocabSweepResult result;
  TokenizerModel largest = train_unigram(corpus, sizes.back(), forced, seed);
  result.models.emplace(sizes.back(), std::move(largest));

  // Derive smaller sizes by continued pruning from the next larger model.
  for (std::size_t k = sizes.size() - 1; k-- > 0;) {
    const TokenizerModel& parent = result.models.at(sizes[k + 1]);
    Candidates cands;
    cands.protected_pieces = parent.forced();
    for (std::size_t id = kNumSpecials; id < parent.pieces().size(); ++id) {
      const auto& [piece, log_prob] = parent.pieces()[id];
      cands.counts[piece] = std::exp(log_prob);
      if (utf8_length(piece) == 1) cands.protected_pieces.insert(piece);
    }
    check_feasible(sizes[k], cands);
    const std::size_t target = piece_target(sizes[k]);
    while (cands.counts.size() > target) {
      const auto expected = e_step(words, cands, kMaxPieceChars);
      apply_expected_counts(cands, expected);
      prune(cands, target, kPruneFraction);
    }
    result.models.emplace(sizes[k], finalize(cands, parent.forced()));
  }

  result.chosen_size = sizes.back();
  result.thresholds_met = false;
  for (const std::size_t size : sizes) {
    const TokenizerMetrics metrics =
        measure_metrics(result.models.at(size), corpus);
    result.table.emplace_back(size, metrics);
    if (!result.thresholds_met && metrics.split_ratio <= max_split_ratio &&
        metrics.unk_portion <= max_unk) {
      result.chosen_size = size;
      result.thresholds_met = true;
    }
  }
  return result;
}

}  // namespace dforge::tok
