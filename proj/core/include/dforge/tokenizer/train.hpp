#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "dforge/tokenizer/model.hpp"

namespace dforge::tok {

// Unigram-LM trainer. Seed vocabulary: all in-word substrings of up to 8
// characters seen at least twice, scored by count; 4 EM rounds with 20% of
// the lowest-contribution pieces pruned per round until `vocab_size` pieces
// (specials included) remain. Single characters seen in training and forced
// pieces are never pruned.
TokenizerModel train_unigram(std::span<const std::string> corpus,
                             std::size_t vocab_size,
                             const std::set<std::string>& forced,
                             std::uint64_t seed);

struct TokenizerMetrics {
  double split_ratio = 0.0;  // output tokens per whitespace word
  double unk_portion = 0.0;  // unk tokens / output tokens
};

TokenizerMetrics measure_metrics(const TokenizerModel& model,
                                 std::span<const std::string> corpus);

struct VocabSweepResult {
  std::size_t chosen_size = 0;
  bool thresholds_met = false;
  std::vector<std::pair<std::size_t, TokenizerMetrics>> table;
  std::map<std::size_t, TokenizerModel> models;
};

// Trains at the largest size, derives each smaller size by continued
// contribution pruning (nested vocabularies), and returns the smallest size
// whose metrics satisfy both thresholds - or the largest size with
// thresholds_met=false when none do.
VocabSweepResult vocab_sweep(std::span<const std::string> corpus,
                             const std::vector<std::size_t>& sizes,
                             double max_split_ratio, double max_unk,
                             const std::set<std::string>& forced,
                             std::uint64_t seed);

}  // namespace dforge::tok
