#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dforge/corpus/types.hpp"
#include "dforge/tokenizer/model.hpp"

namespace dforge::pretrain {

// Tokenized training sequences: <s> ... </s>, each at most max_len ids, long
// texts split into consecutive chunks. Carries the tokenizer fingerprint so
// checkpoints can refuse mismatched data.
struct SequenceDataset {
  std::vector<std::vector<std::int32_t>> sequences;
  std::string tokenizer_fingerprint;

  static SequenceDataset build(const std::vector<corpus::TextExample>& records,
                               const tok::TokenizerModel& tokenizer, int max_len);
  static SequenceDataset build_from_texts(const std::vector<std::string>& texts,
                                          const tok::TokenizerModel& tokenizer,
                                          int max_len);

  std::size_t size() const { return sequences.size(); }
};

// Deterministic batch schedule: sequences are bucketed by length into batches
// of at most batch_tokens padded tokens, and batch order is reshuffled each
// epoch from the seed. batch_for_step is a pure function of (seed, step), so
// resumed runs replay the identical schedule.
class BatchPlan {
 public:
  BatchPlan(const SequenceDataset& dataset, std::int64_t batch_tokens,
            std::uint64_t seed);

  std::size_t batches_per_epoch() const { return batches_.size(); }
  const std::vector<std::size_t>& batch_for_step(std::int64_t step) const;

 private:
  std::vector<std::vector<std::size_t>> batches_;
  std::uint64_t seed_;
  mutable std::int64_t cached_epoch_ = -1;
  mutable std::vector<std::size_t> order_;
};

}  // namespace dforge::pretrain
