#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dforge/common/rng.hpp"
#include "dforge/encoder/losses.hpp"
#include "dforge/tokenizer/model.hpp"

namespace dforge::pretrain {

// Masked-language-model corruption policy: 15% of non-special positions are
// selected; of those, 80% become the mask token, 10% stay unchanged, and 10%
// become a uniformly random non-special token.
struct MaskingPolicy {
  double select_prob = 0.15;
  double mask_prob = 0.80;
  double keep_prob = 0.10;
  double random_prob = 0.10;
  std::int32_t n_specials = tok::kNumSpecials;

  void validate() const;
};

struct MaskedBatchRow {
  std::vector<std::int32_t> input_ids;
  std::vector<std::int32_t> labels;  // original id at selected positions,
                                     // kIgnoreLabel elsewhere
};

// Requires at least one maskable (non-special) token. Pass a vocab_size so
// random replacements stay in range.
MaskedBatchRow apply_masking(std::span<const std::int32_t> token_ids,
                             const MaskingPolicy& policy,
                             std::int32_t vocab_size, Rng& rng);

}  // namespace dforge::pretrain
