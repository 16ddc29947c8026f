#include "dforge/pretrain/masking.hpp"

#include <cmath>

namespace dforge::pretrain {

void MaskingPolicy::validate() const {
  if (!(select_prob > 0.0) || select_prob >= 1.0 + 1e-12)
    throw ConfigError("select_prob must lie in (0, 1]");
  if (std::abs(mask_prob + keep_prob + random_prob - 1.0) > 1e-9)
    throw ConfigError("mask/keep/random probabilities must sum to 1");
  if (mask_prob < 0.0 || keep_prob < 0.0 || random_prob < 0.0)
    throw ConfigError("masking probabilities must be non-negative");
  if (n_specials < 1) throw ConfigError("n_specials must be >= 1");
}

MaskedBatchRow apply_masking(std::span<const std::int32_t> token_ids,
                             const MaskingPolicy& policy,
                             std::int32_t vocab_size, Rng& rng) {
  policy.validate();
  if (vocab_size <= policy.n_specials)
    throw ConfigError("vocab_size leaves no non-special tokens");

  bool any_maskable = false;
  for (const std::int32_t id : token_ids)
    if (id >= policy.n_specials) any_maskable = true;
  if (!any_maskable)
    throw ValidationError("sequence contains no maskable (non-special) token");

  MaskedBatchRow row;
  row.input_ids.assign(token_ids.begin(), token_ids.end());
  row.labels.assign(token_ids.size(), enc::kIgnoreLabel);

  const std::int32_t n_pieces = vocab_size - policy.n_specials;
  for (std::size_t t = 0; t < token_ids.size(); ++t) {
    const std::int32_t id = token_ids[t];
    if (id < policy.n_specials) continue;  // specials are never selected
    if (!rng.bernoulli(policy.select_prob)) continue;
    row.labels[t] = id;
    const double u = rng.real01();
    if (u < policy.mask_prob) {
      row.input_ids[t] = tok::kMaskId;
    } else if (u < policy.mask_prob + policy.keep_prob) {
      // kept unchanged
    } else {
      row.input_ids[t] =
          policy.n_specials +
          static_cast<std::int32_t>(rng.below(static_cast<std::uint64_t>(n_pieces)));
    }
  }
  return row;
}

}  // namespace dforge::pretrain
