#pragma once

#include <filesystem>
#include <vector>

#include "dforge/corpus/types.hpp"
#include "dforge/encoder/checkpoint.hpp"
#include "dforge/evaluate/metrics.hpp"
#include "dforge/tokenizer/model.hpp"

namespace dforge::finetune {

enum class Mode { full, frozen };

struct FinetuneConfig {
  Mode mode = Mode::full;
  double peak_lr = 0.0;  // 0 picks the default: 2e-5 full, 1e-3 frozen
  int batch_size = 16;
  int epochs = 10;
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  int patience = 0;  // early stop on val exact match; 0 disables
  int head_hidden = 256;
  double dropout = 0.1;
  double grad_clip = 1.0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.99;
  double adam_eps = 1e-8;

  double effective_lr() const {
    if (peak_lr > 0.0) return peak_lr;
    return mode == Mode::full ? 2e-5 : 1e-3;
  }
};

// Encoder + classification heads + frozen label tables.
struct NluModelBundle {
  enc::ParameterSet<float> params;
  enc::EncoderConfig config;
  std::string tokenizer_fingerprint;
  std::vector<std::string> intent_labels;
  std::vector<std::string> slot_labels;  // BIO tag strings, includes "O"

  std::int32_t intent_id(const std::string& name) const;
  std::int32_t slot_id(const std::string& tag) const;

  void save(const std::filesystem::path& dir) const;
  static NluModelBundle load(const std::filesystem::path& dir);
};

// Tokenized task example. Slot supervision sits on the first subword of each
// word; other positions carry kIgnoreLabel.
struct EncodedNlu {
  std::vector<std::int32_t> ids;          // <s> ... </s>
  std::vector<std::int32_t> slot_labels;  // aligned to ids
  std::int32_t intent = 0;
  std::vector<std::size_t> word_first_pos;
};

EncodedNlu encode_nlu_example(const corpus::NluExample& example,
                              const tok::TokenizerModel& tokenizer,
                              const NluModelBundle& bundle);

// Tag/intent inventories derived from a training split (sorted, "O" always
// present in the slot table).
std::pair<std::vector<std::string>, std::vector<std::string>> derive_label_tables(
    const std::vector<corpus::NluExample>& train);

struct FinetuneMetrics {
  double exact_match_error = 0.0;
  double ic_error = 0.0;
  double sf_error = 0.0;
  double semer = 0.0;
};

struct FinetuneResult {
  std::vector<NluModelBundle> bundles;  // one per seed
  std::vector<FinetuneMetrics> per_seed;
  // Mean joint training loss per epoch, per seed.
  std::vector<std::vector<double>> epoch_losses;
  FinetuneMetrics mean;
  FinetuneMetrics stddev;
};

// Joint intent + slot fine-tuning (equal weights, Adam at a constant rate).
// Frozen mode updates only head parameters and verifies by checksum that the
// encoder tensors did not change.
FinetuneResult finetune(const enc::Checkpoint& base,
                        const std::vector<corpus::NluExample>& train,
                        const std::vector<corpus::NluExample>& val,
                        const FinetuneConfig& config,
                        const tok::TokenizerModel& tokenizer);

// Digest of the non-head tensors; the frozen-mode invariant.
std::string encoder_digest(const enc::ParameterSet<float>& params);

eval::Hypothesis predict(const NluModelBundle& bundle,
                         const tok::TokenizerModel& tokenizer,
                         const std::string& utterance);

std::vector<eval::Hypothesis> predict_all(
    const NluModelBundle& bundle, const tok::TokenizerModel& tokenizer,
    const std::vector<corpus::NluExample>& examples);

FinetuneMetrics evaluate_bundle(const NluModelBundle& bundle,
                                const tok::TokenizerModel& tokenizer,
                                const std::vector<corpus::NluExample>& examples);

}  // namespace dforge::finetune
