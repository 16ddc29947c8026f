#pragma once

#include <filesystem>
#include <vector>

#include "dforge/encoder/checkpoint.hpp"
#include "dforge/pretrain/data.hpp"
#include "dforge/pretrain/masking.hpp"
#include "dforge/pretrain/schedule.hpp"

namespace dforge::pretrain {

struct MetricsRecord {
  std::int64_t step = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_perplexity = 0.0;
};

struct TrainResult {
  std::filesystem::path final_checkpoint;
  std::vector<std::filesystem::path> checkpoints;
  std::vector<MetricsRecord> log;
};

enc::Checkpoint make_initial_checkpoint(const enc::EncoderConfig& config,
                                        std::uint64_t seed,
                                        const std::string& tokenizer_fingerprint,
                                        const std::string& stage = "stage1");

// Masked-language-model training loop: masking -> forward -> loss ->
// backward -> clipped AdamW per batch. Emits checkpoints under
// out_dir/step_NNNNNN, appends one metrics record per eval interval, and is
// exactly resumable: every step derives its masking/dropout streams and
// batch order from (seed, step) alone.
TrainResult train_mlm(const enc::Checkpoint& init, const SequenceDataset& train,
                      const SequenceDataset& val, const TrainConfig& config,
                      const std::filesystem::path& out_dir,
                      const MaskingPolicy& policy = {});

// Same loop, continued from a Stage 1 checkpoint on the mixed in-domain
// corpus. The optimizer state is reinitialized and the step counter/schedule
// restart; checkpoint metadata is stamped stage2.
TrainResult stage2_continue(const std::filesystem::path& stage1_checkpoint,
                            const SequenceDataset& mix_train,
                            const SequenceDataset& val, const TrainConfig& config,
                            const std::filesystem::path& out_dir,
                            const MaskingPolicy& policy = {});

}  // namespace dforge::pretrain
