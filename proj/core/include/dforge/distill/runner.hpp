#pragma once

#include <filesystem>
#include <vector>

#include "dforge/distill/plan.hpp"
#include "dforge/finetune/finetune.hpp"
#include "dforge/pretrain/trainer.hpp"

namespace dforge::distill {

struct DistillLogRecord {
  std::int64_t step = 0;  // cumulative across segments
  int segment = 0;
  double lr = 0.0;
  double mlm_ce = 0.0;
  double soft_ce = 0.0;
  double hidden = 0.0;
  double total = 0.0;  // weighted sum of the components
};

struct DistillResult {
  std::filesystem::path final_checkpoint;
  std::vector<std::filesystem::path> checkpoints;
  std::vector<DistillLogRecord> log;
};

// Two-phase (or n-phase) distillation: a randomly initialized student is
// trained against each segment's teacher in order. Teacher and corpus switch
// at segment boundaries; student weights carry over unchanged, while the
// optimizer state and schedule restart per segment. Teachers run in eval
// mode and are never written to. `datasets` aligns with plan.segments.
DistillResult distill_run(const DistillPlan& plan,
                          const std::vector<pretrain::SequenceDataset>& datasets,
                          const std::filesystem::path& out_dir);

// Loads the per-segment corpora from the plan's corpus files.
DistillResult distill_run_files(const DistillPlan& plan,
                                const tok::TokenizerModel& tokenizer,
                                const std::filesystem::path& out_dir);

// Continued pretraining of the intermediate student without any teacher;
// delegates verbatim to the Stage-2 continuation loop.
pretrain::TrainResult teacherless_interlude(
    const std::filesystem::path& intermediate_checkpoint,
    const pretrain::SequenceDataset& stage2_only,
    const pretrain::SequenceDataset& val, const pretrain::TrainConfig& config,
    const std::filesystem::path& out_dir);

struct TaskDistillParams {
  int epochs = 10;
  int batch_size = 16;
  double lr = 1e-3;
  double dropout = 0.1;
  double grad_clip = 1.0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.99;
  double adam_eps = 1e-8;
  std::uint64_t seed = 1;
};

// Distills a task-fine-tuned teacher into a student on labeled data: soft
// cross-entropy over intent and per-token slot logits, optional hard CE on
// the gold labels (recipe.mlm_ce), and hidden matching per the recipe's
// layer map. Returns the student as a task bundle sharing the teacher's
// label tables.
finetune::NluModelBundle distill_task(const finetune::NluModelBundle& teacher,
                                      const enc::Checkpoint& student_base,
                                      const std::vector<corpus::NluExample>& train,
                                      const LossRecipe& recipe,
                                      const TaskDistillParams& params,
                                      const tok::TokenizerModel& tokenizer);

}  // namespace dforge::distill
