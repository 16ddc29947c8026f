#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dforge/encoder/config.hpp"
#include "dforge/pretrain/schedule.hpp"

namespace dforge::distill {

struct HiddenMatchSpec {
  std::vector<std::pair<int, int>> layer_map;  // student -> teacher indices
  double weight = 1.0;
};

// Loss mixture for one distillation segment. mlm_ce weighs the hard
// categorical cross-entropy (against MLM labels, or gold task labels in
// task distillation); soft_ce weighs the soft cross-entropy against the
// teacher. Soft CE runs on masked positions unless soft_all_positions.
struct LossRecipe {
  double mlm_ce = 1.0;
  double soft_ce = 1.0;
  double temperature = 1.0;
  std::optional<HiddenMatchSpec> hidden;
  bool soft_all_positions = false;

  void validate() const;
};

struct DistillSegment {
  std::filesystem::path teacher_checkpoint;
  std::filesystem::path corpus_file;  // record-per-line corpus
  std::int64_t updates = 0;
  LossRecipe recipe;
};

// Ordered segments sharing one student. Teacher and corpus switch at segment
// boundaries without resetting student weights; the optimizer state and
// learning-rate schedule restart per segment.
struct DistillPlan {
  enc::EncoderConfig student;
  pretrain::TrainConfig train;
  std::vector<DistillSegment> segments;
  std::uint64_t seed = 1;

  void validate() const;
  void save(const std::filesystem::path& path) const;
  static DistillPlan load(const std::filesystem::path& path);
};

}  // namespace dforge::distill
