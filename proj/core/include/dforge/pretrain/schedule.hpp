#pragma once

#include <cstdint>
#include <string>

namespace dforge::pretrain {

enum class WarmupShape { exponential, linear };

// Optimization hyperparameters. Learning rate: warmup from min_lr to peak_lr
// over warmup_steps (geometric for exponential, affine for linear), then
// affine decay back to min_lr over decay_steps, then constant.
struct TrainConfig {
  double peak_lr = 1e-3;
  double min_lr = 1e-5;
  std::int64_t warmup_steps = 100;
  std::int64_t decay_steps = 2000;
  WarmupShape warmup_shape = WarmupShape::exponential;
  std::int64_t batch_tokens = 4096;
  std::int64_t max_steps = 1000;
  double weight_decay = 0.1;
  double grad_clip = 1.0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.99;
  double adam_eps = 1e-8;
  double dropout = 0.1;
  std::uint64_t seed = 1;
  std::int64_t eval_interval = 200;
  std::int64_t checkpoint_interval = 0;  // 0: only the final checkpoint

  void validate() const;
  std::string to_json_string() const;
  static TrainConfig from_json_string(const std::string& text);
};

double lr_at(const TrainConfig& config, std::int64_t step);

}  // namespace dforge::pretrain
