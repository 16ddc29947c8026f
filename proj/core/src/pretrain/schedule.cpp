#include "dforge/pretrain/schedule.hpp"

#include <cmath>

#include <json.hpp>

#include "dforge/common/error.hpp"

namespace dforge::pretrain {

using json = nlohmann::json;

void TrainConfig::validate() const {
  if (!(peak_lr > 0.0)) throw ConfigError("peak_lr must be positive");
  if (!(min_lr > 0.0)) throw ConfigError("min_lr must be positive");
  if (min_lr > peak_lr) throw ConfigError("min_lr must not exceed peak_lr");
  if (warmup_steps < 0) throw ConfigError("warmup_steps must be >= 0");
  if (decay_steps < 0) throw ConfigError("decay_steps must be >= 0");
  if (!(grad_clip > 0.0)) throw ConfigError("grad_clip must be positive");
  if (batch_tokens < 1) throw ConfigError("batch_tokens must be >= 1");
  if (max_steps < 0) throw ConfigError("max_steps must be >= 0");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must lie in [0, 1)");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) ||
      !(adam_beta2 >= 0.0 && adam_beta2 < 1.0) || !(adam_eps > 0.0))
    throw ConfigError("invalid Adam parameters");
}

double lr_at(const TrainConfig& config, std::int64_t step) {
  if (step < 0) throw ValidationError("step must be >= 0");
  if (step < config.warmup_steps) {
    const double t = static_cast<double>(step) /
                     static_cast<double>(config.warmup_steps);
    if (config.warmup_shape == WarmupShape::exponential)
      return config.min_lr * std::pow(config.peak_lr / config.min_lr, t);
    return config.min_lr + (config.peak_lr - config.min_lr) * t;
  }
  if (config.decay_steps == 0) return config.min_lr;
  const double t = static_cast<double>(step - config.warmup_steps) /
                   static_cast<double>(config.decay_steps);
  if (t >= 1.0) return config.min_lr;
  return config.peak_lr + (config.min_lr - config.peak_lr) * t;
}

std::string TrainConfig::to_json_string() const {
  json doc{{"peak_lr", peak_lr},
           {"min_lr", min_lr},
           {"warmup_steps", warmup_steps},
           {"decay_steps", decay_steps},
           {"warmup_shape",
            warmup_shape == WarmupShape::exponential ? "exponential" : "linear"},
           {"batch_tokens", batch_tokens},
           {"max_steps", max_steps},
           {"weight_decay", weight_decay},
           {"grad_clip", grad_clip},
           {"adam_beta1", adam_beta1},
           {"adam_beta2", adam_beta2},
           {"adam_eps", adam_eps},
           {"dropout", dropout},
           {"seed", seed},
           {"eval_interval", eval_interval},
           {"checkpoint_interval", checkpoint_interval}};
  return doc.dump(2);
}

TrainConfig TrainConfig::from_json_string(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  TrainConfig config;
  try {
    config.peak_lr = doc.value("peak_lr", config.peak_lr);
    config.min_lr = doc.value("min_lr", config.min_lr);
    config.warmup_steps = doc.value("warmup_steps", config.warmup_steps);
    config.decay_steps = doc.value("decay_steps", config.decay_steps);
    const std::string shape = doc.value("warmup_shape", "exponential");
    if (shape == "exponential")
      config.warmup_shape = WarmupShape::exponential;
    else if (shape == "linear")
      config.warmup_shape = WarmupShape::linear;
    else
      throw ConfigError("unknown warmup_shape '" + shape + "'");
    config.batch_tokens = doc.value("batch_tokens", config.batch_tokens);
    config.max_steps = doc.value("max_steps", config.max_steps);
    config.weight_decay = doc.value("weight_decay", config.weight_decay);
    config.grad_clip = doc.value("grad_clip", config.grad_clip);
    config.adam_beta1 = doc.value("adam_beta1", config.adam_beta1);
    config.adam_beta2 = doc.value("adam_beta2", config.adam_beta2);
    config.adam_eps = doc.value("adam_eps", config.adam_eps);
    config.dropout = doc.value("dropout", config.dropout);
    config.seed = doc.value("seed", config.seed);
    config.eval_interval = doc.value("eval_interval", config.eval_interval);
    config.checkpoint_interval =
        doc.value("checkpoint_interval", config.checkpoint_interval);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  config.validate();
  return config;
}

}  // namespace dforge::pretrain
