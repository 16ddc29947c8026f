#include "dforge/pretrain/trainer.hpp"

#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "dforge/evaluate/metrics.hpp"
#include "dforge/pretrain/adam.hpp"

namespace dforge::pretrain {

namespace {

std::filesystem::path step_dir(const std::filesystem::path& out_dir,
                               std::int64_t step) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "step_%06lld", static_cast<long long>(step));
  return out_dir / buf;
}

AdamState<float> adam_from_checkpoint(const enc::Checkpoint& ckpt,
                                      const enc::ParameterSet<float>& params) {
  AdamState<float> state = AdamState<float>::zero_like(params);
  if (ckpt.optim.empty()) return state;
  const auto t_it = ckpt.optim.find("adam.t");
  if (t_it != ckpt.optim.end())
    state.t = static_cast<std::int64_t>(t_it->second(0, 0));
  for (const auto& [name, tensor] : params.tensors) {
    const auto m_it = ckpt.optim.find("adam.m." + name);
    const auto v_it = ckpt.optim.find("adam.v." + name);
    if (m_it != ckpt.optim.end()) state.m.at(name) = m_it->second;
    if (v_it != ckpt.optim.end()) state.v.at(name) = v_it->second;
  }
  return state;
}

std::map<std::string, enc::Mat<float>> adam_to_tensors(
    const AdamState<float>& state) {
  std::map<std::string, enc::Mat<float>> out;
  enc::Mat<float> t(1, 1);
  t(0, 0) = static_cast<float>(state.t);
  out.emplace("adam.t", std::move(t));
  for (const auto& [name, tensor] : state.m.tensors)
    out.emplace("adam.m." + name, tensor);
  for (const auto& [name, tensor] : state.v.tensors)
    out.emplace("adam.v." + name, tensor);
  return out;
}

void append_metrics(const std::filesystem::path& out_dir,
                    const MetricsRecord& record) {
  std::ofstream out(out_dir / "metrics.jsonl", std::ios::app);
  if (!out) throw IoError("cannot append metrics log in " + out_dir.string());
  nlohmann::json doc{{"step", record.step},
                     {"lr", record.lr},
                     {"train_loss", record.train_loss},
                     {"val_perplexity", record.val_perplexity}};
  out << doc.dump() << '\n';
}

}  // namespace

enc::Checkpoint make_initial_checkpoint(const enc::EncoderConfig& config,
                                        std::uint64_t seed,
                                        const std::string& tokenizer_fingerprint,
                                        const std::string& stage) {
  enc::Checkpoint ckpt;
  ckpt.config = config;
  ckpt.params = enc::init_params<float>(config, seed);
  ckpt.tokenizer_fingerprint = tokenizer_fingerprint;
  enc::CheckpointMeta meta;
  meta.step = 0;
  meta.stage = stage;
  ckpt.meta = meta;
  return ckpt;
}

TrainResult train_mlm(const enc::Checkpoint& init, const SequenceDataset& train,
                      const SequenceDataset& val, const TrainConfig& config,
                      const std::filesystem::path& out_dir,
                      const MaskingPolicy& policy) {
  config.validate();
  policy.validate();
  if (!init.tokenizer_fingerprint.empty() &&
      init.tokenizer_fingerprint != train.tokenizer_fingerprint)
    throw ConfigError(
        "tokenizer fingerprint mismatch between checkpoint and dataset");

  std::filesystem::create_directories(out_dir);

  enc::EncoderConfig net_cfg = init.config;
  net_cfg.dropout = config.dropout;

  enc::ParameterSet<float> params = init.params;
  AdamState<float> adam = adam_from_checkpoint(init, params);
  std::int64_t start_step = init.meta.has_value() ? init.meta->step : 0;
  const std::string stage = init.meta.has_value() ? init.meta->stage : "stage1";
  double loss_ema = init.meta.has_value() ? init.meta->loss_ema : 0.0;
  bool ema_started = start_step > 0;

  TrainResult result;

  const auto save_at = [&](std::int64_t step) {
    enc::Checkpoint ckpt;
    ckpt.params = params;
    ckpt.config = init.config;
    ckpt.tokenizer_fingerprint = train.tokenizer_fingerprint;
    enc::CheckpointMeta meta;
    meta.step = step;
    meta.stage = stage;
    meta.loss_ema = loss_ema;
    meta.train_config_json = config.to_json_string();
    meta.rng_states = {{"train", std::to_string(config.seed)}};
    ckpt.meta = meta;
    ckpt.optim = adam_to_tensors(adam);
    const auto dir = step_dir(out_dir, step);
    enc::save_checkpoint(dir, ckpt);
    result.checkpoints.push_back(dir);
    result.final_checkpoint = dir;
  };

  if (config.max_steps == 0 || start_step >= config.max_steps) {
    save_at(start_step);
    return result;
  }

  BatchPlan plan(train, config.batch_tokens, config.seed);
  const MaskingPolicy eval_policy = policy;

  for (std::int64_t step = start_step; step < config.max_steps; ++step) {
    const double lr = lr_at(config, step);
    const auto& batch = plan.batch_for_step(step);

    Rng mask_rng(mix_seed(config.seed, "mask", static_cast<std::uint64_t>(step)));
    Rng drop_rng(mix_seed(config.seed, "dropout", static_cast<std::uint64_t>(step)));

    enc::ParameterSet<float> grads = enc::zeros_like(params);
    double ce_sum = 0.0;
    long label_count = 0;
    for (const std::size_t idx : batch) {
      const auto& seq = train.sequences[idx];
      const MaskedBatchRow row =
          apply_masking(seq, policy, net_cfg.vocab_size, mask_rng);
      enc::ForwardCache<float> cache;
      const auto trace =
          enc::forward<float>(params, net_cfg, row.input_ids, {},
                              enc::RunMode::train, &drop_rng, &cache);
      auto lg = enc::cross_entropy_sum(trace.mlm_logits, row.labels);
      if (lg.count == 0) continue;
      ce_sum += lg.value;
      label_count += lg.count;
      enc::TraceGrads<float> tg;
      tg.d_mlm_logits = std::move(lg.d_logits);
      enc::axpy(grads, enc::backward(params, net_cfg, cache, tg));
    }

    double batch_loss = 0.0;
    if (label_count > 0) {
      batch_loss = ce_sum / static_cast<double>(label_count);
      for (auto& [name, tensor] : grads.tensors)
        tensor /= static_cast<float>(label_count);
      optimizer_step(params, std::move(grads), config, lr, adam);
      loss_ema = ema_started ? 0.99 * loss_ema + 0.01 * batch_loss : batch_loss;
      ema_started = true;
    }

    const std::int64_t done = step + 1;
    const bool last = done == config.max_steps;
    if (config.eval_interval > 0 &&
        (done % config.eval_interval == 0 || last)) {
      MetricsRecord record;
      record.step = done;
      record.lr = lr;
      record.train_loss = batch_loss;
      record.val_perplexity =
          eval::perplexity(params, init.config, val, eval_policy,
                           mix_seed(config.seed, "eval-mask"));
      append_metrics(out_dir, record);
      result.log.push_back(record);
    }
    if ((config.checkpoint_interval > 0 &&
         done % config.checkpoint_interval == 0) ||
        last)
      save_at(done);
  }
  return result;
}

TrainResult stage2_continue(const std::filesystem::path& stage1_checkpoint,
                            const SequenceDataset& mix_train,
                            const SequenceDataset& val, const TrainConfig& config,
                            const std::filesystem::path& out_dir,
                            const MaskingPolicy& policy) {
  enc::Checkpoint ckpt = enc::load_checkpoint(stage1_checkpoint, false);
  // Fresh schedule, fresh optimizer; only the weights carry over.
  ckpt.optim.clear();
  enc::CheckpointMeta meta;
  meta.step = 0;
  meta.stage = "stage2";
  ckpt.meta = meta;
  return train_mlm(ckpt, mix_train, val, config, out_dir, policy);
}

}  // namespace dforge::pretrain
