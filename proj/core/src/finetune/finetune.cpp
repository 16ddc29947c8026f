#include "dforge/finetune/finetune.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <json.hpp>

#include "dforge/common/hash.hpp"
#include "dforge/pretrain/adam.hpp"

namespace dforge::finetune {

using json = nlohmann::json;

std::int32_t NluModelBundle::intent_id(const std::string& name) const {
  const auto it = std::find(intent_labels.begin(), intent_labels.end(), name);
  if (it == intent_labels.end())
    throw ValidationError("intent '" + name + "' is not in the label table");
  return static_cast<std::int32_t>(it - intent_labels.begin());
}

std::int32_t NluModelBundle::slot_id(const std::string& tag) const {
  const auto it = std::find(slot_labels.begin(), slot_labels.end(), tag);
  if (it == slot_labels.end())
    throw ValidationError("slot tag '" + tag + "' is not in the label table");
  return static_cast<std::int32_t>(it - slot_labels.begin());
}

void NluModelBundle::save(const std::filesystem::path& dir) const {
  enc::Checkpoint ckpt;
  ckpt.params = params;
  ckpt.config = config;
  ckpt.tokenizer_fingerprint = tokenizer_fingerprint;
  enc::CheckpointMeta meta;
  meta.stage = "finetune";
  ckpt.meta = meta;
  enc::save_checkpoint(dir, ckpt);
  json labels{{"intents", intent_labels}, {"slots", slot_labels}};
  std::ofstream out(dir / "labels.json");
  if (!out) throw IoError("cannot write labels in " + dir.string());
  out << labels.dump(2) << '\n';
}

NluModelBundle NluModelBundle::load(const std::filesystem::path& dir) {
  const enc::Checkpoint ckpt = enc::load_checkpoint(dir, false);
  std::ifstream in(dir / "labels.json");
  if (!in) throw IoError("cannot open labels in " + dir.string());
  json labels;
  try {
    in >> labels;
  } catch (const json::parse_error& e) {
    throw ValidationError(dir.string() + "/labels.json: " + e.what());
  }
  NluModelBundle bundle;
  bundle.params = ckpt.params;
  bundle.config = ckpt.config;
  bundle.tokenizer_fingerprint = ckpt.tokenizer_fingerprint;
  bundle.intent_labels = labels.at("intents").get<std::vector<std::string>>();
  bundle.slot_labels = labels.at("slots").get<std::vector<std::string>>();
  return bundle;
}

std::pair<std::vector<std::string>, std::vector<std::string>> derive_label_tables(
    const std::vector<corpus::NluExample>& train) {
  std::set<std::string> intents;
  std::set<std::string> slots = {"O"};
  for (const auto& example : train) {
    intents.insert(example.intent);
    for (const auto& tag : example.slots) slots.insert(tag);
  }
  return {{intents.begin(), intents.end()}, {slots.begin(), slots.end()}};
}

EncodedNlu encode_nlu_example(const corpus::NluExample& example,
                              const tok::TokenizerModel& tokenizer,
                              const NluModelBundle& bundle) {
  corpus::validate_nlu_example(example);
  EncodedNlu out;
  out.intent = bundle.intent_id(example.intent);
  out.ids.push_back(tok::kBosId);
  out.slot_labels.push_back(enc::kIgnoreLabel);
  const auto words = corpus::whitespace_words(example.utterance);
  for (std::size_t w = 0; w < words.size(); ++w) {
    const auto piece_ids = tokenizer.encode_word(words[w]);
    out.word_first_pos.push_back(out.ids.size());
    for (std::size_t k = 0; k < piece_ids.size(); ++k) {
      out.ids.push_back(piece_ids[k]);
      out.slot_labels.push_back(k == 0 ? bundle.slot_id(example.slots[w])
                                       : enc::kIgnoreLabel);
    }
  }
  out.ids.push_back(tok::kEosId);
  out.slot_labels.push_back(enc::kIgnoreLabel);
  if (static_cast<int>(out.ids.size()) > bundle.config.max_len)
    throw ValidationError("utterance exceeds max_len after tokenization");
  return out;
}

namespace {

// Fresh task heads. Fan-in scaling rather than the encoder's 0.02: the
// three-layer head otherwise attenuates activations and gradients so hard
// that the joint loss barely moves at toy scale.
void attach_heads(enc::ParameterSet<float>& params, const enc::EncoderConfig& config,
                  std::uint64_t seed) {
  Rng rng(mix_seed(seed, "head-init"));
  for (const auto& shape : enc::parameter_shapes(config)) {
    if (shape.name.rfind("head.", 0) != 0) continue;
    enc::Mat<float> tensor(shape.rows, shape.cols);
    const std::string leaf = shape.name.substr(shape.name.rfind('.') + 1);
    if (!leaf.empty() && leaf[0] == 'b') {
      tensor.setZero();
    } else {
      const double stddev = std::sqrt(2.0 / static_cast<double>(shape.rows));
      for (long r = 0; r < tensor.rows(); ++r)
        for (long c = 0; c < tensor.cols(); ++c)
          tensor(r, c) = static_cast<float>(rng.normal(0.0, stddev));
    }
    params.tensors[shape.name] = std::move(tensor);
  }
}

struct SeedRun {
  NluModelBundle bundle;
  FinetuneMetrics metrics;
  std::vector<double> epoch_losses;
};

double metric_mean(const std::vector<double>& xs) {
  double sum = 0.0;
  for (const double x : xs) sum += x;
  return xs.empty() ? 0.0 : sum / static_cast<double>(xs.size());
}

double metric_std(const std::vector<double>& xs, double mean) {
  if (xs.size() < 2) return 0.0;
  double sumsq = 0.0;
  for (const double x : xs) sumsq += (x - mean) * (x - mean);
  return std::sqrt(sumsq / static_cast<double>(xs.size() - 1));
}

SeedRun run_one_seed(const enc::Checkpoint& base,
                     const std::vector<corpus::NluExample>& train,
                     const std::vector<corpus::NluExample>& val,
                     const FinetuneConfig& config,
                     const tok::TokenizerModel& tokenizer, std::uint64_t seed,
                     const std::vector<std::string>& intent_labels,
                     const std::vector<std::string>& slot_labels) {
  SeedRun run;
  NluModelBundle& bundle = run.bundle;
  bundle.config = base.config;
  bundle.config.n_intents = static_cast<int>(intent_labels.size());
  bundle.config.n_tags = static_cast<int>(slot_labels.size());
  bundle.config.head_hidden = config.head_hidden;
  bundle.config.dropout = config.dropout;
  bundle.tokenizer_fingerprint = base.tokenizer_fingerprint;
  bundle.intent_labels = intent_labels;
  bundle.slot_labels = slot_labels;
  bundle.params = base.params;
  attach_heads(bundle.params, bundle.config, seed);

  const std::string frozen_digest_before = encoder_digest(base.params);

  std::vector<EncodedNlu> encoded;
  encoded.reserve(train.size());
  for (const auto& example : train)
    encoded.push_back(encode_nlu_example(example, tokenizer, bundle));

  pretrain::TrainConfig opt;
  opt.adam_beta1 = config.adam_beta1;
  opt.adam_beta2 = config.adam_beta2;
  opt.adam_eps = config.adam_eps;
  opt.grad_clip = config.grad_clip;
  opt.weight_decay = 0.0;
  const double lr = config.effective_lr();

  pretrain::AdamState<float> adam =
      pretrain::AdamState<float>::zero_like(bundle.params);

  const bool frozen = config.mode == Mode::frozen;
  enc::ParameterSet<float> best_params;
  double best_error = std::numeric_limits<double>::infinity();
  int epochs_since_best = 0;

  std::int64_t step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    Rng order_rng(mix_seed(seed, "ft-order", static_cast<std::uint64_t>(epoch)));
    std::vector<std::size_t> order = order_rng.permutation(encoded.size());
    double epoch_loss = 0.0;
    std::size_t epoch_batches = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(
          order.size(), start + static_cast<std::size_t>(config.batch_size));
      Rng drop_rng(mix_seed(seed, "ft-dropout", static_cast<std::uint64_t>(step)));

      // Joint loss: mean intent CE + mean per-token slot CE (equal weights).
      // Both denominators are known up front, so per-example logit gradients
      // can be scaled before backward.
      const float batch_n = static_cast<float>(end - start);
      long slot_count = 0;
      for (std::size_t k = start; k < end; ++k)
        for (const std::int32_t label : encoded[order[k]].slot_labels)
          slot_count += label != enc::kIgnoreLabel;

      enc::ParameterSet<float> grads = enc::zeros_like(bundle.params);
      double batch_intent_ce = 0.0;
      double batch_slot_ce = 0.0;
      for (std::size_t k = start; k < end; ++k) {
        const EncodedNlu& ex = encoded[order[k]];
        enc::ForwardCache<float> cache;
        const auto trace = enc::forward<float>(
            bundle.params, bundle.config, ex.ids, {}, enc::RunMode::train,
            &drop_rng, &cache, true);
        const std::int32_t intent_label[] = {ex.intent};
        auto ic = enc::cross_entropy_sum(trace.ic_logits,
                                         std::span(intent_label, 1));
        auto sf = enc::cross_entropy_sum(trace.sf_logits, ex.slot_labels);
        batch_intent_ce += ic.value;
        batch_slot_ce += sf.value;
        enc::TraceGrads<float> tg;
        tg.d_ic_logits = ic.d_logits / batch_n;
        if (slot_count > 0)
          tg.d_sf_logits = sf.d_logits / static_cast<float>(slot_count);
        enc::axpy(grads, enc::backward(bundle.params, bundle.config, cache, tg));
      }
      if (frozen)
        std::erase_if(grads.tensors, [](const auto& entry) {
          return entry.first.rfind("head.", 0) != 0;
        });
      pretrain::optimizer_step(bundle.params, std::move(grads), opt, lr, adam);
      epoch_loss += batch_intent_ce / batch_n +
                    (slot_count > 0 ? batch_slot_ce / slot_count : 0.0);
      ++epoch_batches;
      ++step;
    }
    run.epoch_losses.push_back(epoch_loss / static_cast<double>(epoch_batches));

    if (!val.empty()) {
      const FinetuneMetrics val_metrics = evaluate_bundle(bundle, tokenizer, val);
      if (val_metrics.exact_match_error < best_error - 1e-12) {
        best_error = val_metrics.exact_match_error;
        best_params = bundle.params;
        epochs_since_best = 0;
      } else {
        ++epochs_since_best;
      }
      if (config.patience > 0 && epochs_since_best >= config.patience) break;
    }
  }
  if (config.patience > 0 && best_params.tensors.size() > 0)
    bundle.params = best_params;

  if (frozen) {
    enc::ParameterSet<float> encoder_only;
    for (const auto& [name, tensor] : bundle.params.tensors)
      if (name.rfind("head.", 0) != 0) encoder_only.tensors.emplace(name, tensor);
    if (encoder_digest(encoder_only) != frozen_digest_before)
      throw NumericFault("frozen mode modified encoder tensors");
  }

  run.metrics = evaluate_bundle(bundle, tokenizer, val.empty() ? train : val);
  return run;
}

}  // namespace

std::string encoder_digest(const enc::ParameterSet<float>& params) {
  std::string bytes;
  for (const auto& [name, tensor] : params.tensors) {
    if (name.rfind("head.", 0) == 0) continue;
    bytes += name;
    bytes.append(reinterpret_cast<const char*>(tensor.data()),
                 static_cast<std::size_t>(tensor.size()) * sizeof(float));
  }
  return sha256_hex(bytes);
}

FinetuneResult finetune(const enc::Checkpoint& base,
                        const std::vector<corpus::NluExample>& train,
                        const std::vector<corpus::NluExample>& val,
                        const FinetuneConfig& config,
                        const tok::TokenizerModel& tokenizer) {
  if (train.empty()) throw ValidationError("finetune requires training examples");
  if (config.seeds.empty()) throw ValidationError("finetune requires seeds");
  if (!base.tokenizer_fingerprint.empty() &&
      base.tokenizer_fingerprint != tokenizer.fingerprint())
    throw ConfigError("tokenizer fingerprint mismatch");

  auto [intent_labels, slot_labels] = derive_label_tables(train);
  // Validation labels must be covered by the train tables.
  for (const auto& example : val) {
    if (std::find(intent_labels.begin(), intent_labels.end(), example.intent) ==
        intent_labels.end())
      throw ValidationError("val intent '" + example.intent +
                            "' missing from train labels");
    for (const auto& tag : example.slots)
      if (std::find(slot_labels.begin(), slot_labels.end(), tag) ==
          slot_labels.end())
        throw ValidationError("val slot tag '" + tag +
                              "' missing from train labels");
  }

  FinetuneResult result;
  std::vector<double> em, ic, sf, se;
  for (const std::uint64_t seed : config.seeds) {
    SeedRun run = run_one_seed(base, train, val, config, tokenizer, seed,
                               intent_labels, slot_labels);
    em.push_back(run.metrics.exact_match_error);
    ic.push_back(run.metrics.ic_error);
    sf.push_back(run.metrics.sf_error);
    se.push_back(run.metrics.semer);
    result.per_seed.push_back(run.metrics);
    result.epoch_losses.push_back(std::move(run.epoch_losses));
    result.bundles.push_back(std::move(run.bundle));
  }
  result.mean = {metric_mean(em), metric_mean(ic), metric_mean(sf),
                 metric_mean(se)};
  result.stddev = {metric_std(em, result.mean.exact_match_error),
                   metric_std(ic, result.mean.ic_error),
                   metric_std(sf, result.mean.sf_error),
                   metric_std(se, result.mean.semer)};
  return result;
}

eval::Hypothesis predict(const NluModelBundle& bundle,
                         const tok::TokenizerModel& tokenizer,
                         const std::string& utterance) {
  const auto words = corpus::whitespace_words(utterance);
  if (words.empty()) throw ValidationError("cannot predict on an empty utterance");

  std::vector<std::int32_t> ids = {tok::kBosId};
  std::vector<std::size_t> word_first_pos;
  for (const auto& word : words) {
    const auto piece_ids = tokenizer.encode_word(word);
    word_first_pos.push_back(ids.size());
    ids.insert(ids.end(), piece_ids.begin(), piece_ids.end());
  }
  ids.push_back(tok::kEosId);
  if (static_cast<int>(ids.size()) > bundle.config.max_len)
    throw ValidationError("utterance exceeds max_len after tokenization");

  const auto trace = enc::forward<float>(bundle.params, bundle.config, ids, {},
                                         enc::RunMode::eval);
  const auto ic_logits = enc::classify(bundle.params, bundle.config, trace,
                                       enc::Task::intent);
  const auto sf_logits = enc::classify(bundle.params, bundle.config, trace,
                                       enc::Task::slots);

  eval::Hypothesis hyp;
  long best = 0;
  for (long j = 1; j < ic_logits.cols(); ++j)
    if (ic_logits(0, j) > ic_logits(0, best)) best = j;
  hyp.intent = bundle.intent_labels[static_cast<std::size_t>(best)];

  // Word-level tags from the first subword of each word, BIO-repaired:
  // an I-X without a preceding B-X/I-X becomes B-X.
  std::string prev = "O";
  for (const std::size_t pos : word_first_pos) {
    long tag = 0;
    for (long j = 1; j < sf_logits.cols(); ++j)
      if (sf_logits(static_cast<long>(pos), j) >
          sf_logits(static_cast<long>(pos), tag))
        tag = j;
    std::string label = bundle.slot_labels[static_cast<std::size_t>(tag)];
    if (label.size() >= 3 && label[0] == 'I') {
      const std::string type = label.substr(2);
      const bool continues = prev.size() >= 3 && prev.substr(2) == type &&
                             (prev[0] == 'B' || prev[0] == 'I');
      if (!continues) label = "B-" + type;
    }
    prev = label;
    hyp.slots.push_back(std::move(label));
  }
  return hyp;
}

std::vector<eval::Hypothesis> predict_all(
    const NluModelBundle& bundle, const tok::TokenizerModel& tokenizer,
    const std::vector<corpus::NluExample>& examples) {
  std::vector<eval::Hypothesis> out;
  out.reserve(examples.size());
  for (const auto& example : examples)
    out.push_back(predict(bundle, tokenizer, example.utterance));
  return out;
}

FinetuneMetrics evaluate_bundle(const NluModelBundle& bundle,
                                const tok::TokenizerModel& tokenizer,
                                const std::vector<corpus::NluExample>& examples) {
  const auto hyps = predict_all(bundle, tokenizer, examples);
  FinetuneMetrics metrics;
  metrics.exact_match_error = eval::exact_match_error(examples, hyps);
  const auto icsf = eval::ic_sf_errors(examples, hyps);
  metrics.ic_error = icsf.ic_error;
  metrics.sf_error = icsf.sf_error;
  metrics.semer = eval::semer(examples, hyps);
  return metrics;
}

}  // namespace dforge::finetune
