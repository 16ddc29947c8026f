#include "dforge/distill/runner.hpp"

#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "dforge/corpus/io.hpp"
#include "dforge/distill/losses.hpp"
#include "dforge/pretrain/adam.hpp"

namespace dforge::distill {

namespace {

std::string proj_name(int student_layer) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "proj.%02d.w", student_layer);
  return buf;
}

std::filesystem::path step_dir(const std::filesystem::path& out_dir,
                               std::int64_t step) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "step_%06lld", static_cast<long long>(step));
  return out_dir / buf;
}

void append_log(const std::filesystem::path& out_dir,
                const DistillLogRecord& record) {
  std::ofstream out(out_dir / "distill_metrics.jsonl", std::ios::app);
  if (!out) throw IoError("cannot append distill log in " + out_dir.string());
  nlohmann::json doc{{"step", record.step},     {"segment", record.segment},
                     {"lr", record.lr},         {"mlm_ce", record.mlm_ce},
                     {"soft_ce", record.soft_ce}, {"hidden", record.hidden},
                     {"total", record.total}};
  out << doc.dump() << '\n';
}

std::vector<long> soft_positions(const std::vector<std::int32_t>& labels,
                                 bool all_positions) {
  std::vector<long> positions;
  for (std::size_t t = 0; t < labels.size(); ++t) {
    if (all_positions || labels[t] != enc::kIgnoreLabel)
      positions.push_back(static_cast<long>(t));
  }
  return positions;
}

}  // namespace

DistillResult distill_run(const DistillPlan& plan,
                          const std::vector<pretrain::SequenceDataset>& datasets,
                          const std::filesystem::path& out_dir) {
  plan.validate();
  if (datasets.size() != plan.segments.size())
    throw ValidationError("distill_run needs one dataset per segment");
  std::filesystem::create_directories(out_dir);

  const std::string fingerprint = datasets.front().tokenizer_fingerprint;
  for (const auto& dataset : datasets)
    if (dataset.tokenizer_fingerprint != fingerprint)
      throw ConfigError("segment datasets disagree on tokenizer fingerprint");

  enc::EncoderConfig student_cfg = plan.student;
  student_cfg.dropout = plan.train.dropout;

  // Phase-1 student starts from random initialization.
  enc::ParameterSet<float> params =
      enc::init_params<float>(plan.student, mix_seed(plan.seed, "student-init"));

  DistillResult result;
  std::int64_t global_step = 0;

  const auto save_at = [&](std::int64_t step) {
    enc::Checkpoint ckpt;
    // Projections are transient; strip them from the saved student.
    for (const auto& [name, tensor] : params.tensors)
      if (name.rfind("proj.", 0) != 0) ckpt.params.tensors.emplace(name, tensor);
    ckpt.config = plan.student;
    ckpt.tokenizer_fingerprint = fingerprint;
    enc::CheckpointMeta meta;
    meta.step = step;
    meta.stage = "distill";
    meta.train_config_json = plan.train.to_json_string();
    ckpt.meta = meta;
    const auto dir = step_dir(out_dir, step);
    enc::save_checkpoint(dir, ckpt);
    result.checkpoints.push_back(dir);
    result.final_checkpoint = dir;
  };

  if (plan.segments.empty()) {
    save_at(0);
    return result;
  }

  for (std::size_t seg = 0; seg < plan.segments.size(); ++seg) {
    const DistillSegment& segment = plan.segments[seg];
    const LossRecipe& recipe = segment.recipe;
    const enc::Checkpoint teacher =
        enc::load_checkpoint(segment.teacher_checkpoint, false);
    if (teacher.tokenizer_fingerprint != fingerprint)
      throw ConfigError("teacher/" + std::to_string(seg) +
                        " tokenizer fingerprint does not match the data");

    const double w_hidden = recipe.hidden.has_value() ? recipe.hidden->weight : 0.0;
    ProjectionSet<float> projections;
    if (recipe.hidden.has_value()) {
      validate_layer_map(recipe.hidden->layer_map, plan.student.n_layers,
                         teacher.config.n_layers);
      projections = init_projections<float>(
          recipe.hidden->layer_map, plan.student.hidden, teacher.config.hidden,
          mix_seed(plan.seed, "proj", seg));
    }

    // Student tensors plus (fresh) projections share one optimizer.
    for (const auto& [layer, weight] : projections.weights)
      params.tensors[proj_name(layer)] = weight;
    pretrain::AdamState<float> adam = pretrain::AdamState<float>::zero_like(params);

    const std::uint64_t seg_seed = mix_seed(plan.seed, "segment", seg);
    if (segment.updates > 0) {
      pretrain::BatchPlan batches(datasets[seg], plan.train.batch_tokens, seg_seed);
      pretrain::MaskingPolicy policy;

      for (std::int64_t step = 0; step < segment.updates; ++step) {
        const double lr = pretrain::lr_at(plan.train, step);
        const auto& batch = batches.batch_for_step(step);
        Rng mask_rng(mix_seed(seg_seed, "mask", static_cast<std::uint64_t>(step)));
        Rng drop_rng(mix_seed(seg_seed, "dropout", static_cast<std::uint64_t>(step)));

        // Masked rows first, so every loss denominator is known up front.
        std::vector<pretrain::MaskedBatchRow> rows;
        rows.reserve(batch.size());
        long count_mlm = 0;
        long count_soft = 0;
        long count_rows = 0;
        for (const std::size_t idx : batch) {
          rows.push_back(pretrain::apply_masking(datasets[seg].sequences[idx],
                                                 policy, student_cfg.vocab_size,
                                                 mask_rng));
          const auto& row = rows.back();
          for (const auto label : row.labels) count_mlm += label != enc::kIgnoreLabel;
          count_soft += static_cast<long>(
              soft_positions(row.labels, recipe.soft_all_positions).size());
          count_rows += static_cast<long>(row.input_ids.size());
        }

        enc::ParameterSet<float> grads = enc::zeros_like(params);
        double mlm_sum = 0.0, soft_sum = 0.0, hidden_sum = 0.0;
        const long n_map =
            recipe.hidden.has_value()
                ? static_cast<long>(recipe.hidden->layer_map.size())
                : 1;
        const double hidden_norm = static_cast<double>(n_map) *
                                   static_cast<double>(teacher.config.hidden) *
                                   static_cast<double>(std::max<long>(count_rows, 1));

        for (const auto& row : rows) {
          enc::ForwardCache<float> cache;
          const auto student_trace = enc::forward<float>(
              params, student_cfg, row.input_ids, {}, enc::RunMode::train,
              &drop_rng, &cache);
          enc::ForwardTrace<float> teacher_trace;
          if (recipe.soft_ce > 0.0 || w_hidden > 0.0)
            teacher_trace = enc::forward<float>(teacher.params, teacher.config,
                                                row.input_ids, {},
                                                enc::RunMode::eval);

          enc::TraceGrads<float> tg;
          if (recipe.mlm_ce > 0.0 && count_mlm > 0) {
            auto ce = enc::cross_entropy_sum(student_trace.mlm_logits, row.labels);
            mlm_sum += ce.value;
            tg.d_mlm_logits = ce.d_logits * static_cast<float>(
                                                recipe.mlm_ce /
                                                static_cast<double>(count_mlm));
          }
          if (recipe.soft_ce > 0.0 && count_soft > 0) {
            const auto positions =
                soft_positions(row.labels, recipe.soft_all_positions);
            if (!positions.empty()) {
              auto soft = soft_cross_entropy(student_trace.mlm_logits,
                                             teacher_trace.mlm_logits,
                                             recipe.temperature, positions);
              soft_sum += soft.sum;
              const float scale = static_cast<float>(
                  recipe.soft_ce / static_cast<double>(count_soft));
              if (tg.d_mlm_logits.size() == 0)
                tg.d_mlm_logits = soft.d_student * scale;
              else
                tg.d_mlm_logits += soft.d_student * scale;
            }
          }
          if (w_hidden > 0.0) {
            auto hm = hidden_match_loss(student_trace, teacher_trace,
                                        recipe.hidden->layer_map,
                                        projections.weights.empty() ? nullptr
                                                                    : &projections);
            hidden_sum += hm.sum;
            const float scale = static_cast<float>(w_hidden / hidden_norm);
            for (auto& [layer, d_block] : hm.d_student_blocks)
              tg.d_block_out[layer] = d_block * scale;
            for (auto& [layer, d_w] : hm.d_projections)
              grads.at(proj_name(layer)) += d_w * scale;
          }
          enc::axpy(grads, enc::backward(params, student_cfg, cache, tg));
        }

        pretrain::optimizer_step(params, std::move(grads), plan.train, lr, adam);
        // Projections live in `params`; keep the working copy in sync for
        // the next hidden_match_loss call.
        for (auto& [layer, weight] : projections.weights)
          weight = params.at(proj_name(layer));

        ++global_step;
        DistillLogRecord record;
        record.step = global_step;
        record.segment = static_cast<int>(seg);
        record.lr = lr;
        record.mlm_ce = count_mlm > 0 ? mlm_sum / count_mlm : 0.0;
        record.soft_ce = count_soft > 0 ? soft_sum / count_soft : 0.0;
        record.hidden = hidden_sum / hidden_norm;
        record.total = recipe.mlm_ce * record.mlm_ce +
                       recipe.soft_ce * record.soft_ce +
                       w_hidden * record.hidden;
        append_log(out_dir, record);
        result.log.push_back(record);

        if (plan.train.checkpoint_interval > 0 &&
            (step + 1) % plan.train.checkpoint_interval == 0 &&
            step + 1 != segment.updates)
          save_at(global_step);
      }
    }

    // Segment ends: drop projections, snapshot the student.
    for (const auto& [layer, weight] : projections.weights)
      params.tensors.erase(proj_name(layer));
    save_at(global_step);
  }
  return result;
}

DistillResult distill_run_files(const DistillPlan& plan,
                                const tok::TokenizerModel& tokenizer,
                                const std::filesystem::path& out_dir) {
  std::vector<pretrain::SequenceDataset> datasets;
  datasets.reserve(plan.segments.size());
  for (const auto& segment : plan.segments)
    datasets.push_back(pretrain::SequenceDataset::build(
        corpus::read_corpus(segment.corpus_file), tokenizer,
        plan.student.max_len));
  return distill_run(plan, datasets, out_dir);
}

pretrain::TrainResult teacherless_interlude(
    const std::filesystem::path& intermediate_checkpoint,
    const pretrain::SequenceDataset& stage2_only,
    const pretrain::SequenceDataset& val, const pretrain::TrainConfig& config,
    const std::filesystem::path& out_dir) {
  return pretrain::stage2_continue(intermediate_checkpoint, stage2_only, val,
                                   config, out_dir);
}

finetune::NluModelBundle distill_task(const finetune::NluModelBundle& teacher,
                                      const enc::Checkpoint& student_base,
                                      const std::vector<corpus::NluExample>& train,
                                      const LossRecipe& recipe,
                                      const TaskDistillParams& params,
                                      const tok::TokenizerModel& tokenizer) {
  recipe.validate();
  if (train.empty()) throw ValidationError("task distillation requires data");
  if (teacher.tokenizer_fingerprint != tokenizer.fingerprint() ||
      (!student_base.tokenizer_fingerprint.empty() &&
       student_base.tokenizer_fingerprint != tokenizer.fingerprint()))
    throw ConfigError("tokenizer fingerprint mismatch");

  // The dataset's labels must be covered by the teacher's tables.
  const auto [intents, slots] = finetune::derive_label_tables(train);
  for (const auto& intent : intents)
    if (std::find(teacher.intent_labels.begin(), teacher.intent_labels.end(),
                  intent) == teacher.intent_labels.end())
      throw ConfigError("intent '" + intent + "' missing from teacher labels");
  for (const auto& tag : slots)
    if (std::find(teacher.slot_labels.begin(), teacher.slot_labels.end(), tag) ==
        teacher.slot_labels.end())
      throw ConfigError("slot tag '" + tag + "' missing from teacher labels");

  finetune::NluModelBundle student;
  student.config = student_base.config;
  student.config.n_intents = static_cast<int>(teacher.intent_labels.size());
  student.config.n_tags = static_cast<int>(teacher.slot_labels.size());
  student.config.head_hidden = teacher.config.head_hidden;
  student.config.dropout = params.dropout;
  student.tokenizer_fingerprint = tokenizer.fingerprint();
  student.intent_labels = teacher.intent_labels;
  student.slot_labels = teacher.slot_labels;
  student.params = student_base.params;
  {
    // Fresh task heads on the student, fan-in scaled like finetune's.
    Rng rng(mix_seed(params.seed, "task-heads"));
    for (const auto& shape : enc::parameter_shapes(student.config)) {
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
      student.params.tensors[shape.name] = std::move(tensor);
    }
  }

  const double w_hidden = recipe.hidden.has_value() ? recipe.hidden->weight : 0.0;
  ProjectionSet<float> projections;
  if (recipe.hidden.has_value()) {
    validate_layer_map(recipe.hidden->layer_map, student.config.n_layers,
                       teacher.config.n_layers);
    projections = init_projections<float>(recipe.hidden->layer_map,
                                          student.config.hidden,
                                          teacher.config.hidden,
                                          mix_seed(params.seed, "task-proj"));
  }
  for (const auto& [layer, weight] : projections.weights)
    student.params.tensors[proj_name(layer)] = weight;

  std::vector<finetune::EncodedNlu> encoded;
  encoded.reserve(train.size());
  for (const auto& example : train)
    encoded.push_back(finetune::encode_nlu_example(example, tokenizer, student));

  pretrain::TrainConfig opt;
  opt.adam_beta1 = params.adam_beta1;
  opt.adam_beta2 = params.adam_beta2;
  opt.adam_eps = params.adam_eps;
  opt.grad_clip = params.grad_clip;
  opt.weight_decay = 0.0;

  pretrain::AdamState<float> adam =
      pretrain::AdamState<float>::zero_like(student.params);

  std::int64_t step = 0;
  for (int epoch = 0; epoch < params.epochs; ++epoch) {
    Rng order_rng(mix_seed(params.seed, "td-order", static_cast<std::uint64_t>(epoch)));
    std::vector<std::size_t> order = order_rng.permutation(encoded.size());
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(params.batch_size)) {
      const std::size_t end = std::min(
          order.size(), start + static_cast<std::size_t>(params.batch_size));
      Rng drop_rng(mix_seed(params.seed, "td-dropout", static_cast<std::uint64_t>(step)));

      const float batch_n = static_cast<float>(end - start);
      long slot_count = 0;   // supervised positions (hard CE)
      long token_count = 0;  // content positions (soft CE over slots)
      long row_count = 0;    // positions (hidden matching)
      for (std::size_t k = start; k < end; ++k) {
        const auto& ex = encoded[order[k]];
        for (const std::int32_t label : ex.slot_labels)
          slot_count += label != enc::kIgnoreLabel;
        token_count += static_cast<long>(ex.ids.size()) - 2;
        row_count += static_cast<long>(ex.ids.size());
      }
      const long n_map = recipe.hidden.has_value()
                             ? static_cast<long>(recipe.hidden->layer_map.size())
                             : 1;
      const double hidden_norm = static_cast<double>(n_map) *
                                 static_cast<double>(teacher.config.hidden) *
                                 static_cast<double>(std::max<long>(row_count, 1));

      enc::ParameterSet<float> grads = enc::zeros_like(student.params);
      for (std::size_t k = start; k < end; ++k) {
        const auto& ex = encoded[order[k]];
        enc::ForwardCache<float> cache;
        const auto student_trace = enc::forward<float>(
            student.params, student.config, ex.ids, {}, enc::RunMode::train,
            &drop_rng, &cache, true);
        const auto teacher_trace =
            enc::forward<float>(teacher.params, teacher.config, ex.ids, {},
                                enc::RunMode::eval, nullptr, nullptr, true);

        enc::TraceGrads<float> tg;
        if (recipe.soft_ce > 0.0) {
          auto ic_soft = soft_cross_entropy(student_trace.ic_logits,
                                            teacher_trace.ic_logits,
                                            recipe.temperature, {0});
          tg.d_ic_logits = ic_soft.d_student *
                           static_cast<float>(recipe.soft_ce / batch_n);
          std::vector<long> content;
          for (long t = 1; t + 1 < static_cast<long>(ex.ids.size()); ++t)
            content.push_back(t);
          if (!content.empty() && token_count > 0) {
            auto sf_soft = soft_cross_entropy(student_trace.sf_logits,
                                              teacher_trace.sf_logits,
                                              recipe.temperature, content);
            tg.d_sf_logits = sf_soft.d_student *
                             static_cast<float>(recipe.soft_ce /
                                                static_cast<double>(token_count));
          }
        }
        if (recipe.mlm_ce > 0.0) {
          const std::int32_t intent_label[] = {ex.intent};
          auto ic = enc::cross_entropy_sum(student_trace.ic_logits,
                                           std::span(intent_label, 1));
          auto sf = enc::cross_entropy_sum(student_trace.sf_logits, ex.slot_labels);
          const float ic_scale = static_cast<float>(recipe.mlm_ce / batch_n);
          if (tg.d_ic_logits.size() == 0)
            tg.d_ic_logits = ic.d_logits * ic_scale;
          else
            tg.d_ic_logits += ic.d_logits * ic_scale;
          if (slot_count > 0) {
            const float sf_scale = static_cast<float>(
                recipe.mlm_ce / static_cast<double>(slot_count));
            if (tg.d_sf_logits.size() == 0)
              tg.d_sf_logits = sf.d_logits * sf_scale;
            else
              tg.d_sf_logits += sf.d_logits * sf_scale;
          }
        }
        if (w_hidden > 0.0) {
          auto hm = hidden_match_loss(student_trace, teacher_trace,
                                      recipe.hidden->layer_map,
                                      projections.weights.empty() ? nullptr
                                                                  : &projections);
          const float scale = static_cast<float>(w_hidden / hidden_norm);
          for (auto& [layer, d_block] : hm.d_student_blocks)
            tg.d_block_out[layer] = d_block * scale;
          for (auto& [layer, d_w] : hm.d_projections)
            grads.at(proj_name(layer)) += d_w * scale;
        }
        enc::axpy(grads, enc::backward(student.params, student.config, cache, tg));
      }
      pretrain::optimizer_step(student.params, std::move(grads), opt, params.lr,
                               adam);
      for (auto& [layer, weight] : projections.weights)
        weight = student.params.at(proj_name(layer));
      ++step;
    }
  }

  for (const auto& [layer, weight] : projections.weights)
    student.params.tensors.erase(proj_name(layer));
  return student;
}

}  // namespace dforge::distill
