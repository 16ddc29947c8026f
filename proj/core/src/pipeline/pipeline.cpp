#include "dforge/pipeline/pipeline.hpp"

#include <chrono>
#include <fstream>
#include <functional>
#include <set>

#include <json.hpp>

#include "dforge/common/hash.hpp"
#include "dforge/common/rng.hpp"
#include "dforge/corpus/io.hpp"
#include "dforge/corpus/nlu_gen.hpp"
#include "dforge/corpus/ops.hpp"
#include "dforge/corpus/spoken_form.hpp"
#include "dforge/corpus/text_gen.hpp"
#include "dforge/distill/runner.hpp"
#include "dforge/evaluate/report.hpp"
#include "dforge/finetune/finetune.hpp"
#include "dforge/pretrain/trainer.hpp"
#include "dforge/tokenizer/train.hpp"

namespace dforge::pipeline {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

// ---------------------------------------------------------------------------
// Workdir lock: one pipeline per workdir.

class WorkdirLock {
 public:
  explicit WorkdirLock(const fs::path& workdir) : path_(workdir / "lock") {
    fs::create_directories(workdir);
    if (fs::exists(path_))
      throw IoError("workdir is locked by another pipeline: " + path_.string());
    std::ofstream out(path_);
    if (!out) throw IoError("cannot create lock " + path_.string());
    out << "dforge\n";
  }
  ~WorkdirLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  WorkdirLock(const WorkdirLock&) = delete;
  WorkdirLock& operator=(const WorkdirLock&) = delete;

 private:
  fs::path path_;
};

// ---------------------------------------------------------------------------
// Small helpers.

struct StageResult {
  std::map<std::string, std::string> outputs;  // name -> digest
  std::int64_t steps = 0;
};

std::string file_digest(const fs::path& path) {
  if (!fs::exists(path))
    throw ValidationError("required input is missing: " + path.string());
  return sha256_file_hex(path);
}

std::string checkpoint_digest(const fs::path& dir) {
  if (!fs::exists(dir / "weights.bin"))
    throw ValidationError("required checkpoint is missing: " + dir.string());
  return sha256_file_hex(dir / "weights.bin");
}

struct Paths {
  fs::path workdir;
  fs::path corpora() const { return workdir / "corpora"; }
  fs::path stage1_train() const { return corpora() / "stage1_train.jsonl"; }
  fs::path stage1_val() const { return corpora() / "stage1_val.jsonl"; }
  fs::path val_sentences() const { return corpora() / "stage1_val_sentences.jsonl"; }
  fs::path indomain() const { return corpora() / "indomain.jsonl"; }
  fs::path indomain_val() const { return corpora() / "indomain_val.jsonl"; }
  fs::path stage2_train() const { return corpora() / "stage2_train.jsonl"; }
  fs::path nlu(const std::string& split) const {
    return corpora() / ("nlu_" + split + ".jsonl");
  }
  fs::path grammar() const { return corpora() / "grammar.json"; }
  fs::path lexicon() const { return workdir / "lexicons" / "nouns_en.txt"; }
  fs::path tokenizer() const { return workdir / "tokenizer" / "model.tok"; }
  fs::path ckpt(const std::string& stage) const {
    return workdir / "checkpoints" / stage;
  }
  fs::path bundle() const { return workdir / "bundles" / "student-ft"; }
  fs::path reports() const { return workdir / "reports"; }
};

fs::path last_checkpoint(const fs::path& stage_dir) {
  fs::path best;
  if (!fs::exists(stage_dir))
    throw ValidationError("required checkpoints are missing: " + stage_dir.string());
  for (const auto& entry : fs::directory_iterator(stage_dir)) {
    if (!entry.is_directory()) continue;
    const std::string name = entry.path().filename().string();
    if (name.rfind("step_", 0) != 0) continue;
    if (best.empty() || name > best.filename().string()) best = entry.path();
  }
  if (best.empty())
    throw ValidationError("no checkpoints under " + stage_dir.string());
  return best;
}

enc::EncoderConfig encoder_from_json(const json& doc) {
  return enc::EncoderConfig::from_json_string(doc.dump());
}

pretrain::TrainConfig train_from_json(const json& doc, std::uint64_t seed) {
  pretrain::TrainConfig config = pretrain::TrainConfig::from_json_string(doc.dump());
  if (!doc.contains("seed")) config.seed = seed;
  return config;
}

std::vector<std::string> corpus_texts(const std::vector<corpus::TextExample>& records) {
  std::vector<std::string> texts;
  texts.reserve(records.size());
  for (const auto& record : records) texts.push_back(record.text);
  return texts;
}

// ---------------------------------------------------------------------------
// Stage implementations.

StageResult stage_data(const Paths& paths, std::uint64_t seed, const json& cfg) {
  fs::create_directories(paths.corpora());
  fs::create_directories(paths.lexicon().parent_path());

  const std::size_t n_general = cfg.value("general_sentences", 2600);
  const std::size_t n_general_val = cfg.value("general_val_sentences", 260);
  const std::size_t mix_size = cfg.value("stage1_mix_size", 3600);
  const std::size_t val_mix_size = cfg.value("val_mix_size", 320);
  const double spoken_ratio = cfg.value("spoken_ratio", 0.7);
  const std::size_t pack_words = cfg.value("pack_words", 48);
  const std::size_t n_train = cfg.value("nlu_train", 1200);
  const std::size_t n_val = cfg.value("nlu_val", 300);
  const std::size_t n_test = cfg.value("nlu_test", 400);
  const std::size_t indomain_draws = cfg.value("indomain_draws", 9000);
  const std::size_t indomain_val_draws = cfg.value("indomain_val_draws", 900);

  const corpus::TextGrammar text_grammar = corpus::general_text_grammar();

  const auto build_mixed_packed = [&](std::size_t n_sentences, std::size_t n_mix,
                                      std::uint64_t stream_seed,
                                      const fs::path& packed_out,
                                      const fs::path* sentences_out) {
    const auto written =
        corpus::generate_text(text_grammar, n_sentences, stream_seed);
    std::vector<corpus::TextExample> spoken;
    spoken.reserve(written.size());
    for (const auto& record : written)
      spoken.push_back(corpus::spoken_form_transform(record));
    const auto mixed = corpus::mix_corpora(
        {{spoken, spoken_ratio}, {written, 1.0 - spoken_ratio}}, n_mix,
        mix_seed(stream_seed, "mix-70-30"));
    if (sentences_out != nullptr) corpus::write_corpus(*sentences_out, mixed);
    const auto packed = corpus::pack_sentences(mixed, pack_words);
    std::vector<corpus::TextExample> packed_records;
    packed_records.reserve(packed.size());
    for (const auto& pack : packed) {
      corpus::TextExample record;
      record.text = pack.text;
      record.language = pack.language;
      record.form = mixed[pack.constituent_ids.front()].form;
      record.source = "packed";
      packed_records.push_back(std::move(record));
    }
    corpus::write_corpus(packed_out, packed_records);
  };

  build_mixed_packed(n_general, mix_size, mix_seed(seed, "stage1-data"),
                     paths.stage1_train(), nullptr);
  const fs::path sentences = paths.val_sentences();
  build_mixed_packed(n_general_val, val_mix_size, mix_seed(seed, "val-data"),
                     paths.stage1_val(), &sentences);

  // Labeled task data plus the grammar itself.
  const corpus::NluGrammar grammar = corpus::grammar_preset("domain1-like");
  corpus::save_grammar(paths.grammar(), grammar);
  const auto splits = corpus::generate_synthetic_nlu(grammar, n_train, n_val,
                                                     n_test, mix_seed(seed, "nlu"));
  corpus::write_nlu(paths.nlu("train"), splits.train);
  corpus::write_nlu(paths.nlu("val"), splits.val);
  corpus::write_nlu(paths.nlu("test"), splits.test);

  // In-domain unlabeled utterances with natural duplication, deduplicated to
  // sqrt counts.
  const auto raw = corpus::sample_utterances(grammar, indomain_draws,
                                             mix_seed(seed, "indomain"));
  corpus::write_corpus(paths.indomain(), corpus::dedup_sqrt(raw));

  auto val_utterances = corpus::sample_utterances(
      grammar, indomain_val_draws, mix_seed(seed, "indomain-val"));
  std::set<std::string> train_texts;
  for (const auto& record : raw) train_texts.insert(record.text);
  std::erase_if(val_utterances, [&](const corpus::TextExample& record) {
    return train_texts.contains(record.text);
  });
  if (val_utterances.empty())
    throw GenerationError("in-domain validation draw is fully contained in train");
  corpus::write_corpus(paths.indomain_val(), corpus::dedup_sqrt(val_utterances));

  // Noun lexicon (the mask-filling target inventory).
  {
    std::ofstream out(paths.lexicon());
    if (!out) throw IoError("cannot write " + paths.lexicon().string());
    std::set<std::string> nouns;
    for (const auto& pool : {"noun", "place", "thing"})
      for (const auto& word : text_grammar.pools.at(pool)) nouns.insert(word);
    for (const auto& noun : nouns) out << noun << '\n';
  }

  StageResult result;
  for (const auto& p :
       {paths.stage1_train(), paths.stage1_val(), paths.val_sentences(),
        paths.indomain(), paths.indomain_val(), paths.nlu("train"),
        paths.nlu("val"), paths.nlu("test"), paths.grammar(), paths.lexicon()})
    result.outputs[p.filename().string()] = file_digest(p);
  return result;
}

StageResult stage_tokenizer(const Paths& paths, std::uint64_t seed, const json& cfg) {
  fs::create_directories(paths.tokenizer().parent_path());
  const std::size_t vocab_size = cfg.value("vocab_size", 512);
  const auto records = corpus::read_corpus(paths.stage1_train());
  const auto model =
      tok::train_unigram(corpus_texts(records), vocab_size, {}, seed);
  model.save(paths.tokenizer());
  StageResult result;
  result.outputs["model.tok"] = file_digest(paths.tokenizer());
  return result;
}

StageResult stage_stage2_corpus(const Paths& paths, std::uint64_t seed,
                                const json& cfg) {
  const std::size_t size = cfg.value("mix_size", 2400);
  const std::size_t min_tokens = cfg.value("min_tokens", 5);
  const double stage1_weight = cfg.value("stage1_weight", 1.0);
  const double indomain_weight = cfg.value("indomain_weight", 2.0);

  const auto tokenizer = tok::TokenizerModel::load(paths.tokenizer());
  const auto stage1 = corpus::read_corpus(paths.stage1_train());
  auto indomain = corpus::read_corpus(paths.indomain());
  indomain = corpus::filter_min_tokens(indomain, tokenizer, min_tokens);
  if (indomain.empty())
    throw ValidationError("minimum-length filter removed every in-domain record");

  const auto mixed = corpus::mix_corpora(
      {{stage1, stage1_weight}, {indomain, indomain_weight}}, size,
      mix_seed(seed, "stage2-mix"));
  corpus::write_corpus(paths.stage2_train(), mixed);

  StageResult result;
  result.outputs["stage2_train.jsonl"] = file_digest(paths.stage2_train());
  return result;
}

StageResult stage_pretrain(const Paths& paths, std::uint64_t seed, const json& cfg,
                           bool stage2) {
  const auto tokenizer = tok::TokenizerModel::load(paths.tokenizer());
  const auto train_cfg = train_from_json(cfg.at("train"), seed);

  const auto val_records = corpus::read_corpus(paths.stage1_val());

  StageResult result;
  if (!stage2) {
    const auto enc_cfg = encoder_from_json(cfg.at("encoder"));
    const auto train_records = corpus::read_corpus(paths.stage1_train());
    const auto train_data = pretrain::SequenceDataset::build(
        train_records, tokenizer, enc_cfg.max_len);
    const auto val_data =
        pretrain::SequenceDataset::build(val_records, tokenizer, enc_cfg.max_len);
    const auto init = pretrain::make_initial_checkpoint(
        enc_cfg, mix_seed(seed, "stage1-init"), tokenizer.fingerprint(), "stage1");
    const auto run = pretrain::train_mlm(init, train_data, val_data, train_cfg,
                                         paths.ckpt("stage1"));
    result.steps = train_cfg.max_steps;
    result.outputs["stage1-final"] = checkpoint_digest(run.final_checkpoint);
  } else {
    const auto stage1_final = last_checkpoint(paths.ckpt("stage1"));
    const auto ckpt = enc::load_checkpoint(stage1_final, false);
    const auto train_records = corpus::read_corpus(paths.stage2_train());
    const auto train_data = pretrain::SequenceDataset::build(
        train_records, tokenizer, ckpt.config.max_len);
    const auto val_data = pretrain::SequenceDataset::build(val_records, tokenizer,
                                                           ckpt.config.max_len);
    const auto run = pretrain::stage2_continue(stage1_final, train_data, val_data,
                                               train_cfg, paths.ckpt("stage2"));
    result.steps = train_cfg.max_steps;
    result.outputs["stage2-final"] = checkpoint_digest(run.final_checkpoint);
  }
  return result;
}

distill::LossRecipe recipe_from_cfg(const json& cfg) {
  distill::LossRecipe recipe;
  recipe.mlm_ce = cfg.value("mlm_ce", 1.0);
  recipe.soft_ce = cfg.value("soft_ce", 1.0);
  recipe.temperature = cfg.value("temperature", 1.0);
  if (cfg.contains("layer_map")) {
    distill::HiddenMatchSpec spec;
    spec.weight = cfg.value("hidden_weight", 1.0);
    for (const auto& pair : cfg["layer_map"])
      spec.layer_map.emplace_back(pair.at(0).get<int>(), pair.at(1).get<int>());
    recipe.hidden = std::move(spec);
  }
  return recipe;
}

StageResult stage_distill_intermediate(const Paths& paths, std::uint64_t seed,
                                       const json& cfg) {
  const auto tokenizer = tok::TokenizerModel::load(paths.tokenizer());

  distill::DistillPlan plan;
  plan.student = encoder_from_json(cfg.at("student"));
  plan.train = train_from_json(cfg.at("train"), seed);
  plan.seed = mix_seed(seed, "distill-intermediate");

  distill::DistillSegment seg1;
  seg1.teacher_checkpoint = last_checkpoint(paths.ckpt("stage1"));
  seg1.corpus_file = paths.stage1_train();
  seg1.updates = cfg.value("stage1_updates", 300);
  seg1.recipe = recipe_from_cfg(cfg.value("recipe", json::object()));
  distill::DistillSegment seg2 = seg1;
  seg2.teacher_checkpoint = last_checkpoint(paths.ckpt("stage2"));
  seg2.corpus_file = paths.stage2_train();
  seg2.updates = cfg.value("stage2_updates", 300);
  plan.segments = {seg1, seg2};

  const auto run =
      distill::distill_run_files(plan, tokenizer, paths.ckpt("intermediate"));
  StageResult result;
  result.steps = seg1.updates + seg2.updates;
  result.outputs["intermediate-final"] = checkpoint_digest(run.final_checkpoint);
  return result;
}

StageResult stage_interlude(const Paths& paths, std::uint64_t seed, const json& cfg) {
  const auto tokenizer = tok::TokenizerModel::load(paths.tokenizer());
  const auto train_cfg = train_from_json(cfg.at("train"), seed);
  const auto intermediate = last_checkpoint(paths.ckpt("intermediate"));
  const auto ckpt = enc::load_checkpoint(intermediate, false);

  const auto train_data = pretrain::SequenceDataset::build(
      corpus::read_corpus(paths.stage2_train()), tokenizer, ckpt.config.max_len);
  const auto val_data = pretrain::SequenceDataset::build(
      corpus::read_corpus(paths.indomain_val()), tokenizer, ckpt.config.max_len);

  const auto run = distill::teacherless_interlude(intermediate, train_data,
                                                  val_data, train_cfg,
                                                  paths.ckpt("interlude"));
  StageResult result;
  result.steps = train_cfg.max_steps;
  result.outputs["interlude-final"] = checkpoint_digest(run.final_checkpoint);
  return result;
}

StageResult stage_distill_final(const Paths& paths, std::uint64_t seed,
                                const json& cfg) {
  const auto tokenizer = tok::TokenizerModel::load(paths.tokenizer());

  distill::DistillPlan plan;
  plan.student = encoder_from_json(cfg.at("student"));
  plan.train = train_from_json(cfg.at("train"), seed);
  plan.seed = mix_seed(seed, "distill-final");

  distill::DistillSegment seg;
  seg.teacher_checkpoint = last_checkpoint(paths.ckpt("interlude"));
  seg.corpus_file = paths.stage2_train();
  seg.updates = cfg.value("updates", 350);
  seg.recipe = recipe_from_cfg(cfg.value("recipe", json::object()));
  plan.segments = {seg};

  const auto run =
      distill::distill_run_files(plan, tokenizer, paths.ckpt("student"));
  StageResult result;
  result.steps = seg.updates;
  result.outputs["student-final"] = checkpoint_digest(run.final_checkpoint);
  return result;
}

StageResult stage_finetune(const Paths& paths, std::uint64_t seed, const json& cfg) {
  const auto tokenizer = tok::TokenizerModel::load(paths.tokenizer());
  const auto student = enc::load_checkpoint(last_checkpoint(paths.ckpt("student")),
                                            false);
  const auto train = corpus::read_nlu(paths.nlu("train"));
  const auto val = corpus::read_nlu(paths.nlu("val"));

  finetune::FinetuneConfig ft;
  ft.mode = cfg.value("mode", "full") == std::string("frozen")
                ? finetune::Mode::frozen
                : finetune::Mode::full;
  ft.epochs = cfg.value("epochs", 4);
  ft.batch_size = cfg.value("batch_size", 16);
  ft.patience = cfg.value("patience", 2);
  ft.head_hidden = cfg.value("head_hidden", 256);
  ft.peak_lr = cfg.value("peak_lr", 0.0);
  if (cfg.contains("seeds"))
    ft.seeds = cfg["seeds"].get<std::vector<std::uint64_t>>();
  else
    ft.seeds = {mix_seed(seed, "ft") % 1000 + 1};

  const auto result_ft = finetune::finetune(student, train, val, ft, tokenizer);
  result_ft.bundles.front().save(paths.bundle());

  json summary{{"mean",
                {{"exact_match_error", result_ft.mean.exact_match_error},
                 {"ic_error", result_ft.mean.ic_error},
                 {"sf_error", result_ft.mean.sf_error},
                 {"semer", result_ft.mean.semer}}},
               {"seeds", ft.seeds}};
  std::ofstream out(paths.bundle() / "finetune_summary.json");
  out << summary.dump(2) << '\n';

  StageResult result;
  result.steps = static_cast<std::int64_t>(ft.epochs) *
                 static_cast<std::int64_t>((train.size() + ft.batch_size - 1) /
                                           ft.batch_size) *
                 static_cast<std::int64_t>(ft.seeds.size());
  result.outputs["student-ft"] = checkpoint_digest(paths.bundle());
  return result;
}

eval::EvalReport teacher_report(const Paths& paths, const fs::path& ckpt_dir,
                                const tok::TokenizerModel& tokenizer,
                                std::uint64_t seed, bool indomain) {
  const auto ckpt = enc::load_checkpoint(ckpt_dir, false);
  eval::EvalReport report;
  report.checkpoint_id = checkpoint_digest(ckpt_dir);

  const pretrain::MaskingPolicy policy;
  const auto val_data = pretrain::SequenceDataset::build(
      corpus::read_corpus(paths.stage1_val()), tokenizer, ckpt.config.max_len);
  report.metrics["val_perplexity"] = eval::perplexity(
      ckpt.params, ckpt.config, val_data, policy, mix_seed(seed, "report-ppl"));

  if (indomain) {
    const auto indomain_data = pretrain::SequenceDataset::build(
        corpus::read_corpus(paths.indomain_val()), tokenizer, ckpt.config.max_len);
    report.metrics["indomain_perplexity"] =
        eval::perplexity(ckpt.params, ckpt.config, indomain_data, policy,
                         mix_seed(seed, "report-ppl-indomain"));
  }

  // Mask filling over held-out sentences; the held-out rule is enforced by
  // checking the task source digest against the training corpus digests.
  const std::string source_digest = file_digest(paths.val_sentences());
  for (const auto& train_file : {paths.stage1_train(), paths.stage2_train()})
    if (fs::exists(train_file) && file_digest(train_file) == source_digest)
      throw ValidationError("mask-fill source overlaps a training corpus");

  std::map<std::string, std::set<std::string>> lexicon;
  {
    std::ifstream in(paths.lexicon());
    if (!in) throw IoError("cannot open " + paths.lexicon().string());
    std::string word;
    while (std::getline(in, word))
      if (!word.empty()) lexicon["en"].insert(word);
  }
  const auto sentences = corpus::read_corpus(paths.val_sentences());
  const auto tasks =
      eval::build_mask_fill_tasks(sentences, lexicon, tokenizer,
                                  ckpt.config.max_len, mix_seed(seed, "mask-fill"));
  const double acc =
      eval::mask_fill_accuracy(ckpt.params, ckpt.config, tasks.tasks);
  report.metrics["mask_fill_accuracy"] = acc;
  report.breakdowns["mask_fill_accuracy"]["en"] = {
      acc, static_cast<double>(tasks.tasks.size())};
  return report;
}

StageResult stage_evaluate(const Paths& paths, std::uint64_t seed, const json& cfg) {
  (void)cfg;
  fs::create_directories(paths.reports());
  const auto tokenizer = tok::TokenizerModel::load(paths.tokenizer());

  const auto stage1_report = teacher_report(
      paths, last_checkpoint(paths.ckpt("stage1")), tokenizer, seed, false);
  stage1_report.save_json(paths.reports() / "stage1-teacher.json");
  stage1_report.save_tsv(paths.reports() / "stage1-teacher.tsv");

  const auto stage2_report = teacher_report(
      paths, last_checkpoint(paths.ckpt("stage2")), tokenizer, seed, true);
  stage2_report.save_json(paths.reports() / "stage2-teacher.json");
  stage2_report.save_tsv(paths.reports() / "stage2-teacher.tsv");

  const auto bundle = finetune::NluModelBundle::load(paths.bundle());
  const auto test = corpus::read_nlu(paths.nlu("test"));
  const auto metrics = finetune::evaluate_bundle(bundle, tokenizer, test);
  eval::EvalReport student_report;
  student_report.checkpoint_id = checkpoint_digest(paths.bundle());
  student_report.metrics["exact_match_error"] = metrics.exact_match_error;
  student_report.metrics["ic_error"] = metrics.ic_error;
  student_report.metrics["sf_error"] = metrics.sf_error;
  student_report.metrics["semer"] = metrics.semer;
  student_report.breakdowns["exact_match_error"]["domain1"] = {
      metrics.exact_match_error, static_cast<double>(test.size())};
  student_report.save_json(paths.reports() / "student-final.json");
  student_report.save_tsv(paths.reports() / "student-final.tsv");

  StageResult result;
  for (const auto& name :
       {"stage1-teacher.json", "stage2-teacher.json", "student-final.json"})
    result.outputs[name] = file_digest(paths.reports() / name);
  return result;
}

// Inputs each stage depends on (must exist before the stage runs).
std::map<std::string, std::string> stage_inputs(const std::string& stage,
                                                const Paths& paths) {
  std::map<std::string, std::string> inputs;
  const auto add_file = [&](const fs::path& p) {
    inputs[p.filename().string()] = file_digest(p);
  };
  const auto add_ckpt = [&](const std::string& name) {
    inputs[name] = checkpoint_digest(last_checkpoint(paths.ckpt(name)));
  };
  if (stage == "data") return inputs;
  if (stage == "tokenizer") {
    add_file(paths.stage1_train());
    return inputs;
  }
  if (stage == "stage2-corpus") {
    add_file(paths.tokenizer());
    add_file(paths.stage1_train());
    add_file(paths.indomain());
    return inputs;
  }
  if (stage == "stage1") {
    add_file(paths.tokenizer());
    add_file(paths.stage1_train());
    add_file(paths.stage1_val());
    return inputs;
  }
  if (stage == "stage2") {
    add_file(paths.tokenizer());
    add_file(paths.stage2_train());
    add_file(paths.stage1_val());
    add_ckpt("stage1");
    return inputs;
  }
  if (stage == "distill-intermediate") {
    add_file(paths.tokenizer());
    add_file(paths.stage1_train());
    add_file(paths.stage2_train());
    add_ckpt("stage1");
    add_ckpt("stage2");
    return inputs;
  }
  if (stage == "interlude") {
    add_file(paths.tokenizer());
    add_file(paths.stage2_train());
    add_file(paths.indomain_val());
    add_ckpt("intermediate");
    return inputs;
  }
  if (stage == "distill-final") {
    add_file(paths.tokenizer());
    add_file(paths.stage2_train());
    add_ckpt("interlude");
    return inputs;
  }
  if (stage == "finetune") {
    add_file(paths.tokenizer());
    add_file(paths.nlu("train"));
    add_file(paths.nlu("val"));
    add_ckpt("student");
    return inputs;
  }
  if (stage == "evaluate") {
    add_file(paths.tokenizer());
    add_file(paths.stage1_val());
    add_file(paths.val_sentences());
    add_file(paths.indomain_val());
    add_file(paths.nlu("test"));
    add_file(paths.lexicon());
    add_ckpt("stage1");
    add_ckpt("stage2");
    inputs["student-ft"] = checkpoint_digest(paths.bundle());
    return inputs;
  }
  throw ConfigError("unknown pipeline stage '" + stage + "'");
}

StageResult run_stage(const std::string& stage, const Paths& paths,
                      std::uint64_t seed, const json& cfg) {
  if (stage == "data") return stage_data(paths, seed, cfg);
  if (stage == "tokenizer") return stage_tokenizer(paths, seed, cfg);
  if (stage == "stage2-corpus") return stage_stage2_corpus(paths, seed, cfg);
  if (stage == "stage1") return stage_pretrain(paths, seed, cfg, false);
  if (stage == "stage2") return stage_pretrain(paths, seed, cfg, true);
  if (stage == "distill-intermediate")
    return stage_distill_intermediate(paths, seed, cfg);
  if (stage == "interlude") return stage_interlude(paths, seed, cfg);
  if (stage == "distill-final") return stage_distill_final(paths, seed, cfg);
  if (stage == "finetune") return stage_finetune(paths, seed, cfg);
  if (stage == "evaluate") return stage_evaluate(paths, seed, cfg);
  throw ConfigError("unknown pipeline stage '" + stage + "'");
}

}  // namespace

PipelineSummary run_pipeline(const PipelineRecipe& recipe,
                             const std::filesystem::path& workdir,
                             int max_stages) {
  // Validate the whole recipe before any compute.
  static const std::set<std::string> known = {
      "data",     "tokenizer",            "stage2-corpus", "stage1",
      "stage2",   "distill-intermediate", "interlude",     "distill-final",
      "finetune", "evaluate"};
  for (const auto& [stage, cfg_text] : recipe.stages) {
    if (!known.contains(stage))
      throw ValidationError("unknown pipeline stage '" + stage + "'");
    const json parsed = json::parse(cfg_text);  // malformed configs fail fast
    (void)parsed;
  }

  WorkdirLock lock(workdir);
  Paths paths{workdir};
  PipelineSummary summary;

  int executed = 0;
  for (const auto& [stage, cfg_text] : recipe.stages) {
    if (max_stages >= 0 && executed >= max_stages) break;
    const json cfg = json::parse(cfg_text);
    const auto inputs = stage_inputs(stage, paths);
    const std::string run_id = compute_run_id(stage, inputs, cfg.dump());

    const auto existing = load_manifests(workdir);
    const RunManifest* done = nullptr;
    for (const auto& m : existing)
      if (m.run_id == run_id) done = &m;

    if (done != nullptr) {
      // Verify the recorded outputs are still intact.
      bool intact = true;
      for (const auto& [name, digest] : done->outputs) {
        fs::path candidate;
        if (name.ends_with(".jsonl") || name.ends_with(".tok") ||
            name.ends_with(".json") || name.ends_with(".txt")) {
          // Locate by searching known directories.
          for (const auto& dir :
               {paths.corpora(), paths.workdir / "tokenizer", paths.reports(),
                paths.lexicon().parent_path()}) {
            if (fs::exists(dir / name)) candidate = dir / name;
          }
          if (candidate.empty() || sha256_file_hex(candidate) != digest)
            intact = false;
        }
        // Checkpoint outputs are re-verified lazily by downstream stages'
        // input hashing.
      }
      if (!intact)
        throw IoError("stale artifact: outputs of completed stage '" + stage +
                      "' changed on disk (run id " + run_id + ")");
      ++summary.stages_skipped;
      summary.run_ids.push_back(run_id);
      continue;
    }

    const auto t0 = std::chrono::steady_clock::now();
    StageResult result = run_stage(stage, paths, recipe.seed, cfg);
    const auto t1 = std::chrono::steady_clock::now();

    RunManifest m;
    m.run_id = run_id;
    m.stage = stage;
    m.inputs = inputs;
    m.outputs = result.outputs;
    m.config_json = cfg.dump();
    m.seeds = {recipe.seed};
    m.wall_ms =
        std::chrono::duration_cast<std::chrono::milliseconds>(t1 - t0).count();
    m.steps = result.steps;
    append_manifest(workdir, m);

    summary.steps_executed += result.steps;
    ++summary.stages_run;
    summary.run_ids.push_back(run_id);
    ++executed;
  }
  return summary;
}

// ---------------------------------------------------------------------------
// Recipe serialization and the shipped preset.

void PipelineRecipe::save(const std::filesystem::path& path) const {
  json doc;
  doc["name"] = name;
  doc["seed"] = seed;
  doc["stages"] = json::array();
  for (const auto& [stage, cfg_text] : stages)
    doc["stages"].push_back({{"stage", stage}, {"config", json::parse(cfg_text)}});
  std::ofstream out(path);
  if (!out) throw IoError("cannot write recipe " + path.string());
  out << doc.dump(2) << '\n';
}

PipelineRecipe PipelineRecipe::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open recipe " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  PipelineRecipe recipe;
  recipe.name = doc.value("name", "custom");
  recipe.seed = doc.value("seed", 7);
  for (const auto& item : doc.at("stages"))
    recipe.stages.emplace_back(item.at("stage").get<std::string>(),
                               item.value("config", json::object()).dump());
  return recipe;
}

PipelineRecipe PipelineRecipe::toy_preset(std::uint64_t seed) {
  PipelineRecipe recipe;
  recipe.name = "toy";
  recipe.seed = seed;

  const json encoder_teacher{{"n_layers", 4},  {"hidden", 64},
                             {"ffn_inner", 256}, {"n_heads", 4},
                             {"head_size", 16}, {"dropout", 0.1},
                             {"max_len", 96},   {"vocab_size", 512}};
  const json student_intermediate{{"n_layers", 3},  {"hidden", 48},
                                  {"ffn_inner", 192}, {"n_heads", 4},
                                  {"head_size", 12}, {"dropout", 0.1},
                                  {"max_len", 96},   {"vocab_size", 512}};
  const json student_final{{"n_layers", 2},  {"hidden", 32},
                           {"ffn_inner", 128}, {"n_heads", 4},
                           {"head_size", 8},  {"dropout", 0.1},
                           {"max_len", 96},   {"vocab_size", 512}};

  const auto train = [](double peak, double min, std::int64_t warmup,
                        std::int64_t decay, std::int64_t steps,
                        std::int64_t eval_every, std::int64_t ckpt_every) {
    return json{{"peak_lr", peak},       {"min_lr", min},
                {"warmup_steps", warmup}, {"decay_steps", decay},
                {"warmup_shape", "exponential"},
                {"batch_tokens", 2048},  {"max_steps", steps},
                {"weight_decay", 0.1},   {"grad_clip", 1.0},
                {"adam_beta1", 0.9},     {"adam_beta2", 0.99},
                {"adam_eps", 1e-8},      {"dropout", 0.1},
                {"eval_interval", eval_every},
                {"checkpoint_interval", ckpt_every}};
  };

  recipe.stages = {
      {"data", json::object().dump()},
      {"tokenizer", json{{"vocab_size", 512}}.dump()},
      {"stage2-corpus", json{{"mix_size", 2400}, {"min_tokens", 5}}.dump()},
      {"stage1", json{{"encoder", encoder_teacher},
                      {"train", train(1e-3, 1e-5, 100, 900, 900, 150, 300)}}
                     .dump()},
      {"stage2", json{{"train", train(5e-4, 1e-5, 50, 400, 400, 100, 200)}}.dump()},
      {"distill-intermediate",
       json{{"student", student_intermediate},
            {"train", train(1e-3, 1e-5, 50, 500, 300, 0, 0)},
            {"stage1_updates", 300},
            {"stage2_updates", 300},
            {"recipe", json{{"mlm_ce", 1.0}, {"soft_ce", 1.0}}}}
           .dump()},
      {"interlude", json{{"train", train(2e-4, 1e-5, 20, 130, 150, 50, 0)}}.dump()},
      {"distill-final",
       json{{"student", student_final},
            {"train", train(1e-3, 1e-5, 50, 300, 350, 0, 0)},
            {"updates", 350},
            {"recipe", json{{"mlm_ce", 1.0},
                            {"soft_ce", 1.0},
                            {"hidden_weight", 1.0},
                            {"layer_map", json::array({json::array({0, 1}),
                                                       json::array({1, 2})})}}}}
           .dump()},
      {"finetune", json{{"mode", "full"},
                        {"epochs", 4},
                        {"batch_size", 16},
                        {"patience", 2},
                        {"head_hidden", 128},
                        {"seeds", json::array({1})}}
                       .dump()},
      {"evaluate", json::object().dump()},
  };
  return recipe;
}

// ---------------------------------------------------------------------------
// Consolidated reporting.

ReportPaths report(const std::filesystem::path& workdir,
                   const std::string& baseline) {
  Paths paths{workdir};
  if (load_manifests(workdir).empty())
    throw ValidationError("no manifests in " + workdir.string());
  if (!fs::exists(paths.reports()))
    throw ValidationError("no reports under " + workdir.string());

  std::map<std::string, eval::EvalReport> reports;
  for (const auto& entry : fs::directory_iterator(paths.reports())) {
    if (entry.path().extension() != ".json") continue;
    const std::string name = entry.path().stem().string();
    if (name == "consolidated") continue;
    reports.emplace(name, eval::EvalReport::load_json(entry.path()));
  }
  if (reports.empty())
    throw ValidationError("no evaluation reports found in " +
                          paths.reports().string());

  ReportPaths out;
  out.consolidated_json = paths.reports() / "consolidated.json";
  out.table_tsv = paths.reports() / "consolidated.tsv";
  out.deltas_tsv = paths.reports() / "deltas.tsv";

  json doc = json::object();
  for (const auto& [name, report] : reports) {
    doc[name] = {{"checkpoint_id", report.checkpoint_id},
                 {"metrics", report.metrics}};
  }
  {
    std::ofstream os(out.consolidated_json);
    if (!os) throw IoError("cannot write " + out.consolidated_json.string());
    os << doc.dump(2) << '\n';
  }
  {
    std::ofstream os(out.table_tsv);
    if (!os) throw IoError("cannot write " + out.table_tsv.string());
    os << "run\tmetric\tvalue\n";
    for (const auto& [name, report] : reports)
      for (const auto& [metric, value] : report.metrics)
        os << name << '\t' << metric << '\t' << std::to_string(value) << '\n';
  }
  {
    std::ofstream os(out.deltas_tsv);
    if (!os) throw IoError("cannot write " + out.deltas_tsv.string());
    os << "candidate\tbaseline\tmetric\trelative_delta_percent\n";
    const auto base_it = reports.find(baseline);
    if (base_it != reports.end()) {
      for (const auto& [name, report] : reports) {
        if (name == baseline) continue;
        for (const auto& [metric, value] : report.metrics) {
          const auto bm = base_it->second.metrics.find(metric);
          if (bm == base_it->second.metrics.end() || bm->second == 0.0) continue;
          // Negative = reduced error versus the baseline.
          const double delta = (value - bm->second) / bm->second * 100.0;
          os << name << '\t' << baseline << '\t' << metric << '\t'
             << std::to_string(delta) << '\n';
        }
      }
    }
  }
  return out;
}

}  // namespace dforge::pipeline
