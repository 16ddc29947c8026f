// dforge: corpus engineering, tokenizer training, MLM pretraining, teacher
// distillation, NLU fine-tuning, and evaluation in one binary.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <iostream>
#include <sstream>

#include "dforge/common/error.hpp"
#include "dforge/common/rng.hpp"
#include "dforge/corpus/io.hpp"
#include "dforge/corpus/nlu_gen.hpp"
#include "dforge/corpus/ops.hpp"
#include "dforge/corpus/spoken_form.hpp"
#include "dforge/corpus/text_gen.hpp"
#include "dforge/distill/runner.hpp"
#include "dforge/evaluate/metrics.hpp"
#include "dforge/finetune/finetune.hpp"
#include "dforge/pipeline/pipeline.hpp"
#include "dforge/pretrain/trainer.hpp"
#include "dforge/tokenizer/train.hpp"

namespace {

using json = nlohmann::json;
using namespace dforge;

std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream stream(text);
  std::string item;
  while (std::getline(stream, item, ',')) out.push_back(std::stod(item));
  return out;
}

std::vector<std::uint64_t> parse_u64_list(const std::string& text) {
  std::vector<std::uint64_t> out;
  std::stringstream stream(text);
  std::string item;
  while (std::getline(stream, item, ',')) out.push_back(std::stoull(item));
  return out;
}

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error& e) {
    throw ValidationError(path + ": " + e.what());
  }
  return doc;
}

// DFORGE_<KEY>=value overrides a top-level config key (value parsed as JSON
// when possible, as a string otherwise).
void apply_env_overrides(json& config) {
  static const char* keys[] = {"SEED",       "MAX_STEPS", "BATCH_TOKENS",
                               "PEAK_LR",    "MIN_LR",    "EVAL_INTERVAL",
                               "CHECKPOINT_INTERVAL", "DROPOUT"};
  for (const char* key : keys) {
    const std::string env_name = std::string("DFORGE_") + key;
    const char* value = std::getenv(env_name.c_str());
    if (value == nullptr) continue;
    std::string lower(key);
    for (auto& c : lower) c = static_cast<char>(std::tolower(c));
    try {
      config[lower] = json::parse(value);
    } catch (const json::parse_error&) {
      config[lower] = std::string(value);
    }
  }
}

int run(int argc, char** argv) {
  CLI::App app{"dforge: encoder pretraining, distillation, and NLU evaluation"};
  app.require_subcommand(1);

  // ------------------------------------------------------------------ corpus
  auto* corpus_cmd = app.add_subcommand("corpus", "corpus engineering");
  corpus_cmd->require_subcommand(1);
  std::string in_path, out_path, out_dir, lang = "en";
  std::uint64_t seed = 1;
  double alpha = 0.5;
  std::size_t size = 1000, target_words = 700, min_tokens = 5;
  std::string tokenizer_path, ratio = "1";
  std::vector<std::string> inputs;

  auto* c_sample = corpus_cmd->add_subcommand(
      "sample", "multinomial language sampling with up-sampling");
  c_sample->add_option("--input", in_path)->required();
  c_sample->add_option("--out", out_path)->required();
  c_sample->add_option("--alpha", alpha);
  c_sample->add_option("--size", size);
  c_sample->add_option("--seed", seed);
  c_sample->callback([&] {
    const auto records = corpus::read_corpus(in_path);
    std::map<std::string, std::vector<corpus::TextExample>> streams;
    std::map<std::string, std::uint64_t> counts;
    for (const auto& record : records) {
      streams[record.language].push_back(record);
      counts[record.language] += record.count;
    }
    const auto dist = corpus::compute_language_distribution(counts, alpha);
    corpus::write_corpus(out_path, corpus::sample_corpus(streams, dist, size, seed));
  });

  auto* c_dedup = corpus_cmd->add_subcommand(
      "dedup", "square-root deduplication of repetition counts");
  c_dedup->add_option("--input", in_path)->required();
  c_dedup->add_option("--out", out_path)->required();
  c_dedup->callback([&] {
    corpus::write_corpus(out_path, corpus::dedup_sqrt(corpus::read_corpus(in_path)));
  });

  auto* c_pack = corpus_cmd->add_subcommand("pack", "pack sentences into sequences");
  c_pack->add_option("--input", in_path)->required();
  c_pack->add_option("--out", out_path)->required();
  c_pack->add_option("--target-words", target_words);
  c_pack->callback([&] {
    const auto records = corpus::read_corpus(in_path);
    std::vector<corpus::TextExample> packed_records;
    for (const auto& pack : corpus::pack_sentences(records, target_words)) {
      corpus::TextExample record;
      record.text = pack.text;
      record.language = pack.language;
      record.form = records[pack.constituent_ids.front()].form;
      record.source = "packed";
      packed_records.push_back(std::move(record));
    }
    corpus::write_corpus(out_path, packed_records);
  });

  auto* c_spoken = corpus_cmd->add_subcommand(
      "spokenform", "convert written-form records to spoken form");
  c_spoken->add_option("--input", in_path)->required();
  c_spoken->add_option("--out", out_path)->required();
  c_spoken->callback([&] {
    std::vector<corpus::TextExample> out;
    for (const auto& record : corpus::read_corpus(in_path))
      out.push_back(corpus::spoken_form_transform(record));
    corpus::write_corpus(out_path, out);
  });

  auto* c_mix = corpus_cmd->add_subcommand("mix", "weighted corpus mixture");
  c_mix->add_option("--input", inputs)->required()->expected(-2);
  c_mix->add_option("--ratio", ratio, "comma-separated weights, one per input");
  c_mix->add_option("--size", size);
  c_mix->add_option("--seed", seed);
  c_mix->add_option("--out", out_path)->required();
  c_mix->callback([&] {
    const auto weights = parse_double_list(ratio);
    if (weights.size() != inputs.size())
      throw ValidationError("--ratio must list one weight per --input");
    std::vector<std::pair<std::vector<corpus::TextExample>, double>> parts;
    for (std::size_t i = 0; i < inputs.size(); ++i)
      parts.emplace_back(corpus::read_corpus(inputs[i]), weights[i]);
    corpus::write_corpus(out_path, corpus::mix_corpora(parts, size, seed));
  });

  auto* c_filter = corpus_cmd->add_subcommand(
      "filter", "drop records shorter than --min-tokens tokenizer tokens");
  c_filter->add_option("--input", in_path)->required();
  c_filter->add_option("--tokenizer", tokenizer_path)->required();
  c_filter->add_option("--min-tokens", min_tokens);
  c_filter->add_option("--out", out_path)->required();
  c_filter->callback([&] {
    const auto model = tok::TokenizerModel::load(tokenizer_path);
    corpus::write_corpus(out_path, corpus::filter_min_tokens(
                                       corpus::read_corpus(in_path), model,
                                       min_tokens));
  });

  std::string preset = "domain1-like", grammar_path;
  std::size_t n_train = 1000, n_val = 200, n_test = 200;
  auto* c_gen = corpus_cmd->add_subcommand("gen-nlu", "synthetic NLU datasets");
  c_gen->add_option("--preset", preset);
  c_gen->add_option("--grammar", grammar_path, "grammar JSON (overrides --preset)");
  c_gen->add_option("--train", n_train);
  c_gen->add_option("--val", n_val);
  c_gen->add_option("--test", n_test);
  c_gen->add_option("--seed", seed);
  c_gen->add_option("--out-dir", out_dir)->required();
  c_gen->callback([&] {
    const auto grammar = grammar_path.empty()
                             ? corpus::grammar_preset(preset)
                             : corpus::load_grammar(grammar_path);
    const auto splits =
        corpus::generate_synthetic_nlu(grammar, n_train, n_val, n_test, seed);
    std::filesystem::create_directories(out_dir);
    corpus::write_nlu(std::filesystem::path(out_dir) / "nlu_train.jsonl",
                      splits.train);
    corpus::write_nlu(std::filesystem::path(out_dir) / "nlu_val.jsonl", splits.val);
    corpus::write_nlu(std::filesystem::path(out_dir) / "nlu_test.jsonl",
                      splits.test);
  });

  std::size_t n_sentences = 1000;
  auto* c_text = corpus_cmd->add_subcommand("gen-text", "synthetic written text");
  c_text->add_option("--sentences", n_sentences);
  c_text->add_option("--seed", seed);
  c_text->add_option("--out", out_path)->required();
  c_text->callback([&] {
    corpus::write_corpus(out_path, corpus::generate_text(
                                       corpus::general_text_grammar(),
                                       n_sentences, seed));
  });

  // --------------------------------------------------------------- tokenizer
  auto* tok_cmd = app.add_subcommand("tokenizer", "unigram subword tokenizer");
  tok_cmd->require_subcommand(1);
  std::size_t vocab_size = 512;
  std::string forced_path, text_arg, ids_arg, sizes_arg = "256,512";
  double max_split_ratio = 2.0, max_unk = 0.001;

  auto* t_train = tok_cmd->add_subcommand("train", "train a unigram model");
  t_train->add_option("--input", in_path)->required();
  t_train->add_option("--vocab-size", vocab_size);
  t_train->add_option("--forced", forced_path, "file of forced pieces, one per line");
  t_train->add_option("--seed", seed);
  t_train->add_option("--out", out_path)->required();
  t_train->callback([&] {
    const auto records = corpus::read_corpus(in_path);
    std::vector<std::string> texts;
    for (const auto& record : records) texts.push_back(record.text);
    std::set<std::string> forced;
    if (!forced_path.empty()) {
      std::ifstream in(forced_path);
      if (!in) throw IoError("cannot open " + forced_path);
      std::string line;
      while (std::getline(in, line))
        if (!line.empty()) forced.insert(line);
    }
    tok::train_unigram(texts, vocab_size, forced, seed).save(out_path);
  });

  auto* t_encode = tok_cmd->add_subcommand("encode", "text -> token ids");
  t_encode->add_option("--model", tokenizer_path)->required();
  t_encode->add_option("--text", text_arg)->required();
  t_encode->callback([&] {
    const auto model = tok::TokenizerModel::load(tokenizer_path);
    bool first = true;
    for (const auto id : model.encode(text_arg)) {
      if (!first) std::cout << ' ';
      std::cout << id;
      first = false;
    }
    std::cout << '\n';
  });

  auto* t_decode = tok_cmd->add_subcommand("decode", "token ids -> text");
  t_decode->add_option("--model", tokenizer_path)->required();
  t_decode->add_option("--ids", ids_arg)->required();
  t_decode->callback([&] {
    const auto model = tok::TokenizerModel::load(tokenizer_path);
    std::vector<std::int32_t> ids;
    std::stringstream stream(ids_arg);
    std::string item;
    while (std::getline(stream, item, ',')) ids.push_back(std::stoi(item));
    std::cout << model.decode(ids) << '\n';
  });

  auto* t_metrics = tok_cmd->add_subcommand("metrics", "split-ratio / unk portion");
  t_metrics->add_option("--model", tokenizer_path)->required();
  t_metrics->add_option("--input", in_path)->required();
  t_metrics->callback([&] {
    const auto model = tok::TokenizerModel::load(tokenizer_path);
    const auto records = corpus::read_corpus(in_path);
    std::vector<std::string> texts;
    for (const auto& record : records) texts.push_back(record.text);
    const auto metrics = tok::measure_metrics(model, texts);
    std::cout << json{{"split_ratio", metrics.split_ratio},
                      {"unk_portion", metrics.unk_portion}}
                     .dump()
              << '\n';
  });

  auto* t_sweep = tok_cmd->add_subcommand("sweep", "vocab-size selection sweep");
  t_sweep->add_option("--input", in_path)->required();
  t_sweep->add_option("--sizes", sizes_arg, "ascending comma-separated sizes");
  t_sweep->add_option("--max-split-ratio", max_split_ratio);
  t_sweep->add_option("--max-unk", max_unk);
  t_sweep->add_option("--seed", seed);
  t_sweep->add_option("--out", out_path, "save the chosen model here");
  t_sweep->callback([&] {
    const auto records = corpus::read_corpus(in_path);
    std::vector<std::string> texts;
    for (const auto& record : records) texts.push_back(record.text);
    std::vector<std::size_t> sizes;
    for (const auto v : parse_u64_list(sizes_arg))
      sizes.push_back(static_cast<std::size_t>(v));
    const auto result =
        tok::vocab_sweep(texts, sizes, max_split_ratio, max_unk, {}, seed);
    json table = json::array();
    for (const auto& [sz, metrics] : result.table)
      table.push_back({{"vocab_size", sz},
                       {"split_ratio", metrics.split_ratio},
                       {"unk_portion", metrics.unk_portion}});
    std::cout << json{{"chosen_size", result.chosen_size},
                      {"thresholds_met", result.thresholds_met},
                      {"table", table}}
                     .dump(2)
              << '\n';
    if (!out_path.empty()) result.models.at(result.chosen_size).save(out_path);
  });

  // ----------------------------------------------------------------- pretrain
  auto* pretrain_cmd = app.add_subcommand("pretrain", "masked-LM pretraining");
  std::string config_path, resume_path;
  pretrain_cmd->add_option("--config", config_path)->required();
  pretrain_cmd->add_option("--resume", resume_path, "checkpoint dir to resume");
  pretrain_cmd->callback([&] {
    json cfg = load_json_file(config_path);
    apply_env_overrides(cfg["train"]);
    const auto tokenizer =
        tok::TokenizerModel::load(cfg.at("tokenizer").get<std::string>());
    const auto train_cfg =
        pretrain::TrainConfig::from_json_string(cfg.at("train").dump());
    const int max_len = cfg.contains("encoder")
                            ? cfg["encoder"].value("max_len", 128)
                            : 128;
    const auto train_data = pretrain::SequenceDataset::build(
        corpus::read_corpus(cfg.at("data").at("train").get<std::string>()),
        tokenizer, max_len);
    const auto val_data = pretrain::SequenceDataset::build(
        corpus::read_corpus(cfg.at("data").at("val").get<std::string>()),
        tokenizer, max_len);
    const std::string out = cfg.at("out_dir").get<std::string>();

    pretrain::TrainResult result;
    if (!resume_path.empty()) {
      const auto ckpt = enc::load_checkpoint(resume_path);
      result = pretrain::train_mlm(ckpt, train_data, val_data, train_cfg, out);
    } else if (cfg.value("stage", "stage1") == "stage2") {
      result = pretrain::stage2_continue(
          cfg.at("stage1_checkpoint").get<std::string>(), train_data, val_data,
          train_cfg, out);
    } else {
      const auto enc_cfg =
          enc::EncoderConfig::from_json_string(cfg.at("encoder").dump());
      const auto init = pretrain::make_initial_checkpoint(
          enc_cfg, train_cfg.seed, tokenizer.fingerprint());
      result = pretrain::train_mlm(init, train_data, val_data, train_cfg, out);
    }
    std::cout << json{{"final_checkpoint", result.final_checkpoint.string()}}.dump()
              << '\n';
  });

  // ------------------------------------------------------------------ distill
  auto* distill_cmd = app.add_subcommand("distill", "teacher-assistant distillation");
  std::string plan_path;
  distill_cmd->add_option("--plan", plan_path)->required();
  distill_cmd->add_option("--tokenizer", tokenizer_path)->required();
  distill_cmd->add_option("--out", out_dir)->required();
  distill_cmd->callback([&] {
    const auto plan = distill::DistillPlan::load(plan_path);
    const auto tokenizer = tok::TokenizerModel::load(tokenizer_path);
    const auto result = distill::distill_run_files(plan, tokenizer, out_dir);
    std::cout << json{{"final_checkpoint", result.final_checkpoint.string()}}.dump()
              << '\n';
  });

  auto* dtask_cmd = app.add_subcommand("distill-task", "task-specific distillation");
  std::string teacher_path, student_path, data_path;
  int epochs = 10, batch_size = 16;
  double task_lr = 1e-3;
  std::string hidden_map;
  dtask_cmd->add_option("--teacher", teacher_path, "task bundle dir")->required();
  dtask_cmd->add_option("--student", student_path, "student checkpoint dir")
      ->required();
  dtask_cmd->add_option("--data", data_path, "NLU train file")->required();
  dtask_cmd->add_option("--tokenizer", tokenizer_path)->required();
  dtask_cmd->add_option("--out", out_dir)->required();
  dtask_cmd->add_option("--epochs", epochs);
  dtask_cmd->add_option("--batch-size", batch_size);
  dtask_cmd->add_option("--lr", task_lr);
  dtask_cmd->add_option("--seed", seed);
  dtask_cmd->add_option("--layer-map", hidden_map,
                        "student:teacher pairs, e.g. 0:1,1:3");
  dtask_cmd->callback([&] {
    const auto teacher = finetune::NluModelBundle::load(teacher_path);
    const auto student = enc::load_checkpoint(student_path, false);
    const auto tokenizer = tok::TokenizerModel::load(tokenizer_path);
    const auto train = corpus::read_nlu(data_path);
    distill::LossRecipe recipe;
    if (!hidden_map.empty()) {
      distill::HiddenMatchSpec spec;
      std::stringstream stream(hidden_map);
      std::string pair;
      while (std::getline(stream, pair, ',')) {
        const auto colon = pair.find(':');
        if (colon == std::string::npos)
          throw ValidationError("--layer-map expects s:t pairs");
        spec.layer_map.emplace_back(std::stoi(pair.substr(0, colon)),
                                    std::stoi(pair.substr(colon + 1)));
      }
      recipe.hidden = std::move(spec);
    }
    distill::TaskDistillParams params;
    params.epochs = epochs;
    params.batch_size = batch_size;
    params.lr = task_lr;
    params.seed = seed;
    const auto bundle =
        distill::distill_task(teacher, student, train, recipe, params, tokenizer);
    bundle.save(out_dir);
    std::cout << json{{"bundle", out_dir}}.dump() << '\n';
  });

  // ----------------------------------------------------------------- finetune
  auto* ft_cmd = app.add_subcommand("finetune", "intent/slot fine-tuning");
  std::string mode = "full", ckpt_path, train_path, val_path, seeds_arg = "1,2,3";
  ft_cmd->add_option("--mode", mode)->check(CLI::IsMember({"full", "frozen"}));
  ft_cmd->add_option("--ckpt", ckpt_path)->required();
  ft_cmd->add_option("--train", train_path)->required();
  ft_cmd->add_option("--val", val_path)->required();
  ft_cmd->add_option("--tokenizer", tokenizer_path)->required();
  ft_cmd->add_option("--seeds", seeds_arg);
  ft_cmd->add_option("--epochs", epochs);
  ft_cmd->add_option("--out", out_dir)->required();
  ft_cmd->callback([&] {
    const auto ckpt = enc::load_checkpoint(ckpt_path, false);
    const auto tokenizer = tok::TokenizerModel::load(tokenizer_path);
    finetune::FinetuneConfig cfg;
    cfg.mode = mode == "frozen" ? finetune::Mode::frozen : finetune::Mode::full;
    cfg.seeds = parse_u64_list(seeds_arg);
    cfg.epochs = epochs;
    const auto result =
        finetune::finetune(ckpt, corpus::read_nlu(train_path),
                           corpus::read_nlu(val_path), cfg, tokenizer);
    std::filesystem::create_directories(out_dir);
    for (std::size_t i = 0; i < result.bundles.size(); ++i)
      result.bundles[i].save(std::filesystem::path(out_dir) /
                             ("seed_" + std::to_string(cfg.seeds[i])));
    std::cout << json{{"mean_exact_match_error", result.mean.exact_match_error},
                      {"mean_ic_error", result.mean.ic_error},
                      {"mean_sf_error", result.mean.sf_error},
                      {"mean_semer", result.mean.semer},
                      {"stddev_exact_match_error",
                       result.stddev.exact_match_error}}
                     .dump(2)
              << '\n';
  });

  // --------------------------------------------------------------------- eval
  auto* eval_cmd = app.add_subcommand("eval", "metrics");
  eval_cmd->require_subcommand(1);
  std::string lexicon_path, bundle_path, x_arg, y_arg;

  auto* e_ppl = eval_cmd->add_subcommand("perplexity", "masked-LM perplexity");
  e_ppl->add_option("--ckpt", ckpt_path)->required();
  e_ppl->add_option("--data", data_path)->required();
  e_ppl->add_option("--tokenizer", tokenizer_path)->required();
  e_ppl->add_option("--seed", seed);
  e_ppl->callback([&] {
    const auto ckpt = enc::load_checkpoint(ckpt_path, false);
    const auto tokenizer = tok::TokenizerModel::load(tokenizer_path);
    const auto data = pretrain::SequenceDataset::build(
        corpus::read_corpus(data_path), tokenizer, ckpt.config.max_len);
    const double ppl =
        eval::perplexity(ckpt.params, ckpt.config, data, {}, seed);
    std::cout << json{{"perplexity", ppl}}.dump() << '\n';
  });

  auto* e_mask = eval_cmd->add_subcommand("maskfill", "noun mask-filling accuracy");
  e_mask->add_option("--ckpt", ckpt_path)->required();
  e_mask->add_option("--data", data_path)->required();
  e_mask->add_option("--lexicon", lexicon_path)->required();
  e_mask->add_option("--tokenizer", tokenizer_path)->required();
  e_mask->add_option("--seed", seed);
  e_mask->callback([&] {
    const auto ckpt = enc::load_checkpoint(ckpt_path, false);
    const auto tokenizer = tok::TokenizerModel::load(tokenizer_path);
    std::map<std::string, std::set<std::string>> lexicon;
    std::ifstream in(lexicon_path);
    if (!in) throw IoError("cannot open " + lexicon_path);
    std::string word;
    while (std::getline(in, word))
      if (!word.empty()) lexicon["en"].insert(word);
    const auto tasks = eval::build_mask_fill_tasks(
        corpus::read_corpus(data_path), lexicon, tokenizer, ckpt.config.max_len,
        seed);
    std::cout << json{{"mask_fill_accuracy",
                       eval::mask_fill_accuracy(ckpt.params, ckpt.config,
                                                tasks.tasks)},
                      {"tasks", tasks.tasks.size()},
                      {"skipped", tasks.skipped}}
                     .dump()
              << '\n';
  });

  auto* e_nlu = eval_cmd->add_subcommand("nlu", "SemER / exact match / IC-SF errors");
  e_nlu->add_option("--bundle", bundle_path)->required();
  e_nlu->add_option("--data", data_path)->required();
  e_nlu->add_option("--tokenizer", tokenizer_path)->required();
  e_nlu->callback([&] {
    const auto bundle = finetune::NluModelBundle::load(bundle_path);
    const auto tokenizer = tok::TokenizerModel::load(tokenizer_path);
    const auto data = corpus::read_nlu(data_path);
    const auto metrics = finetune::evaluate_bundle(bundle, tokenizer, data);
    std::cout << json{{"exact_match_error", metrics.exact_match_error},
                      {"ic_error", metrics.ic_error},
                      {"sf_error", metrics.sf_error},
                      {"semer", metrics.semer}}
                     .dump()
              << '\n';
  });

  auto* e_corr = eval_cmd->add_subcommand("correlate", "metric correlation");
  e_corr->add_option("--x", x_arg)->required();
  e_corr->add_option("--y", y_arg)->required();
  e_corr->callback([&] {
    const auto corr =
        eval::correlation_report(parse_double_list(x_arg), parse_double_list(y_arg));
    std::cout << json{{"pearson_r", corr.pearson_r},
                      {"r_squared", corr.r_squared},
                      {"spearman_rho", corr.spearman_rho}}
                     .dump()
              << '\n';
  });

  // ----------------------------------------------------------------- pipeline
  auto* pipe_cmd = app.add_subcommand("pipeline", "end-to-end training pipeline");
  pipe_cmd->require_subcommand(1);
  std::string recipe_path, workdir;
  int max_stages = -1;

  auto* p_init = pipe_cmd->add_subcommand("init", "write a recipe preset");
  p_init->add_option("--preset", preset)->default_val("toy");
  p_init->add_option("--seed", seed);
  p_init->add_option("--out", out_path)->required();
  p_init->callback([&] {
    if (preset != "toy") throw ConfigError("unknown recipe preset '" + preset + "'");
    pipeline::PipelineRecipe::toy_preset(seed).save(out_path);
  });

  auto* p_run = pipe_cmd->add_subcommand("run", "execute a recipe");
  p_run->add_option("--recipe", recipe_path)->required();
  p_run->add_option("--workdir", workdir)->required();
  p_run->add_option("--max-stages", max_stages,
                    "stop after N stages (resume later)");
  p_run->callback([&] {
    auto recipe = pipeline::PipelineRecipe::load(recipe_path);
    if (const char* env_seed = std::getenv("DFORGE_SEED"))
      recipe.seed = std::stoull(env_seed);
    const auto summary = pipeline::run_pipeline(recipe, workdir, max_stages);
    std::cout << json{{"stages_run", summary.stages_run},
                      {"stages_skipped", summary.stages_skipped},
                      {"steps_executed", summary.steps_executed}}
                     .dump()
              << '\n';
  });

  // ------------------------------------------------------------------- report
  auto* report_cmd = app.add_subcommand("report", "consolidated evaluation report");
  std::string baseline = "stage1-teacher";
  report_cmd->add_option("--workdir", workdir)->required();
  report_cmd->add_option("--baseline", baseline);
  report_cmd->callback([&] {
    const auto paths = pipeline::report(workdir, baseline);
    std::cout << json{{"consolidated", paths.consolidated_json.string()},
                      {"table", paths.table_tsv.string()},
                      {"deltas", paths.deltas_tsv.string()}}
                     .dump()
              << '\n';
  });

  CLI11_PARSE(app, argc, argv);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const dforge::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
