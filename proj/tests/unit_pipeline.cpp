#include <doctest.h>

#include <cstdlib>
#include <fstream>

#include <json.hpp>

#include "dforge/pipeline/pipeline.hpp"
#include "helpers.hpp"

using namespace dforge;
using json = nlohmann::json;

namespace {

// A heavily shrunk recipe exercising every stage in well under a minute.
pipeline::PipelineRecipe micro_recipe(std::uint64_t seed = 7) {
  auto recipe = pipeline::PipelineRecipe::toy_preset(seed);

  const json encoder{{"n_layers", 2},    {"hidden", 32}, {"ffn_inner", 128},
                     {"n_heads", 4},     {"head_size", 8}, {"dropout", 0.1},
                     {"max_len", 64},    {"vocab_size", 320}};
  const json student{{"n_layers", 2},    {"hidden", 24}, {"ffn_inner", 96},
                     {"n_heads", 4},     {"head_size", 6}, {"dropout", 0.1},
                     {"max_len", 64},    {"vocab_size", 320}};
  const auto train = [](std::int64_t steps) {
    return json{{"peak_lr", 1e-3},  {"min_lr", 1e-5},
                {"warmup_steps", 5}, {"decay_steps", steps},
                {"batch_tokens", 768}, {"max_steps", steps},
                {"weight_decay", 0.1}, {"dropout", 0.1},
                {"eval_interval", 0},  {"checkpoint_interval", 0}};
  };

  for (auto& [stage, cfg_text] : recipe.stages) {
    json cfg = json::parse(cfg_text);
    if (stage == "data") {
      cfg = json{{"general_sentences", 400}, {"general_val_sentences", 80},
                 {"stage1_mix_size", 600},   {"val_mix_size", 120},
                 {"pack_words", 32},         {"nlu_train", 120},
                 {"nlu_val", 30},            {"nlu_test", 40},
                 {"indomain_draws", 1500},   {"indomain_val_draws", 300}};
    } else if (stage == "tokenizer") {
      cfg["vocab_size"] = 320;
    } else if (stage == "stage2-corpus") {
      cfg["mix_size"] = 500;
    } else if (stage == "stage1") {
      cfg["encoder"] = encoder;
      cfg["train"] = train(24);
    } else if (stage == "stage2") {
      cfg["train"] = train(12);
    } else if (stage == "distill-intermediate") {
      cfg["student"] = student;
      cfg["train"] = train(10);
      cfg["stage1_updates"] = 10;
      cfg["stage2_updates"] = 8;
    } else if (stage == "interlude") {
      cfg["train"] = train(8);
    } else if (stage == "distill-final") {
      cfg["student"] = student;
      cfg["train"] = train(10);
      cfg["updates"] = 10;
      cfg["recipe"] = json{{"mlm_ce", 1.0},
                           {"soft_ce", 1.0},
                           {"hidden_weight", 1.0},
                           {"layer_map", json::array({json::array({0, 0}),
                                                      json::array({1, 1})})}};
    } else if (stage == "finetune") {
      cfg["epochs"] = 1;
      cfg["head_hidden"] = 32;
      cfg["seeds"] = json::array({1});
    }
    cfg_text = cfg.dump();
  }
  return recipe;
}

}  // namespace

TEST_CASE("manifests: round trip, run ids, provenance chain") {
  testutil::TempDir dir("manifest");
  pipeline::RunManifest m;
  m.run_id = pipeline::compute_run_id("stage-a", {{"in", "h1"}}, "{}");
  m.stage = "stage-a";
  m.inputs = {{"in", "h1"}};
  m.outputs = {{"mid", "h2"}};
  m.config_json = "{}";
  m.seeds = {7};
  pipeline::append_manifest(dir.path(), m);

  pipeline::RunManifest m2;
  m2.run_id = pipeline::compute_run_id("stage-b", {{"mid", "h2"}}, "{}");
  m2.stage = "stage-b";
  m2.inputs = {{"mid", "h2"}};
  m2.outputs = {{"final", "h3"}};
  pipeline::append_manifest(dir.path(), m2);

  const auto manifests = pipeline::load_manifests(dir.path());
  REQUIRE(manifests.size() == 2);
  CHECK(manifests[0].stage == "stage-a");
  CHECK(manifests[0].seeds == std::vector<std::uint64_t>{7});

  // run ids are a pure function of (stage, inputs, config).
  CHECK(pipeline::compute_run_id("stage-a", {{"in", "h1"}}, "{}") == m.run_id);
  CHECK(pipeline::compute_run_id("stage-a", {{"in", "h1"}}, "{\"x\":1}") !=
        m.run_id);

  // From the final artifact hash the whole chain is recoverable.
  const auto chain = pipeline::provenance_chain(dir.path(), "h3");
  REQUIRE(chain.size() == 2);
  CHECK(chain[0] == m2.run_id);
  CHECK(chain[1] == m.run_id);
}

TEST_CASE("pipeline: full micro run, idempotent re-run, resume identity") {
  testutil::TempDir dir("pipe");
  const auto recipe = micro_recipe();

  const auto first = pipeline::run_pipeline(recipe, dir / "a");
  CHECK(first.stages_run == 10);
  CHECK(first.steps_executed > 0);

  // Re-running a completed recipe executes zero training steps.
  const auto second = pipeline::run_pipeline(recipe, dir / "a");
  CHECK(second.stages_run == 0);
  CHECK(second.stages_skipped == 10);
  CHECK(second.steps_executed == 0);

  // Interrupt after four stages, then resume; final artifacts match the
  // uninterrupted run byte for byte.
  const auto partial = pipeline::run_pipeline(recipe, dir / "b", 4);
  CHECK(partial.stages_run == 4);
  const auto resumed = pipeline::run_pipeline(recipe, dir / "b");
  CHECK(resumed.stages_skipped == 4);

  for (const auto rel :
       {"checkpoints/student", "checkpoints/stage2", "checkpoints/stage1"}) {
    std::filesystem::path last_a, last_b;
    for (const auto& entry :
         std::filesystem::directory_iterator(dir.path() / "a" / rel))
      if (last_a.empty() || entry.path().filename() > last_a.filename())
        last_a = entry.path();
    for (const auto& entry :
         std::filesystem::directory_iterator(dir.path() / "b" / rel))
      if (last_b.empty() || entry.path().filename() > last_b.filename())
        last_b = entry.path();
    CHECK(testutil::read_file(last_a / "weights.bin") ==
          testutil::read_file(last_b / "weights.bin"));
  }
  CHECK(testutil::read_file(dir.path() / "a" / "reports" / "student-final.json") ==
        testutil::read_file(dir.path() / "b" / "reports" / "student-final.json"));

  // Reports: consolidated output is byte-identical across invocations.
  const auto r1 = pipeline::report(dir / "a");
  const auto text1 = testutil::read_file(r1.consolidated_json);
  const auto deltas1 = testutil::read_file(r1.deltas_tsv);
  const auto r2 = pipeline::report(dir / "a");
  CHECK(testutil::read_file(r2.consolidated_json) == text1);
  CHECK(testutil::read_file(r2.deltas_tsv) == deltas1);
  CHECK(text1.find("stage2-teacher") != std::string::npos);
  CHECK(deltas1.find("val_perplexity") != std::string::npos);

  // Provenance: the fine-tuned bundle's chain reaches the data stage.
  const auto manifests = pipeline::load_manifests(dir / "a");
  std::string bundle_hash;
  for (const auto& m : manifests)
    if (m.stage == "finetune") bundle_hash = m.outputs.at("student-ft");
  REQUIRE(!bundle_hash.empty());
  const auto chain = pipeline::provenance_chain(dir / "a", bundle_hash);
  CHECK(chain.size() >= 7);  // finetune back through data

  // Stale artifact: corrupting a completed stage's output is detected.
  {
    std::ofstream out(dir.path() / "a" / "corpora" / "stage1_train.jsonl",
                      std::ios::app);
    out << "\n";
  }
  CHECK_THROWS_AS(pipeline::run_pipeline(recipe, dir / "a"), IoError);
}

TEST_CASE("pipeline: workdir lock and recipe validation") {
  testutil::TempDir dir("lock");
  std::filesystem::create_directories(dir / "w");
  {
    std::ofstream lock(dir.path() / "w" / "lock");
    lock << "held\n";
  }
  CHECK_THROWS_AS(pipeline::run_pipeline(micro_recipe(), dir / "w"), IoError);
  std::filesystem::remove(dir.path() / "w" / "lock");

  // Unknown stages fail before any compute.
  pipeline::PipelineRecipe bad;
  bad.stages = {{"nonsense", "{}"}};
  CHECK_THROWS_AS(pipeline::run_pipeline(bad, dir / "w"), ValidationError);

  // A recipe that needs the tokenizer before it exists fails on input
  // validation, before any training.
  pipeline::PipelineRecipe missing;
  missing.stages = {{"stage1", micro_recipe().stages[3].second}};
  CHECK_THROWS_AS(pipeline::run_pipeline(missing, dir / "w2"), ValidationError);

  // Recipe files round-trip.
  const auto recipe = micro_recipe(13);
  recipe.save(dir / "recipe.json");
  const auto loaded = pipeline::PipelineRecipe::load(dir / "recipe.json");
  CHECK(loaded.seed == 13);
  CHECK(loaded.stages.size() == recipe.stages.size());
  CHECK(loaded.stages[0].first == "data");
}

TEST_CASE("cli: spoken-form pipeline smoke test with exit codes") {
  testutil::TempDir dir("cli");
  const std::string cli = DFORGE_CLI_PATH;
  const auto run = [&](const std::string& args) {
    const std::string cmd = cli + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
  };

  const std::string base = dir.path().string();
  CHECK(run("corpus gen-text --sentences 60 --seed 3 --out " + base +
            "/gen.jsonl") == 0);
  CHECK(run("corpus spokenform --input " + base + "/gen.jsonl --out " + base +
            "/spoken.jsonl") == 0);
  CHECK(run("tokenizer train --input " + base +
            "/spoken.jsonl --vocab-size 160 --seed 5 --out " + base +
            "/model.tok") == 0);
  CHECK(run("tokenizer metrics --model " + base + "/model.tok --input " + base +
            "/spoken.jsonl") == 0);
  CHECK(run("corpus gen-nlu --preset domain1-like --train 30 --val 5 --test 5 "
            "--seed 2 --out-dir " +
            base + "/nlu") == 0);
  CHECK(run("eval correlate --x 1,2,3 --y 3,2,1") == 0);

  // Exit code 2: validation/configuration errors.
  CHECK(run("corpus gen-nlu --preset bogus --out-dir " + base + "/x") == 2);
  CHECK(run("eval correlate --x 1,1,1 --y 1,2,3") == 2);
  // Exit code 4: i/o errors.
  CHECK(run("corpus dedup --input " + base + "/absent.jsonl --out " + base +
            "/y.jsonl") == 4);
}
