#include <doctest.h>

#include <cmath>

#include "dforge/corpus/nlu_gen.hpp"
#include "dforge/finetune/finetune.hpp"
#include "dforge/pretrain/trainer.hpp"
#include "dforge/tokenizer/train.hpp"
#include "helpers.hpp"

using namespace dforge;

namespace {

struct TaskWorld {
  tok::TokenizerModel tokenizer;
  corpus::NluSplits splits;
  enc::Checkpoint base;
};

TaskWorld make_task_world(std::size_t n_train = 60, std::size_t n_val = 20,
                          std::int64_t pretrain_steps = 0) {
  const auto grammar = corpus::grammar_preset("domain1-like");
  auto splits = corpus::generate_synthetic_nlu(grammar, n_train, n_val, 0, 5);

  const auto unlabeled = corpus::sample_utterances(grammar, 3000, 9);
  std::vector<std::string> texts;
  for (const auto& e : unlabeled) texts.push_back(e.text);
  auto tokenizer = tok::train_unigram(texts, 240, {}, 1);

  enc::EncoderConfig cfg;
  cfg.n_layers = 2;
  cfg.hidden = 32;
  cfg.ffn_inner = 128;
  cfg.n_heads = 4;
  cfg.head_size = 8;
  cfg.max_len = 48;
  cfg.vocab_size = static_cast<std::int32_t>(tokenizer.size());
  auto base = pretrain::make_initial_checkpoint(cfg, 3, tokenizer.fingerprint());
  if (pretrain_steps > 0) {
    const auto data = pretrain::SequenceDataset::build(unlabeled, tokenizer, 48);
    pretrain::TrainConfig tcfg;
    tcfg.peak_lr = 2e-3;
    tcfg.min_lr = 1e-5;
    tcfg.warmup_steps = 30;
    tcfg.decay_steps = pretrain_steps;
    tcfg.max_steps = pretrain_steps;
    tcfg.batch_tokens = 1024;
    tcfg.seed = 3;
    tcfg.eval_interval = 0;
    testutil::TempDir dir("task-pretrain");
    const auto run = pretrain::train_mlm(base, data, data, tcfg, dir.path());
    base = enc::load_checkpoint(run.final_checkpoint, false);
  }
  return {std::move(tokenizer), std::move(splits), std::move(base)};
}

}  // namespace

TEST_CASE("finetune: frozen mode leaves every encoder tensor byte-identical") {
  auto world = make_task_world(40, 12);
  finetune::FinetuneConfig cfg;
  cfg.mode = finetune::Mode::frozen;
  cfg.epochs = 2;
  cfg.seeds = {1};
  cfg.head_hidden = 32;

  const std::string digest_before = finetune::encoder_digest(world.base.params);
  const auto result = finetune::finetune(world.base, world.splits.train,
                                         world.splits.val, cfg, world.tokenizer);
  enc::ParameterSet<float> encoder_only;
  for (const auto& [name, tensor] : result.bundles[0].params.tensors)
    if (name.rfind("head.", 0) != 0) encoder_only.tensors.emplace(name, tensor);
  CHECK(finetune::encoder_digest(encoder_only) == digest_before);

  // Default learning rates: 1e-3 frozen, 2e-5 full.
  CHECK(cfg.effective_lr() == doctest::Approx(1e-3));
  finetune::FinetuneConfig full;
  CHECK(full.effective_lr() == doctest::Approx(2e-5));
}

TEST_CASE("finetune: full mode can drive train exact match error to zero") {
  auto world = make_task_world(16, 0, 300);  // brief pretraining first
  finetune::FinetuneConfig cfg;
  cfg.mode = finetune::Mode::full;
  cfg.peak_lr = 4e-3;  // toy-scale overfit check
  cfg.epochs = 20;
  cfg.seeds = {1};
  cfg.head_hidden = 64;
  cfg.batch_size = 4;
  cfg.dropout = 0.0;

  const auto result = finetune::finetune(world.base, world.splits.train, {},
                                         cfg, world.tokenizer);
  const auto metrics = finetune::evaluate_bundle(
      result.bundles[0], world.tokenizer, world.splits.train);
  CHECK(metrics.exact_match_error == doctest::Approx(0.0));

  // Memorization: gold parses from the train set come back verbatim.
  const auto& gold = world.splits.train.front();
  const auto hyp =
      finetune::predict(result.bundles[0], world.tokenizer, gold.utterance);
  CHECK(hyp.intent == gold.intent);
  CHECK(hyp.slots == gold.slots);
}

TEST_CASE("finetune: training loss decreases after two epochs for every seed") {
  auto world = make_task_world(48, 0);
  finetune::FinetuneConfig cfg;
  cfg.mode = finetune::Mode::full;
  cfg.peak_lr = 5e-4;
  cfg.epochs = 3;
  cfg.seeds = {1, 2, 3};
  cfg.head_hidden = 32;
  cfg.dropout = 0.0;

  const auto result = finetune::finetune(world.base, world.splits.train, {},
                                         cfg, world.tokenizer);
  REQUIRE(result.epoch_losses.size() == 3);
  for (const auto& losses : result.epoch_losses) {
    REQUIRE(losses.size() == 3);
    CHECK(losses[2] < losses[0]);
  }

  // Three seeds: the summary means average three runs.
  REQUIRE(result.per_seed.size() == 3);
  double mean = 0.0;
  for (const auto& m : result.per_seed) mean += m.exact_match_error;
  mean /= 3.0;
  CHECK(result.mean.exact_match_error == doctest::Approx(mean).epsilon(1e-12));
}

TEST_CASE("finetune: validation labels outside the train tables are rejected") {
  auto world = make_task_world(30, 10);
  auto bad_val = world.splits.val;
  bad_val[0].intent = "no_such_intent";
  finetune::FinetuneConfig cfg;
  cfg.epochs = 1;
  cfg.seeds = {1};
  CHECK_THROWS_AS(finetune::finetune(world.base, world.splits.train, bad_val,
                                     cfg, world.tokenizer),
                  ValidationError);
}

TEST_CASE("predict: determinism, shapes, alignment, BIO repair") {
  auto world = make_task_world(30, 0);
  finetune::FinetuneConfig cfg;
  cfg.epochs = 1;
  cfg.seeds = {1};
  cfg.head_hidden = 16;
  const auto result = finetune::finetune(world.base, world.splits.train, {},
                                         cfg, world.tokenizer);
  const auto& bundle = result.bundles[0];

  const auto a = finetune::predict(bundle, world.tokenizer, "turn on the lamp");
  const auto b = finetune::predict(bundle, world.tokenizer, "turn on the lamp");
  CHECK(a.intent == b.intent);
  CHECK(a.slots == b.slots);

  // One tag per whitespace word, whatever the subword segmentation does.
  for (const auto& utterance :
       {std::string("lamp"), std::string("order three pizza to the office"),
        std::string("wake me at seven on sunday please thanks")}) {
    const auto hyp = finetune::predict(bundle, world.tokenizer, utterance);
    CHECK(hyp.slots.size() == corpus::whitespace_words(utterance).size());
    corpus::NluExample repaired;
    repaired.utterance = utterance;
    repaired.intent = hyp.intent;
    repaired.slots = hyp.slots;
    // BIO repair guarantees well-formedness.
    CHECK_NOTHROW(corpus::validate_nlu_example(repaired));
  }

  CHECK_THROWS_AS(finetune::predict(bundle, world.tokenizer, "   "),
                  ValidationError);
}

TEST_CASE("bundles: save/load round trip preserves labels and weights") {
  auto world = make_task_world(25, 0);
  finetune::FinetuneConfig cfg;
  cfg.epochs = 1;
  cfg.seeds = {1};
  cfg.head_hidden = 16;
  const auto result = finetune::finetune(world.base, world.splits.train, {},
                                         cfg, world.tokenizer);

  testutil::TempDir dir("bundle");
  result.bundles[0].save(dir / "b");
  const auto loaded = finetune::NluModelBundle::load(dir / "b");
  CHECK(loaded.intent_labels == result.bundles[0].intent_labels);
  CHECK(loaded.slot_labels == result.bundles[0].slot_labels);
  const auto before =
      finetune::predict(result.bundles[0], world.tokenizer, "call anna in boston");
  const auto after = finetune::predict(loaded, world.tokenizer, "call anna in boston");
  CHECK(before.intent == after.intent);
  CHECK(before.slots == after.slots);
}

TEST_CASE("encode_nlu_example: first-subword supervision, IGNORE elsewhere") {
  auto world = make_task_world(20, 0);
  finetune::NluModelBundle bundle;
  bundle.config = world.base.config;
  auto [intents, slots] = finetune::derive_label_tables(world.splits.train);
  bundle.config.n_intents = static_cast<int>(intents.size());
  bundle.config.n_tags = static_cast<int>(slots.size());
  bundle.intent_labels = intents;
  bundle.slot_labels = slots;

  const auto& ex = world.splits.train.front();
  const auto encoded = finetune::encode_nlu_example(ex, world.tokenizer, bundle);
  CHECK(encoded.ids.front() == tok::kBosId);
  CHECK(encoded.ids.back() == tok::kEosId);
  CHECK(encoded.word_first_pos.size() == ex.slots.size());
  // Exactly one supervised position per word, on its first subword.
  std::size_t supervised = 0;
  for (const auto label : encoded.slot_labels)
    supervised += label != enc::kIgnoreLabel;
  CHECK(supervised == ex.slots.size());
  for (std::size_t w = 0; w < ex.slots.size(); ++w) {
    const auto pos = encoded.word_first_pos[w];
    CHECK(encoded.slot_labels[pos] == bundle.slot_id(ex.slots[w]));
  }
}
