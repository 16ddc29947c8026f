#include <doctest.h>

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "dforge/common/hash.hpp"
#include "dforge/corpus/io.hpp"
#include "dforge/corpus/text_gen.hpp"
#include "dforge/distill/losses.hpp"
#include "dforge/distill/runner.hpp"
#include "dforge/pretrain/trainer.hpp"
#include "dforge/tokenizer/train.hpp"
#include "helpers.hpp"

using namespace dforge;

namespace {

enc::Mat<double> random_logits(long rows, long cols, std::uint64_t seed) {
  Rng rng(seed);
  enc::Mat<double> out(rows, cols);
  for (long r = 0; r < rows; ++r)
    for (long c = 0; c < cols; ++c) out(r, c) = rng.normal(0.0, 2.0);
  return out;
}

double entropy_of_softmax(const enc::Mat<double>& logits, long row) {
  double max = -1e300;
  for (long j = 0; j < logits.cols(); ++j) max = std::max(max, logits(row, j));
  double z = 0.0;
  for (long j = 0; j < logits.cols(); ++j) z += std::exp(logits(row, j) - max);
  double h = 0.0;
  for (long j = 0; j < logits.cols(); ++j) {
    const double p = std::exp(logits(row, j) - max) / z;
    if (p > 0) h -= p * std::log(p);
  }
  return h;
}

struct DistillWorld {
  tok::TokenizerModel tokenizer;
  pretrain::SequenceDataset data;
  enc::EncoderConfig teacher_cfg;
  enc::EncoderConfig student_cfg;
  std::filesystem::path teacher_ckpt;
};

DistillWorld make_world(const testutil::TempDir& dir, std::int64_t teacher_steps) {
  const auto grammar = corpus::general_text_grammar();
  const auto records = corpus::generate_text(grammar, 260, 31);
  std::vector<std::string> texts;
  for (const auto& record : records) texts.push_back(record.text);

  DistillWorld world{tok::train_unigram(texts, 260, {}, 1), {}, {}, {}, {}};
  world.teacher_cfg.n_layers = 4;
  world.teacher_cfg.hidden = 32;
  world.teacher_cfg.ffn_inner = 128;
  world.teacher_cfg.n_heads = 4;
  world.teacher_cfg.head_size = 8;
  world.teacher_cfg.max_len = 48;
  world.teacher_cfg.vocab_size = static_cast<std::int32_t>(world.tokenizer.size());
  world.student_cfg = world.teacher_cfg;
  world.student_cfg.n_layers = 2;

  world.data = pretrain::SequenceDataset::build(records, world.tokenizer,
                                                world.teacher_cfg.max_len);

  pretrain::TrainConfig cfg;
  cfg.peak_lr = 2e-3;
  cfg.min_lr = 1e-5;
  cfg.warmup_steps = 20;
  cfg.decay_steps = teacher_steps;
  cfg.max_steps = teacher_steps;
  cfg.batch_tokens = 1024;
  cfg.seed = 17;
  cfg.eval_interval = 0;
  const auto init = pretrain::make_initial_checkpoint(
      world.teacher_cfg, 5, world.tokenizer.fingerprint());
  const auto result =
      pretrain::train_mlm(init, world.data, world.data, cfg, dir / "teacher");
  world.teacher_ckpt = result.final_checkpoint;
  return world;
}

}  // namespace

TEST_CASE("soft_cross_entropy: self-distillation floor is the teacher entropy") {
  const auto logits = random_logits(3, 16, 9);
  const auto result =
      distill::soft_cross_entropy(logits, logits, 1.0, {0, 1, 2});
  double expected = 0.0;
  for (long r = 0; r < 3; ++r) expected += entropy_of_softmax(logits, r);
  CHECK(result.sum == doctest::Approx(expected).epsilon(1e-9));
  CHECK(result.count == 3);
}

TEST_CASE("soft_cross_entropy: one-hot teacher reduces to hard CE") {
  const auto student = random_logits(1, 12, 3);
  enc::Mat<double> teacher = enc::Mat<double>::Zero(1, 12);
  teacher(0, 7) = 200.0;  // large margin: softmax is one-hot at 7
  const auto soft = distill::soft_cross_entropy(student, teacher, 1.0, {0});

  // Hard CE against the argmax label, recomputed directly.
  double max = student.maxCoeff();
  double z = 0.0;
  for (long j = 0; j < 12; ++j) z += std::exp(student(0, j) - max);
  const double hard = std::log(z) + max - student(0, 7);
  CHECK(soft.sum == doctest::Approx(hard).epsilon(1e-6));
}

TEST_CASE("soft_cross_entropy: shift invariance and shape checks") {
  const auto student = random_logits(2, 8, 4);
  const auto teacher = random_logits(2, 8, 5);
  const auto base = distill::soft_cross_entropy(student, teacher, 1.0, {0, 1});
  enc::Mat<double> shifted = student;
  shifted.row(0).array() += 17.5;
  const auto after = distill::soft_cross_entropy(shifted, teacher, 1.0, {0, 1});
  CHECK(base.sum == doctest::Approx(after.sum).epsilon(1e-9));

  CHECK_THROWS_AS(
      distill::soft_cross_entropy(student, random_logits(2, 9, 6), 1.0, {0}),
      ValidationError);
  CHECK_THROWS_AS(distill::soft_cross_entropy(student, teacher, 0.0, {0}),
                  ValidationError);
}

TEST_CASE("soft_cross_entropy: analytic gradient matches finite differences") {
  auto student = random_logits(2, 10, 11);
  const auto teacher = random_logits(2, 10, 12);
  const std::vector<long> positions = {0, 1};
  const double temperature = 2.0;
  const auto result =
      distill::soft_cross_entropy(student, teacher, temperature, positions);

  const double step = 1e-6;
  double max_rel = 0.0;
  for (long r = 0; r < 2; ++r) {
    for (long c = 0; c < 10; ++c) {
      const double original = student(r, c);
      student(r, c) = original + step;
      const double up =
          distill::soft_cross_entropy(student, teacher, temperature, positions).sum;
      student(r, c) = original - step;
      const double down =
          distill::soft_cross_entropy(student, teacher, temperature, positions).sum;
      student(r, c) = original;
      const double numeric = (up - down) / (2.0 * step);
      const double analytic = result.d_student(r, c);
      max_rel = std::max(max_rel,
                         std::abs(analytic - numeric) /
                             std::max({std::abs(analytic), std::abs(numeric), 1e-6}));
    }
  }
  CHECK(max_rel < 1e-3);
}

TEST_CASE("hidden_match_loss: zero for identical traces, eps^2 for one layer") {
  enc::ForwardTrace<double> a;
  a.ids = {1, 2, 3};
  a.mask = {1, 1, 1};
  for (int layer = 0; layer <= 2; ++layer)
    a.hidden.push_back(random_logits(3, 8, 20 + static_cast<std::uint64_t>(layer)));
  enc::ForwardTrace<double> b = a;

  const std::vector<std::pair<int, int>> identity_map = {{0, 0}, {1, 1}};
  const auto zero = distill::hidden_match_loss<double>(a, b, identity_map, nullptr);
  CHECK(zero.sum == 0.0);

  // Student = teacher + eps at every element of one mapped layer: the mean
  // over layers is eps^2 / n_layers_mapped.
  const double eps = 0.25;
  b.hidden[1].array() += eps;
  const auto bumped = distill::hidden_match_loss<double>(b, a, identity_map, nullptr);
  const double mean = bumped.sum / (2.0 * 3.0 * 8.0);
  CHECK(mean == doctest::Approx(eps * eps / 2.0).epsilon(1e-9));
}

TEST_CASE("hidden_match_loss: the published layer map validates; off-by-one fails") {
  const std::vector<std::pair<int, int>> map = {{0, 3}, {1, 7}, {2, 11}, {3, 15}};
  CHECK_NOTHROW(distill::validate_layer_map(map, 4, 16));
  const std::vector<std::pair<int, int>> bad = {{0, 3}, {1, 7}, {2, 11}, {3, 16}};
  CHECK_THROWS_AS(distill::validate_layer_map(bad, 4, 16), ConfigError);
}

TEST_CASE("hidden_match_loss: width mismatch requires projections") {
  enc::ForwardTrace<double> narrow;
  narrow.ids = {1, 2};
  narrow.mask = {1, 1};
  narrow.hidden = {random_logits(2, 4, 1), random_logits(2, 4, 2)};
  enc::ForwardTrace<double> wide;
  wide.ids = {1, 2};
  wide.mask = {1, 1};
  wide.hidden = {random_logits(2, 8, 3), random_logits(2, 8, 4)};

  const std::vector<std::pair<int, int>> map = {{0, 0}};
  CHECK_THROWS_AS(distill::hidden_match_loss<double>(narrow, wide, map, nullptr),
                  ConfigError);
  const auto projections = distill::init_projections<double>(map, 4, 8, 7);
  CHECK_NOTHROW(distill::hidden_match_loss<double>(narrow, wide, map, &projections));
  // Equal widths need no projections.
  CHECK(distill::init_projections<double>(map, 8, 8, 7).weights.empty());
}

TEST_CASE("recipes: all-zero weights are rejected") {
  distill::LossRecipe recipe;
  recipe.mlm_ce = 0.0;
  recipe.soft_ce = 0.0;
  CHECK_THROWS_AS(recipe.validate(), ValidationError);
  recipe.hidden = distill::HiddenMatchSpec{{{0, 0}}, 0.0};
  CHECK_THROWS_AS(recipe.validate(), ValidationError);
  recipe.hidden->weight = 1.0;
  CHECK_NOTHROW(recipe.validate());
}

TEST_CASE("distill_run: zero-update plan returns the initialized student") {
  testutil::TempDir dir("distill0");
  auto world = make_world(dir, 10);

  distill::DistillPlan plan;
  plan.student = world.student_cfg;
  plan.train.max_steps = 1;
  plan.train.seed = 3;
  plan.seed = 21;
  distill::DistillSegment seg;
  seg.teacher_checkpoint = world.teacher_ckpt;
  seg.updates = 0;
  plan.segments = {seg};

  const auto result = distill::distill_run(plan, {world.data}, dir / "out");
  const auto student = enc::load_checkpoint(result.final_checkpoint, false);
  const auto expected =
      enc::init_params<float>(world.student_cfg, mix_seed(21, "student-init"));
  for (const auto& [name, tensor] : expected.tensors)
    CHECK(tensor == student.params.tensors.at(name));
}

TEST_CASE("distill_run: teacher immutability, continuity, loss additivity") {
  testutil::TempDir dir("distill-run");
  auto world = make_world(dir, 40);
  const std::string teacher_digest_before =
      enc::checkpoint_weights_digest(world.teacher_ckpt);

  distill::DistillPlan plan;
  plan.student = world.student_cfg;
  plan.train.peak_lr = 1e-3;
  plan.train.min_lr = 1e-5;
  plan.train.warmup_steps = 5;
  plan.train.decay_steps = 20;
  plan.train.batch_tokens = 1024;
  plan.train.seed = 3;
  plan.seed = 21;
  distill::DistillSegment seg1;
  seg1.teacher_checkpoint = world.teacher_ckpt;
  seg1.updates = 12;
  distill::DistillSegment seg2 = seg1;
  seg2.updates = 6;
  seg2.recipe.hidden =
      distill::HiddenMatchSpec{{{0, 1}, {1, 3}}, 1.0};  // student -> teacher
  plan.segments = {seg1, seg2};

  const auto two_segments =
      distill::distill_run(plan, {world.data, world.data}, dir / "two");

  // The teacher checkpoint is bit-identical after the run.
  CHECK(enc::checkpoint_weights_digest(world.teacher_ckpt) ==
        teacher_digest_before);

  // Segment continuity: a one-segment prefix of the same plan lands exactly
  // on the two-segment run's segment-1 checkpoint.
  distill::DistillPlan prefix = plan;
  prefix.segments = {seg1};
  const auto one_segment =
      distill::distill_run(prefix, {world.data}, dir / "one");
  CHECK(testutil::read_file(one_segment.final_checkpoint / "weights.bin") ==
        testutil::read_file(dir.path() / "two" / "step_000012" / "weights.bin"));

  // Logged total equals the weighted component sum.
  REQUIRE(!two_segments.log.empty());
  for (const auto& record : two_segments.log) {
    const double hidden_weight = record.segment == 1 ? 1.0 : 0.0;
    const double expected = 1.0 * record.mlm_ce + 1.0 * record.soft_ce +
                            hidden_weight * record.hidden;
    CHECK(std::abs(record.total - expected) < 1e-9);
    if (record.segment == 0) CHECK(record.hidden == 0.0);
  }
}

TEST_CASE("distill_run: fingerprint mismatches are configuration errors") {
  testutil::TempDir dir("distill-fp");
  auto world = make_world(dir, 5);

  // A dataset built with a different tokenizer must be rejected.
  const auto grammar = corpus::general_text_grammar();
  const auto records = corpus::generate_text(grammar, 120, 77);
  std::vector<std::string> texts;
  for (const auto& record : records) texts.push_back(record.text);
  const auto other_tok = tok::train_unigram(texts, 200, {}, 2);
  const auto other_data =
      pretrain::SequenceDataset::build(records, other_tok, 48);

  distill::DistillPlan plan;
  plan.student = world.student_cfg;
  plan.student.vocab_size = static_cast<std::int32_t>(other_tok.size());
  plan.train.seed = 3;
  distill::DistillSegment seg;
  seg.teacher_checkpoint = world.teacher_ckpt;
  seg.updates = 1;
  plan.segments = {seg};
  CHECK_THROWS_AS(distill::distill_run(plan, {other_data}, dir / "out"),
                  ConfigError);
}

TEST_CASE("teacherless interlude delegates to the continuation loop") {
  testutil::TempDir dir("interlude");
  auto world = make_world(dir, 8);

  pretrain::TrainConfig cfg;
  cfg.peak_lr = 5e-4;
  cfg.min_lr = 1e-5;
  cfg.warmup_steps = 2;
  cfg.decay_steps = 6;
  cfg.max_steps = 6;
  cfg.batch_tokens = 1024;
  cfg.seed = 13;
  cfg.eval_interval = 0;

  const auto a = distill::teacherless_interlude(world.teacher_ckpt, world.data,
                                                world.data, cfg, dir / "a");
  const auto b = pretrain::stage2_continue(world.teacher_ckpt, world.data,
                                           world.data, cfg, dir / "b");
  CHECK(testutil::read_file(a.final_checkpoint / "weights.bin") ==
        testutil::read_file(b.final_checkpoint / "weights.bin"));
}

TEST_CASE("plan files round-trip") {
  testutil::TempDir dir("plan");
  distill::DistillPlan plan;
  plan.student.n_layers = 2;
  plan.student.hidden = 32;
  plan.student.ffn_inner = 128;
  plan.student.n_heads = 4;
  plan.student.head_size = 8;
  plan.student.max_len = 48;
  plan.student.vocab_size = 300;
  plan.train.max_steps = 10;
  plan.seed = 5;
  distill::DistillSegment seg;
  seg.teacher_checkpoint = "/tmp/teacher";
  seg.corpus_file = "/tmp/corpus.jsonl";
  seg.updates = 10;
  seg.recipe.hidden = distill::HiddenMatchSpec{{{0, 1}, {1, 3}}, 0.5};
  plan.segments = {seg};

  plan.save(dir / "plan.json");
  const auto loaded = distill::DistillPlan::load(dir / "plan.json");
  CHECK(loaded.segments.size() == 1);
  CHECK(loaded.segments[0].updates == 10);
  CHECK(loaded.segments[0].recipe.hidden->layer_map ==
        std::vector<std::pair<int, int>>{{0, 1}, {1, 3}});
  CHECK(loaded.student.hidden == 32);
}
