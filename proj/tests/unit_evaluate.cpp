#include <doctest.h>

#include <cmath>
#include <functional>

#include "dforge/corpus/nlu_gen.hpp"
#include "dforge/evaluate/metrics.hpp"
#include "dforge/evaluate/report.hpp"
#include "dforge/pretrain/trainer.hpp"
#include "helpers.hpp"

using namespace dforge;

#include "semer_oracle.hpp"

namespace {

using testutil::oracle_chunks;
using testutil::oracle_semer_counts;

corpus::NluExample random_case(Rng& rng, eval::Hypothesis& hyp_out) {
  return testutil::random_semer_case(rng, hyp_out);
}

corpus::NluExample nlu(const std::string& utterance, const std::string& intent,
                       std::vector<std::string> tags) {
  corpus::NluExample out;
  out.utterance = utterance;
  out.intent = intent;
  out.slots = std::move(tags);
  return out;
}

}  // namespace

TEST_CASE("semer_counts: worked examples") {
  // Perfect hypothesis with one intent and two slots: (3,0,0,0).
  const auto ref = nlu("turn on the lamp now", "device_on",
                       {"O", "O", "O", "B-device", "B-time"});
  eval::Hypothesis perfect{"device_on", {"O", "O", "O", "B-device", "B-time"}};
  auto counts = eval::semer_counts(ref, perfect);
  CHECK(counts.correct == 3);
  CHECK(counts.deletion == 0);
  CHECK(counts.insertion == 0);
  CHECK(counts.substitution == 0);

  // Intent correct, one slot deleted: (1,1,0,0) on a one-slot reference.
  const auto ref1 = nlu("call anna", "call", {"O", "B-contact"});
  eval::Hypothesis missing{"call", {"O", "O"}};
  counts = eval::semer_counts(ref1, missing);
  CHECK(counts.correct == 1);
  CHECK(counts.deletion == 1);
  CHECK(counts.insertion == 0);
  CHECK(counts.substitution == 0);

  // Wrong intent with no slots anywhere: intent errors are substitutions.
  const auto ref2 = nlu("hello there", "greet", {"O", "O"});
  eval::Hypothesis wrong{"call", {"O", "O"}};
  counts = eval::semer_counts(ref2, wrong);
  CHECK(counts.correct == 0);
  CHECK(counts.substitution == 1);

  // Same name, wrong value: substitution.
  eval::Hypothesis subbed{"call", {"B-contact", "O"}};
  counts = eval::semer_counts(ref1, subbed);
  CHECK(counts.substitution == 1);  // value "call" != "anna"
  CHECK(counts.correct == 1);       // intent

  CHECK_THROWS_AS(eval::semer_counts(ref1, eval::Hypothesis{"call", {"O"}}),
                  ValidationError);
}

TEST_CASE("semer: direct substitutions into the formula") {
  eval::SemErCounts counts;
  counts.correct = 3;
  CHECK(eval::semer(counts) == doctest::Approx(0.0));
  counts = {1, 1, 0, 0};
  CHECK(eval::semer(counts) == doctest::Approx(0.5));
  // Insertions inflate the numerator but not the denominator.
  counts = {1, 0, 1, 0};
  CHECK(eval::semer(counts) == doctest::Approx(1.0));
  counts = {0, 0, 0, 0};
  CHECK_THROWS_AS(eval::semer(counts), ValidationError);
  // SemER can exceed 1 when insertions dominate.
  counts = {1, 0, 5, 0};
  CHECK(eval::semer(counts) > 1.0);
}

TEST_CASE("semer_counts equals the exhaustive oracle on 1000 random cases") {
  Rng rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    eval::Hypothesis hyp;
    const auto ref = random_case(rng, hyp);
    const auto ours = eval::semer_counts(ref, hyp);
    const auto oracle = oracle_semer_counts(ref, hyp);
    CHECK(ours.correct == oracle.correct);
    CHECK(ours.deletion == oracle.deletion);
    CHECK(ours.insertion == oracle.insertion);
    CHECK(ours.substitution == oracle.substitution);
    // SemER is zero iff there are no error counts at all.
    const bool no_errors =
        ours.deletion == 0 && ours.insertion == 0 && ours.substitution == 0;
    if (ours.correct + ours.deletion + ours.substitution > 0)
      CHECK((eval::semer(ours) == 0.0) == no_errors);
  }
}

TEST_CASE("exact_match_error: counting and boundary sensitivity") {
  const auto ref1 = nlu("a b", "x", {"B-s", "I-s"});
  const auto ref2 = nlu("c d", "y", {"O", "B-t"});
  std::vector<corpus::NluExample> refs = {ref1, ref2};

  std::vector<eval::Hypothesis> perfect = {{"x", {"B-s", "I-s"}},
                                           {"y", {"O", "B-t"}}};
  CHECK(eval::exact_match_error(refs, perfect) == doctest::Approx(0.0));

  // One of two examples has a slot-value error: 0.5.
  std::vector<eval::Hypothesis> half = {{"x", {"B-s", "I-s"}},
                                        {"y", {"B-t", "O"}}};
  CHECK(eval::exact_match_error(refs, half) == doctest::Approx(0.5));

  // Chunk boundaries differ while the label matches: still an error.
  std::vector<eval::Hypothesis> boundary = {{"x", {"B-s", "O"}},
                                            {"y", {"O", "B-t"}}};
  CHECK(eval::exact_match_error(refs, boundary) == doctest::Approx(0.5));
}

TEST_CASE("ic_sf_errors: trivial cases and the brute-force chunker oracle") {
  const auto ref1 = nlu("a b c", "x", {"B-s", "I-s", "O"});
  const auto ref2 = nlu("d e", "y", {"O", "B-t"});
  std::vector<corpus::NluExample> refs = {ref1, ref2};

  std::vector<eval::Hypothesis> perfect = {{"x", {"B-s", "I-s", "O"}},
                                           {"y", {"O", "B-t"}}};
  auto errors = eval::ic_sf_errors(refs, perfect);
  CHECK(errors.ic_error == doctest::Approx(0.0));
  CHECK(errors.sf_error == doctest::Approx(0.0));

  // Half the intents wrong, slots perfect.
  std::vector<eval::Hypothesis> intents = {{"z", {"B-s", "I-s", "O"}},
                                           {"y", {"O", "B-t"}}};
  errors = eval::ic_sf_errors(refs, intents);
  CHECK(errors.ic_error == doctest::Approx(0.5));
  CHECK(errors.sf_error == doctest::Approx(0.0));

  // A known confusion table, checked against chunk F1 recomputed from the
  // independent extractor.
  std::vector<eval::Hypothesis> confused = {{"x", {"B-s", "O", "B-s"}},
                                            {"y", {"B-t", "O"}}};
  errors = eval::ic_sf_errors(refs, confused);
  std::size_t tp = 0, ref_total = 0, hyp_total = 0;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const auto words = corpus::whitespace_words(refs[i].utterance);
    const auto rc = oracle_chunks(words, refs[i].slots);
    const auto hc = oracle_chunks(words, confused[i].slots);
    ref_total += rc.size();
    hyp_total += hc.size();
    for (const auto& r : rc)
      for (const auto& h : hc)
        tp += r.name == h.name && r.begin == h.begin && r.end == h.end;
  }
  const double precision = static_cast<double>(tp) / static_cast<double>(hyp_total);
  const double recall = static_cast<double>(tp) / static_cast<double>(ref_total);
  const double f1 =
      tp == 0 ? 0.0 : 2.0 * precision * recall / (precision + recall);
  CHECK(errors.sf_error == doctest::Approx(1.0 - f1).epsilon(1e-12));
}

TEST_CASE("property: exact match error dominates intent error") {
  Rng rng(55);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<corpus::NluExample> refs;
    std::vector<eval::Hypothesis> hyps;
    const std::size_t n = 1 + rng.below(20);
    for (std::size_t i = 0; i < n; ++i) {
      eval::Hypothesis hyp;
      refs.push_back(random_case(rng, hyp));
      hyps.push_back(hyp);
    }
    CHECK(eval::exact_match_error(refs, hyps) >=
          eval::ic_sf_errors(refs, hyps).ic_error - 1e-12);
  }
}

TEST_CASE("perplexity: untrained model sits near the vocabulary size") {
  enc::EncoderConfig cfg;
  cfg.n_layers = 1;
  cfg.hidden = 16;
  cfg.ffn_inner = 64;
  cfg.n_heads = 2;
  cfg.head_size = 8;
  cfg.max_len = 32;
  cfg.vocab_size = 128;
  const auto params = enc::init_params<float>(cfg, 3);

  pretrain::SequenceDataset data;
  data.tokenizer_fingerprint = "test";
  Rng rng(9);
  for (int i = 0; i < 40; ++i) {
    std::vector<std::int32_t> seq = {tok::kBosId};
    for (int t = 0; t < 24; ++t)
      seq.push_back(5 + static_cast<std::int32_t>(rng.below(123)));
    seq.push_back(tok::kEosId);
    data.sequences.push_back(std::move(seq));
  }
  const double ppl = eval::perplexity(params, cfg, data, {}, 4);
  CHECK(std::abs(ppl - 128.0) / 128.0 < 0.10);
  // Deterministic under the seed.
  CHECK(eval::perplexity(params, cfg, data, {}, 4) == doctest::Approx(ppl));
}

namespace {

// A rigged copy model: position embeddings point at the original token id,
// the residual stream is passed through untouched, and tied output
// embeddings are one-hot rows. The argmax at every position is the original
// id whether or not the input was masked.
struct RiggedModel {
  enc::EncoderConfig cfg;
  enc::ParameterSet<float> params;
};

RiggedModel make_rigged_model(const std::vector<std::int32_t>& original_ids,
                              std::int32_t vocab_size) {
  RiggedModel rig;
  rig.cfg.n_layers = 1;
  rig.cfg.hidden = 64;
  rig.cfg.ffn_inner = 64;
  rig.cfg.n_heads = 2;
  rig.cfg.head_size = 32;
  rig.cfg.max_len = static_cast<int>(original_ids.size());
  rig.cfg.vocab_size = vocab_size;
  rig.params = enc::init_params<float>(rig.cfg, 1);
  rig.params.at("emb.tok").setZero();
  for (std::int32_t v = 0; v < vocab_size; ++v)
    rig.params.at("emb.tok")(v, v) = 1.0f;
  rig.params.at("emb.pos").setZero();
  for (std::size_t t = 0; t < original_ids.size(); ++t)
    rig.params.at("emb.pos")(static_cast<long>(t), original_ids[t]) = 40.0f;
  rig.params.at("layer.00.attn.wo").setZero();
  rig.params.at("layer.00.attn.bo").setZero();
  rig.params.at("layer.00.ffn.w2").setZero();
  rig.params.at("layer.00.ffn.b2").setZero();
  rig.params.at("mlm.bias").setZero();
  return rig;
}

}  // namespace

TEST_CASE("perplexity: a perfect memorizer approaches 1") {
  std::vector<std::int32_t> sentence = {tok::kBosId, 7, 12, 9, 15, 11, 20,
                                        8, 13, tok::kEosId};
  const auto rig = make_rigged_model(sentence, 32);
  pretrain::SequenceDataset data;
  data.tokenizer_fingerprint = "test";
  for (int copy = 0; copy < 20; ++copy) data.sequences.push_back(sentence);
  const double ppl = eval::perplexity(rig.params, rig.cfg, data, {}, 11);
  CHECK(ppl < 1.2);
  CHECK(ppl >= 1.0);
}

TEST_CASE("mask fill: task construction, span rule, determinism") {
  // Handmade vocabulary where "wordle" splits into three subwords.
  const std::string m = "\xe2\x96\x81";
  const auto model = testutil::handmade_tokenizer({{m + "the", -1.0},
                                                   {m + "cat", -1.0},
                                                   {m + "saw", -1.0},
                                                   {m + "wo", -1.0},
                                                   {"rd", -1.0},
                                                   {"le", -1.0}});
  std::vector<corpus::TextExample> sentences = {
      testutil::example("the cat saw"), testutil::example("the wordle saw"),
      testutil::example("the the the")};  // no lexicon word -> skipped
  const std::map<std::string, std::set<std::string>> lexicon = {
      {"en", {"cat", "wordle"}}};

  const auto tasks = eval::build_mask_fill_tasks(sentences, lexicon, model, 32, 5);
  REQUIRE(tasks.tasks.size() == 2);
  CHECK(tasks.skipped == 1);
  CHECK(tasks.tasks[0].target_word == "cat");
  CHECK(tasks.tasks[0].span_len == 1);
  CHECK(tasks.tasks[1].target_word == "wordle");
  CHECK(tasks.tasks[1].span_len == 3);  // all subword tokens of the noun

  const auto again = eval::build_mask_fill_tasks(sentences, lexicon, model, 32, 5);
  REQUIRE(again.tasks.size() == tasks.tasks.size());
  for (std::size_t i = 0; i < tasks.tasks.size(); ++i)
    CHECK(again.tasks[i].context_ids == tasks.tasks[i].context_ids);

  CHECK_THROWS_AS(eval::build_mask_fill_tasks(
                      sentences, {{"en", {}}}, model, 32, 5),
                  ValidationError);
}

TEST_CASE("mask fill accuracy: all-subwords rule via the rigged copy model") {
  // Context: [bos] 7 12 9 [eos]; target span covers positions 1..3.
  std::vector<std::int32_t> ids = {tok::kBosId, 7, 12, 9, tok::kEosId};
  auto rig = make_rigged_model(ids, 32);

  eval::MaskFillTask task;
  task.text = "synthetic";
  task.target_word = "triple";
  task.context_ids = ids;
  task.span_begin = 1;
  task.span_len = 3;

  CHECK(eval::mask_fill_accuracy(rig.params, rig.cfg, {task}) ==
        doctest::Approx(1.0));

  // Same model with one corrupted position: a single wrong subword zeroes
  // the whole task.
  rig.params.at("emb.pos").row(2).setZero();
  rig.params.at("emb.pos")(2, 25) = 40.0f;  // now predicts 25, original is 12
  CHECK(eval::mask_fill_accuracy(rig.params, rig.cfg, {task}) ==
        doctest::Approx(0.0));

  CHECK_THROWS_AS(eval::mask_fill_accuracy(rig.params, rig.cfg, {}),
                  ValidationError);
}

TEST_CASE("mask fill accuracy: untrained model scores near chance") {
  enc::EncoderConfig cfg;
  cfg.n_layers = 1;
  cfg.hidden = 32;
  cfg.ffn_inner = 64;
  cfg.n_heads = 2;
  cfg.head_size = 16;
  cfg.max_len = 16;
  cfg.vocab_size = 512;
  const auto params = enc::init_params<float>(cfg, 2);

  Rng rng(3);
  std::vector<eval::MaskFillTask> tasks;
  for (int i = 0; i < 80; ++i) {
    eval::MaskFillTask task;
    task.context_ids = {tok::kBosId};
    for (int t = 0; t < 10; ++t)
      task.context_ids.push_back(5 + static_cast<std::int32_t>(rng.below(507)));
    task.context_ids.push_back(tok::kEosId);
    task.span_begin = 1 + rng.below(8);
    task.span_len = 1 + rng.below(2);
    tasks.push_back(std::move(task));
  }
  CHECK(eval::mask_fill_accuracy(params, cfg, tasks) < 0.05);
}

TEST_CASE("correlation_report: closed forms and failure modes") {
  const std::vector<double> x = {1.0, 2.0, 3.0, 4.0, 5.0};
  std::vector<double> y;
  for (const double v : x) y.push_back(2.0 * v + 1.0);
  auto corr = eval::correlation_report(x, y);
  CHECK(corr.pearson_r == doctest::Approx(1.0));
  CHECK(corr.r_squared == doctest::Approx(1.0));
  CHECK(corr.spearman_rho == doctest::Approx(1.0));

  // Any strictly decreasing y gives Spearman -1.
  const std::vector<double> y_dec = {9.0, 4.0, 3.0, 1.0, -7.0};
  corr = eval::correlation_report(x, y_dec);
  CHECK(corr.spearman_rho == doctest::Approx(-1.0));

  CHECK_THROWS_AS(eval::correlation_report({1.0, 1.0, 1.0}, {1.0, 2.0, 3.0}),
                  ValidationError);
  CHECK_THROWS_AS(eval::correlation_report({1.0, 2.0}, {1.0, 2.0}),
                  ValidationError);
  CHECK_THROWS_AS(eval::correlation_report(x, {1.0, 2.0}), ValidationError);
}

TEST_CASE("reports: breakdown weighted average reproduces the pooled metric") {
  // Two "languages" with different error rates and sizes.
  std::vector<corpus::NluExample> refs;
  std::vector<eval::Hypothesis> hyps;
  std::vector<corpus::NluExample> en_refs, de_refs;
  std::vector<eval::Hypothesis> en_hyps, de_hyps;
  Rng rng(8);
  for (int i = 0; i < 30; ++i) {
    eval::Hypothesis hyp;
    auto ref = random_case(rng, hyp);
    ref.language = i < 18 ? "en" : "de";
    refs.push_back(ref);
    hyps.push_back(hyp);
    if (i < 18) {
      en_refs.push_back(ref);
      en_hyps.push_back(hyp);
    } else {
      de_refs.push_back(ref);
      de_hyps.push_back(hyp);
    }
  }
  eval::EvalReport report;
  report.checkpoint_id = "test";
  report.metrics["ic_error"] = eval::ic_sf_errors(refs, hyps).ic_error;
  report.breakdowns["ic_error"]["en"] = {
      eval::ic_sf_errors(en_refs, en_hyps).ic_error, 18.0};
  report.breakdowns["ic_error"]["de"] = {
      eval::ic_sf_errors(de_refs, de_hyps).ic_error, 12.0};
  CHECK(report.pooled("ic_error") ==
        doctest::Approx(report.metrics["ic_error"]).epsilon(1e-9));

  testutil::TempDir dir("report");
  report.save_json(dir / "r.json");
  report.save_tsv(dir / "r.tsv");
  const auto loaded = eval::EvalReport::load_json(dir / "r.json");
  CHECK(loaded.metrics.at("ic_error") ==
        doctest::Approx(report.metrics["ic_error"]));
  CHECK(loaded.breakdowns.at("ic_error").at("en").weight == 18.0);
}
