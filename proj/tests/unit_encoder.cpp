#include <doctest.h>

#include <cmath>

#include "dforge/encoder/checkpoint.hpp"
#include "dforge/encoder/losses.hpp"
#include "dforge/encoder/net.hpp"
#include "helpers.hpp"

using namespace dforge;

namespace {

enc::EncoderConfig tiny_config(int layers = 2, int hidden = 16, int intents = 3,
                               int tags = 5) {
  enc::EncoderConfig cfg;
  cfg.n_layers = layers;
  cfg.hidden = hidden;
  cfg.ffn_inner = hidden * 4;
  cfg.n_heads = 2;
  cfg.head_size = hidden / 2;
  cfg.dropout = 0.0;
  cfg.max_len = 16;
  cfg.vocab_size = 32;
  cfg.n_intents = intents;
  cfg.n_tags = tags;
  cfg.head_hidden = 12;
  return cfg;
}

// Composite loss exercising every head: mean MLM CE + intent CE + slot CE.
template <typename S>
double composite_loss(const enc::ParameterSet<S>& params,
                      const enc::EncoderConfig& cfg,
                      const std::vector<std::int32_t>& ids,
                      const std::vector<std::int32_t>& mlm_labels,
                      std::int32_t intent_label,
                      const std::vector<std::int32_t>& slot_labels,
                      enc::TraceGrads<S>* grads_out = nullptr) {
  enc::ForwardCache<S> cache;
  Rng rng(1);
  const auto trace = enc::forward<S>(params, cfg, ids, {}, enc::RunMode::train,
                                     &rng, &cache, true);
  auto mlm = enc::mlm_loss(trace.mlm_logits, mlm_labels);
  const std::int32_t intent_arr[] = {intent_label};
  auto ic = enc::mlm_loss(trace.ic_logits, std::span(intent_arr, 1));
  auto sf = enc::mlm_loss(trace.sf_logits, slot_labels);
  if (grads_out != nullptr) {
    grads_out->d_mlm_logits = mlm.d_logits;
    grads_out->d_ic_logits = ic.d_logits;
    grads_out->d_sf_logits = sf.d_logits;
  }
  return mlm.value + ic.value + sf.value;
}

}  // namespace

TEST_CASE("init_params: determinism, layernorm gains, parameter count") {
  const auto cfg = tiny_config();
  const auto a = enc::init_params<float>(cfg, 5);
  const auto b = enc::init_params<float>(cfg, 5);
  for (const auto& [name, tensor] : a.tensors)
    CHECK(tensor == b.tensors.at(name));

  CHECK(a.at("layer.00.ln1.g").minCoeff() == 1.0f);
  CHECK(a.at("layer.00.ln1.g").maxCoeff() == 1.0f);
  CHECK(a.at("layer.01.ffn.b1").cwiseAbs().maxCoeff() == 0.0f);

  // Closed-form audit for a 2-layer hidden-16 configuration.
  const long H = cfg.hidden, A = cfg.attn_width(), F = cfg.ffn_inner,
             V = cfg.vocab_size, HH = cfg.head_hidden, L = cfg.max_len;
  const long per_layer = 2 * (2 * H)        // two layernorms
                         + 3 * (H * A + A)  // q, k, v
                         + (A * H + H)      // output projection
                         + (H * F + F) + (F * H + H);
  const long heads =
      (H * HH + HH) + (HH * HH + HH) + (HH * cfg.n_intents + cfg.n_intents) +
      (H * HH + HH) + (HH * HH + HH) + (HH * cfg.n_tags + cfg.n_tags);
  const long expected = V * H + L * H + cfg.n_layers * per_layer + 2 * H + V + heads;
  CHECK(enc::parameter_count(cfg) == static_cast<std::size_t>(expected));
}

TEST_CASE("forward: residual wiring - zeroed projections leave LN(embeddings)") {
  auto cfg = tiny_config();
  cfg.dropout = 0.0;
  auto params = enc::init_params<float>(cfg, 3);
  for (int layer = 0; layer < cfg.n_layers; ++layer) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "layer.%02d.", layer);
    params.at(std::string(buf) + "attn.wo").setZero();
    params.at(std::string(buf) + "attn.bo").setZero();
    params.at(std::string(buf) + "ffn.w2").setZero();
    params.at(std::string(buf) + "ffn.b2").setZero();
  }

  const std::vector<std::int32_t> ids = {5, 9, 17, 30};
  const auto trace =
      enc::forward<float>(params, cfg, ids, {}, enc::RunMode::eval);

  // Residual stream never moves.
  for (const auto& h : trace.hidden)
    CHECK((h - trace.hidden.front()).cwiseAbs().maxCoeff() == 0.0f);

  // final_hidden equals layernorm of the embedding stream, recomputed here
  // independently in double.
  const auto& emb = trace.hidden.front();
  for (long t = 0; t < emb.rows(); ++t) {
    double mean = 0.0;
    for (long h = 0; h < emb.cols(); ++h) mean += emb(t, h);
    mean /= static_cast<double>(emb.cols());
    double var = 0.0;
    for (long h = 0; h < emb.cols(); ++h)
      var += (emb(t, h) - mean) * (emb(t, h) - mean);
    var /= static_cast<double>(emb.cols());
    for (long h = 0; h < emb.cols(); ++h) {
      const double want =
          params.at("final_ln.g")(0, h) * (emb(t, h) - mean) /
              std::sqrt(var + enc::kLayerNormEps) +
          params.at("final_ln.b")(0, h);
      CHECK(trace.final_hidden(t, h) == doctest::Approx(want).epsilon(1e-5));
    }
  }
}

TEST_CASE("forward: eval is deterministic; train dropout is seeded") {
  const auto cfg = tiny_config();
  const auto params = enc::init_params<float>(cfg, 11);
  const std::vector<std::int32_t> ids = {6, 7, 8, 9, 10};
  const auto a = enc::forward<float>(params, cfg, ids, {}, enc::RunMode::eval);
  const auto b = enc::forward<float>(params, cfg, ids, {}, enc::RunMode::eval);
  CHECK(a.mlm_logits == b.mlm_logits);

  auto cfg_drop = cfg;
  cfg_drop.dropout = 0.1;
  enc::ForwardCache<float> cache1, cache2;
  Rng rng1(99), rng2(99);
  const auto t1 = enc::forward<float>(params, cfg_drop, ids, {},
                                      enc::RunMode::train, &rng1, &cache1);
  const auto t2 = enc::forward<float>(params, cfg_drop, ids, {},
                                      enc::RunMode::train, &rng2, &cache2);
  CHECK(t1.mlm_logits == t2.mlm_logits);
}

TEST_CASE("forward: padding invariance at unpadded positions") {
  const auto cfg = tiny_config();
  const auto params = enc::init_params<float>(cfg, 21);
  const std::vector<std::int32_t> ids_short = {4, 9, 23};
  const std::vector<std::uint8_t> mask_short = {1, 1, 1};
  const std::vector<std::int32_t> ids_long = {4, 9, 23, 0, 0, 0};
  const std::vector<std::uint8_t> mask_long = {1, 1, 1, 0, 0, 0};

  const auto a = enc::forward<float>(params, cfg, ids_short, mask_short,
                                     enc::RunMode::eval);
  const auto b =
      enc::forward<float>(params, cfg, ids_long, mask_long, enc::RunMode::eval);
  for (long t = 0; t < 3; ++t)
    for (long v = 0; v < cfg.vocab_size; ++v)
      CHECK(std::abs(a.mlm_logits(t, v) - b.mlm_logits(t, v)) <= 1e-6f);
}

TEST_CASE("forward: validation errors") {
  const auto cfg = tiny_config();
  const auto params = enc::init_params<float>(cfg, 2);
  std::vector<std::int32_t> too_long(cfg.max_len + 1, 5);
  CHECK_THROWS_AS(
      enc::forward<float>(params, cfg, too_long, {}, enc::RunMode::eval),
      ValidationError);
  CHECK_THROWS_AS(enc::forward<float>(params, cfg, std::vector<std::int32_t>{},
                                      {}, enc::RunMode::eval),
                  ValidationError);
  // Non-finite activations carry a numeric fault.
  auto broken = params;
  broken.at("emb.tok")(5, 0) = std::numeric_limits<float>::infinity();
  CHECK_THROWS_AS(enc::forward<float>(broken, cfg, std::vector<std::int32_t>{5},
                                      {}, enc::RunMode::eval),
                  NumericFault);
}

TEST_CASE("mlm_loss: closed forms") {
  // Uniform logits: loss is ln(V).
  enc::Mat<float> logits = enc::Mat<float>::Zero(4, 32);
  std::vector<std::int32_t> labels = {3, enc::kIgnoreLabel, 7, enc::kIgnoreLabel};
  auto uniform = enc::mlm_loss(logits, labels);
  CHECK(uniform.value == doctest::Approx(std::log(32.0)).epsilon(1e-9));
  CHECK(uniform.count == 2);

  // Large-margin correct logits: loss near zero.
  logits.setZero();
  logits(0, 3) = 50.0f;
  logits(2, 7) = 50.0f;
  auto confident = enc::mlm_loss(logits, labels);
  CHECK(confident.value < 1e-6);

  // Mean over labeled positions equals the mean of single-position losses.
  Rng rng(4);
  enc::Mat<float> two = enc::Mat<float>(2, 32);
  for (long r = 0; r < 2; ++r)
    for (long c = 0; c < 32; ++c)
      two(r, c) = static_cast<float>(rng.normal(0.0, 1.0));
  const std::vector<std::int32_t> both = {5, 9};
  const std::vector<std::int32_t> first = {5, enc::kIgnoreLabel};
  const std::vector<std::int32_t> second = {enc::kIgnoreLabel, 9};
  const double joint = enc::mlm_loss(two, both).value;
  const double split = 0.5 * (enc::mlm_loss(two, first).value +
                              enc::mlm_loss(two, second).value);
  CHECK(joint == doctest::Approx(split).epsilon(1e-9));

  CHECK_THROWS_AS(
      enc::mlm_loss(two, std::vector<std::int32_t>{enc::kIgnoreLabel,
                                                   enc::kIgnoreLabel}),
      ValidationError);
}

TEST_CASE("backward: analytic gradients match central finite differences") {
  // Double-precision instantiation of the exact training code path.
  auto cfg = tiny_config(2, 16, 3, 5);
  cfg.dropout = 0.0;
  auto params = enc::init_params<double>(cfg, 7);

  const std::vector<std::int32_t> ids = {6, 12, 19, 25, 30, 2};
  const std::vector<std::int32_t> mlm_labels = {9, enc::kIgnoreLabel, 14,
                                                enc::kIgnoreLabel, 21,
                                                enc::kIgnoreLabel};
  const std::vector<std::int32_t> slot_labels = {0, 1, 2, 3, 4,
                                                 enc::kIgnoreLabel};
  const std::int32_t intent = 1;

  enc::TraceGrads<double> tg;
  enc::ForwardCache<double> cache;
  Rng rng(1);
  const auto trace = enc::forward<double>(params, cfg, ids, {},
                                          enc::RunMode::train, &rng, &cache, true);
  composite_loss<double>(params, cfg, ids, mlm_labels, intent, slot_labels, &tg);
  const auto grads = enc::backward<double>(params, cfg, cache, tg);

  const double step = 1e-4;
  double max_rel = 0.0;
  for (auto& [name, tensor] : params.tensors) {
    const auto& grad = grads.at(name);
    // Probe a deterministic subset of each tensor to keep runtime sane;
    // every tensor is exercised. The acceptance suite runs the full sweep.
    Rng probe(42 + static_cast<std::uint64_t>(tensor.size()));
    const long probes = std::min<long>(tensor.size(), 6);
    for (long k = 0; k < probes; ++k) {
      const long r = static_cast<long>(
          probe.below(static_cast<std::uint64_t>(tensor.rows())));
      const long c = static_cast<long>(
          probe.below(static_cast<std::uint64_t>(tensor.cols())));
      const double original = tensor(r, c);
      tensor(r, c) = original + step;
      const double up =
          composite_loss<double>(params, cfg, ids, mlm_labels, intent, slot_labels);
      tensor(r, c) = original - step;
      const double down =
          composite_loss<double>(params, cfg, ids, mlm_labels, intent, slot_labels);
      tensor(r, c) = original;
      const double numeric = (up - down) / (2.0 * step);
      const double analytic = grad(r, c);
      const double rel = std::abs(analytic - numeric) /
                         std::max({std::abs(analytic), std::abs(numeric), 1e-4});
      max_rel = std::max(max_rel, rel);
    }
  }
  CHECK(max_rel < 1e-3);
}

TEST_CASE("backward: unused heads get zero gradients; scale is linear") {
  auto cfg = tiny_config();
  cfg.dropout = 0.0;
  const auto params = enc::init_params<float>(cfg, 13);
  const std::vector<std::int32_t> ids = {3, 8, 13};
  const std::vector<std::int32_t> labels = {7, enc::kIgnoreLabel, 9};

  enc::ForwardCache<float> cache;
  Rng rng(1);
  const auto trace = enc::forward<float>(params, cfg, ids, {},
                                         enc::RunMode::train, &rng, &cache, true);
  auto mlm = enc::mlm_loss(trace.mlm_logits, labels);
  enc::TraceGrads<float> tg;
  tg.d_mlm_logits = mlm.d_logits;
  const auto grads = enc::backward(params, cfg, cache, tg);

  // MLM-only loss: both classification heads untouched.
  CHECK(grads.at("head.sf.w1").cwiseAbs().maxCoeff() == 0.0f);
  CHECK(grads.at("head.ic.w3").cwiseAbs().maxCoeff() == 0.0f);

  // Doubling the upstream gradient doubles every parameter gradient.
  enc::TraceGrads<float> tg2;
  tg2.d_mlm_logits = mlm.d_logits * 2.0f;
  const auto grads2 = enc::backward(params, cfg, cache, tg2);
  for (const auto& [name, tensor] : grads.tensors) {
    const auto diff = (grads2.at(name) - tensor * 2.0f).cwiseAbs().maxCoeff();
    CHECK(diff <= 1e-4f);
  }
}

TEST_CASE("classify: shapes, uniform output, and equivariance") {
  auto cfg = tiny_config();
  cfg.dropout = 0.0;
  auto params = enc::init_params<float>(cfg, 17);

  const std::vector<std::int32_t> ids = {5, 6, 7, 8};
  auto trace = enc::forward<float>(params, cfg, ids, {}, enc::RunMode::eval);
  const auto ic = enc::classify(params, cfg, trace, enc::Task::intent);
  const auto sf = enc::classify(params, cfg, trace, enc::Task::slots);
  CHECK(ic.rows() == 1);
  CHECK(ic.cols() == cfg.n_intents);
  CHECK(sf.rows() == static_cast<long>(ids.size()));
  CHECK(sf.cols() == cfg.n_tags);

  // Zero hidden states and zero head weights give uniform probabilities.
  auto zero_params = params;
  for (const auto prefix : {"head.ic.", "head.sf."})
    for (const auto leaf : {"w1", "b1", "w2", "b2", "w3", "b3"})
      zero_params.at(std::string(prefix) + leaf).setZero();
  auto zero_trace = trace;
  zero_trace.final_hidden.setZero();
  const auto uniform_ic =
      enc::classify(zero_params, cfg, zero_trace, enc::Task::intent);
  CHECK(uniform_ic.maxCoeff() == uniform_ic.minCoeff());  // softmax -> uniform

  // With positional embeddings zeroed, permuting two positions permutes the
  // slot logits identically.
  auto nopos = params;
  nopos.at("emb.pos").setZero();
  const std::vector<std::int32_t> seq = {5, 6, 7, 8};
  const std::vector<std::int32_t> swapped = {5, 7, 6, 8};
  auto t1 = enc::forward<float>(nopos, cfg, seq, {}, enc::RunMode::eval);
  auto t2 = enc::forward<float>(nopos, cfg, swapped, {}, enc::RunMode::eval);
  const auto s1 = enc::classify(nopos, cfg, t1, enc::Task::slots);
  const auto s2 = enc::classify(nopos, cfg, t2, enc::Task::slots);
  for (long v = 0; v < cfg.n_tags; ++v) {
    CHECK(s1(1, v) == doctest::Approx(s2(2, v)).epsilon(1e-5));
    CHECK(s1(2, v) == doctest::Approx(s2(1, v)).epsilon(1e-5));
    CHECK(s1(0, v) == doctest::Approx(s2(0, v)).epsilon(1e-5));
  }

  auto no_heads = tiny_config(2, 16, 0, 0);
  const auto bare = enc::init_params<float>(no_heads, 1);
  auto bare_trace =
      enc::forward<float>(bare, no_heads, ids, {}, enc::RunMode::eval);
  CHECK_THROWS_AS(enc::classify(bare, no_heads, bare_trace, enc::Task::intent),
                  ConfigError);
}

TEST_CASE("checkpoints: save/load round trip with checksums and meta") {
  testutil::TempDir dir("ckpt");
  const auto cfg = tiny_config();
  enc::Checkpoint ckpt;
  ckpt.params = enc::init_params<float>(cfg, 23);
  ckpt.config = cfg;
  ckpt.tokenizer_fingerprint = "abc123";
  enc::CheckpointMeta meta;
  meta.step = 17;
  meta.stage = "stage1";
  meta.loss_ema = 3.25;
  meta.rng_states = {{"train", "42"}};
  ckpt.meta = meta;
  enc::Mat<float> t(1, 1);
  t(0, 0) = 9.0f;
  ckpt.optim.emplace("adam.t", t);

  enc::save_checkpoint(dir / "c", ckpt);
  const auto loaded = enc::load_checkpoint(dir / "c");
  CHECK(loaded.tokenizer_fingerprint == "abc123");
  CHECK(loaded.meta->step == 17);
  CHECK(loaded.meta->loss_ema == 3.25);
  CHECK(loaded.optim.at("adam.t")(0, 0) == 9.0f);
  for (const auto& [name, tensor] : ckpt.params.tensors)
    CHECK(tensor == loaded.params.tensors.at(name));

  // Corrupting the weights breaks the checksum on load.
  {
    std::fstream f(dir.path() / "c" / "weights.bin",
                   std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(100);
    const char junk = 0x5a;
    f.write(&junk, 1);
  }
  CHECK_THROWS_AS(enc::load_checkpoint(dir / "c"), IoError);
}

TEST_CASE("structural: layernorm variance accumulates in double") {
  static_assert(std::is_same_v<enc::LayerNormAccum, double>);

  // Behavioral check: a large common offset does not destroy the variance.
  enc::Mat<float> x(1, 8);
  for (long i = 0; i < 8; ++i)
    x(0, i) = 1.0e6f + static_cast<float>(i % 2);  // variance 0.25
  enc::Mat<float> g = enc::Mat<float>::Ones(1, 8);
  enc::Mat<float> b = enc::Mat<float>::Zero(1, 8);
  enc::Mat<float> out, xhat;
  std::vector<float> inv_std;
  enc::detail::layer_norm(x, g, b, out, xhat, inv_std);
  CHECK(inv_std[0] ==
        doctest::Approx(1.0 / std::sqrt(0.25 + enc::kLayerNormEps)).epsilon(1e-4));
}

TEST_CASE("table presets validate against the published shapes") {
  const auto big = enc::EncoderConfig::preset("teacher-2.3b");
  CHECK(big.n_layers == 29);
  CHECK(big.hidden == 2560);
  CHECK(big.n_heads * big.head_size == big.hidden);
  const auto bigger = enc::EncoderConfig::preset("teacher-9.3b");
  CHECK(bigger.n_heads * bigger.head_size == bigger.hidden);
  // The 700M row's attention width differs from its hidden size.
  const auto small = enc::EncoderConfig::preset("teacher-700m");
  CHECK(small.hidden == 1536);
  CHECK(small.attn_width() == 1024);
  CHECK_NOTHROW(small.validate());
}
