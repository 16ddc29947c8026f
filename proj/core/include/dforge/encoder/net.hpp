#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "dforge/encoder/params.hpp"
#include "dforge/tokenizer/model.hpp"

namespace dforge::enc {

enum class RunMode { train, eval };
enum class Task { intent, slots };

// Layernorm statistics are always accumulated in double, regardless of the
// activation scalar type.
using LayerNormAccum = double;
inline constexpr double kLayerNormEps = 1e-5;

template <typename S>
struct ForwardTrace {
  std::vector<std::int32_t> ids;
  std::vector<std::uint8_t> mask;
  // hidden[0] is the embedding output; hidden[i + 1] is the output of
  // transformer block i (pre final-layernorm residual stream).
  std::vector<Mat<S>> hidden;
  Mat<S> final_hidden;  // post final layernorm
  Mat<S> mlm_logits;
  Mat<S> ic_logits;  // 1 x n_intents (when heads were run)
  Mat<S> sf_logits;  // T x n_tags
};

template <typename S>
struct LayerCache {
  Mat<S> x_in;
  Mat<S> xhat1;
  std::vector<S> inv1;
  Mat<S> a;  // ln1 output
  Mat<S> q, k, v;
  std::vector<Mat<S>> probs;      // per-head softmax output
  std::vector<Mat<S>> prob_drop;  // per-head dropout scale (train only)
  Mat<S> context;
  Mat<S> attn_drop;  // train only
  Mat<S> x_mid;
  Mat<S> xhat2;
  std::vector<S> inv2;
  Mat<S> ln2_out;
  Mat<S> z1, g1;
  Mat<S> ffn_drop;  // train only
};

template <typename S>
struct HeadCache {
  Mat<S> pooled;
  double pool_count = 0;
  Mat<S> ic_z1, ic_a1, ic_z2, ic_a2;
  Mat<S> sf_z1, sf_a1, sf_z2, sf_a2;
};

template <typename S>
struct ForwardCache {
  std::vector<std::int32_t> ids;
  std::vector<std::uint8_t> mask;
  Mat<S> emb_drop;  // train only
  std::vector<LayerCache<S>> layers;
  Mat<S> xhatf;
  std::vector<S> invf;
  HeadCache<S> heads;
  bool ran_heads = false;
  bool train_mode = false;
};

// Gradients flowing back into the encoder: any subset may be present.
// d_block_out[i] injects gradient directly at the output of block i (used by
// hidden-state matching).
template <typename S>
struct TraceGrads {
  Mat<S> d_mlm_logits;
  Mat<S> d_ic_logits;
  Mat<S> d_sf_logits;
  std::map<int, Mat<S>> d_block_out;
};

namespace detail {

template <typename S>
void layer_norm(const Mat<S>& x, const Mat<S>& gain, const Mat<S>& bias,
                Mat<S>& out, Mat<S>& xhat, std::vector<S>& inv_std) {
  const long T = x.rows();
  const long H = x.cols();
  out.resize(T, H);
  xhat.resize(T, H);
  inv_std.resize(static_cast<std::size_t>(T));
  for (long t = 0; t < T; ++t) {
    LayerNormAccum sum = 0.0;
    for (long h = 0; h < H; ++h) sum += static_cast<LayerNormAccum>(x(t, h));
    const LayerNormAccum mean = sum / static_cast<LayerNormAccum>(H);
    LayerNormAccum var = 0.0;
    for (long h = 0; h < H; ++h) {
      const LayerNormAccum d = static_cast<LayerNormAccum>(x(t, h)) - mean;
      var += d * d;
    }
    var /= static_cast<LayerNormAccum>(H);
    const S inv = static_cast<S>(1.0 / std::sqrt(var + kLayerNormEps));
    inv_std[static_cast<std::size_t>(t)] = inv;
    for (long h = 0; h < H; ++h) {
      const S centered = static_cast<S>(static_cast<LayerNormAccum>(x(t, h)) - mean);
      xhat(t, h) = centered * inv;
      out(t, h) = gain(0, h) * xhat(t, h) + bias(0, h);
    }
  }
}

// dY -> dX for one layernorm; accumulates gain/bias gradients.
template <typename S>
Mat<S> layer_norm_backward(const Mat<S>& d_out, const Mat<S>& xhat,
                           const std::vector<S>& inv_std, const Mat<S>& gain,
                           Mat<S>& d_gain, Mat<S>& d_bias) {
  const long T = d_out.rows();
  const long H = d_out.cols();
  Mat<S> d_x(T, H);
  for (long t = 0; t < T; ++t) {
    double mean_dxhat = 0.0;
    double mean_dxhat_xhat = 0.0;
    for (long h = 0; h < H; ++h) {
      const double dy = static_cast<double>(d_out(t, h));
      const double xh = static_cast<double>(xhat(t, h));
      d_gain(0, h) += static_cast<S>(dy * xh);
      d_bias(0, h) += d_out(t, h);
      const double dxhat = dy * static_cast<double>(gain(0, h));
      mean_dxhat += dxhat;
      mean_dxhat_xhat += dxhat * xh;
    }
    mean_dxhat /= static_cast<double>(H);
    mean_dxhat_xhat /= static_cast<double>(H);
    const double inv = static_cast<double>(inv_std[static_cast<std::size_t>(t)]);
    for (long h = 0; h < H; ++h) {
      const double dxhat =
          static_cast<double>(d_out(t, h)) * static_cast<double>(gain(0, h));
      d_x(t, h) = static_cast<S>(
          inv * (dxhat - mean_dxhat -
                 static_cast<double>(xhat(t, h)) * mean_dxhat_xhat));
    }
  }
  return d_x;
}

inline double gelu_scalar(double z) {
  return 0.5 * z * (1.0 + std::erf(z / std::numbers::sqrt2));
}

inline double gelu_grad_scalar(double z) {
  const double phi = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
  const double cdf = 0.5 * (1.0 + std::erf(z / std::numbers::sqrt2));
  return cdf + z * phi;
}

template <typename S>
Mat<S> gelu(const Mat<S>& z) {
  Mat<S> out(z.rows(), z.cols());
  for (long r = 0; r < z.rows(); ++r)
    for (long c = 0; c < z.cols(); ++c)
      out(r, c) = static_cast<S>(gelu_scalar(static_cast<double>(z(r, c))));
  return out;
}

template <typename S>
Mat<S> gelu_grad(const Mat<S>& z) {
  Mat<S> out(z.rows(), z.cols());
  for (long r = 0; r < z.rows(); ++r)
    for (long c = 0; c < z.cols(); ++c)
      out(r, c) = static_cast<S>(gelu_grad_scalar(static_cast<double>(z(r, c))));
  return out;
}

template <typename S>
Mat<S> dropout_scale(long rows, long cols, double p, Rng& rng) {
  Mat<S> scale(rows, cols);
  const S keep = static_cast<S>(1.0 / (1.0 - p));
  for (long r = 0; r < rows; ++r)
    for (long c = 0; c < cols; ++c)
      scale(r, c) = rng.bernoulli(p) ? S(0) : keep;
  return scale;
}

template <typename S>
void check_finite(const Mat<S>& x, int layer, const char* what) {
  if (!x.allFinite())
    throw NumericFault(std::string("non-finite ") + what + " in layer " +
                       std::to_string(layer));
}

}  // namespace detail

// Pre-layernorm transformer block stack with residual streams:
//   x <- x + Attn(LN(x)); x <- x + FFN(LN(x)); final LN before any head.
// Dropout runs only in train mode and draws from `rng`; `cache` must be
// provided in train mode (it retains everything backward() needs).
template <typename S>
ForwardTrace<S> forward(const ParameterSet<S>& params, const EncoderConfig& cfg,
                        std::span<const std::int32_t> ids,
                        std::span<const std::uint8_t> mask, RunMode mode,
                        Rng* rng = nullptr, ForwardCache<S>* cache = nullptr,
                        bool run_heads = false) {
  const long T = static_cast<long>(ids.size());
  if (T == 0) throw ValidationError("empty input sequence");
  if (T > cfg.max_len)
    throw ValidationError("sequence length " + std::to_string(T) +
                          " exceeds max_len " + std::to_string(cfg.max_len));
  std::vector<std::uint8_t> mask_vec(mask.begin(), mask.end());
  if (mask_vec.empty()) mask_vec.assign(static_cast<std::size_t>(T), 1);
  if (static_cast<long>(mask_vec.size()) != T)
    throw ValidationError("attention mask length mismatch");
  long n_real = 0;
  for (const auto m : mask_vec) n_real += m != 0;
  if (n_real == 0) throw ValidationError("all positions are padded");
  const bool train = mode == RunMode::train;
  const bool use_dropout = train && cfg.dropout > 0.0;
  if (train && cache == nullptr)
    throw ValidationError("train-mode forward requires a cache");
  if (use_dropout && rng == nullptr)
    throw ValidationError("train-mode forward requires an rng for dropout");

  const long H = cfg.hidden;
  const long A = cfg.attn_width();
  const long dh = cfg.head_size;
  const S inv_sqrt_dh = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh)));
  const S neg_inf = -std::numeric_limits<S>::infinity();

  ForwardTrace<S> trace;
  trace.ids.assign(ids.begin(), ids.end());
  trace.mask = mask_vec;

  const Mat<S>& tok_emb = params.at("emb.tok");
  const Mat<S>& pos_emb = params.at("emb.pos");
  Mat<S> x(T, H);
  for (long t = 0; t < T; ++t) {
    const std::int32_t id = ids[static_cast<std::size_t>(t)];
    if (id < 0 || id >= cfg.vocab_size)
      throw ValidationError("token id " + std::to_string(id) + " out of range");
    x.row(t) = tok_emb.row(id) + pos_emb.row(t);
  }
  if (cache != nullptr) {
    cache->ids = trace.ids;
    cache->mask = mask_vec;
    cache->train_mode = train;
    cache->layers.assign(static_cast<std::size_t>(cfg.n_layers), {});
  }
  if (use_dropout) {
    cache->emb_drop = detail::dropout_scale<S>(T, H, cfg.dropout, *rng);
    x = x.cwiseProduct(cache->emb_drop);
  }
  trace.hidden.push_back(x);

  for (int layer = 0; layer < cfg.n_layers; ++layer) {
    const std::string p = [&] {
      char buf[24];
      std::snprintf(buf, sizeof(buf), "layer.%02d.", layer);
      return std::string(buf);
    }();
    LayerCache<S> local;
    LayerCache<S>& lc = cache != nullptr ? cache->layers[static_cast<std::size_t>(layer)] : local;
    lc.x_in = x;

    detail::layer_norm(x, params.at(p + "ln1.g"), params.at(p + "ln1.b"), lc.a,
                       lc.xhat1, lc.inv1);

    lc.q = (lc.a * params.at(p + "attn.wq")).rowwise() +
           params.at(p + "attn.bq").row(0);
    lc.k = (lc.a * params.at(p + "attn.wk")).rowwise() +
           params.at(p + "attn.bk").row(0);
    lc.v = (lc.a * params.at(p + "attn.wv")).rowwise() +
           params.at(p + "attn.bv").row(0);

    lc.context.resize(T, A);
    lc.probs.assign(static_cast<std::size_t>(cfg.n_heads), Mat<S>());
    if (use_dropout)
      lc.prob_drop.assign(static_cast<std::size_t>(cfg.n_heads), Mat<S>());
    for (int h = 0; h < cfg.n_heads; ++h) {
      const auto qh = lc.q.middleCols(h * dh, dh);
      const auto kh = lc.k.middleCols(h * dh, dh);
      const auto vh = lc.v.middleCols(h * dh, dh);
      Mat<S> scores = qh * kh.transpose() * inv_sqrt_dh;
      for (long j = 0; j < T; ++j)
        if (mask_vec[static_cast<std::size_t>(j)] == 0) scores.col(j).setConstant(neg_inf);
      Mat<S>& probs = lc.probs[static_cast<std::size_t>(h)];
      probs.resize(T, T);
      for (long i = 0; i < T; ++i) {
        S row_max = neg_inf;
        for (long j = 0; j < T; ++j) row_max = std::max(row_max, scores(i, j));
        double denom = 0.0;
        for (long j = 0; j < T; ++j) {
          const S e = scores(i, j) == neg_inf
                          ? S(0)
                          : static_cast<S>(std::exp(
                                static_cast<double>(scores(i, j) - row_max)));
          probs(i, j) = e;
          denom += static_cast<double>(e);
        }
        const S inv_denom = static_cast<S>(1.0 / denom);
        for (long j = 0; j < T; ++j) probs(i, j) *= inv_denom;
      }
      Mat<S> used = probs;
      if (use_dropout) {
        lc.prob_drop[static_cast<std::size_t>(h)] =
            detail::dropout_scale<S>(T, T, cfg.dropout, *rng);
        used = used.cwiseProduct(lc.prob_drop[static_cast<std::size_t>(h)]);
      }
      lc.context.middleCols(h * dh, dh) = used * vh;
    }

    Mat<S> attn_out = (lc.context * params.at(p + "attn.wo")).rowwise() +
                      params.at(p + "attn.bo").row(0);
    if (use_dropout) {
      lc.attn_drop = detail::dropout_scale<S>(T, H, cfg.dropout, *rng);
      attn_out = attn_out.cwiseProduct(lc.attn_drop);
    }
    lc.x_mid = x + attn_out;

    detail::layer_norm(lc.x_mid, params.at(p + "ln2.g"), params.at(p + "ln2.b"),
                       lc.ln2_out, lc.xhat2, lc.inv2);
    lc.z1 = (lc.ln2_out * params.at(p + "ffn.w1")).rowwise() +
            params.at(p + "ffn.b1").row(0);
    lc.g1 = detail::gelu(lc.z1);
    Mat<S> ffn_out = (lc.g1 * params.at(p + "ffn.w2")).rowwise() +
                     params.at(p + "ffn.b2").row(0);
    if (use_dropout) {
      lc.ffn_drop = detail::dropout_scale<S>(T, H, cfg.dropout, *rng);
      ffn_out = ffn_out.cwiseProduct(lc.ffn_drop);
    }
    x = lc.x_mid + ffn_out;
    detail::check_finite(x, layer, "activation");
    trace.hidden.push_back(x);
  }

  Mat<S> xhatf;
  std::vector<S> invf;
  Mat<S> final_hidden;
  detail::layer_norm(x, params.at("final_ln.g"), params.at("final_ln.b"),
                     final_hidden, xhatf, invf);
  if (cache != nullptr) {
    cache->xhatf = xhatf;
    cache->invf = invf;
  }
  trace.final_hidden = final_hidden;

  const Mat<S>& mlm_w = cfg.tie_mlm ? params.at("emb.tok") : params.at("mlm.w");
  if (cfg.tie_mlm)
    trace.mlm_logits = (final_hidden * mlm_w.transpose()).rowwise() +
                       params.at("mlm.bias").row(0);
  else
    trace.mlm_logits =
        (final_hidden * mlm_w).rowwise() + params.at("mlm.bias").row(0);

  if (run_heads && (cfg.n_intents > 0 || cfg.n_tags > 0)) {
    HeadCache<S> local_heads;
    HeadCache<S>& hc = cache != nullptr ? cache->heads : local_heads;
    if (cfg.n_intents > 0) {
      hc.pooled = Mat<S>::Zero(1, H);
      if (cfg.pooling == Pooling::mean) {
        for (long t = 0; t < T; ++t)
          if (mask_vec[static_cast<std::size_t>(t)] != 0)
            hc.pooled.row(0) += final_hidden.row(t);
        hc.pool_count = static_cast<double>(n_real);
        hc.pooled /= static_cast<S>(hc.pool_count);
      } else {
        hc.pooled.row(0) = final_hidden.row(0);
        hc.pool_count = 1.0;
      }
      hc.ic_z1 = (hc.pooled * params.at("head.ic.w1")).rowwise() +
                 params.at("head.ic.b1").row(0);
      hc.ic_a1 = detail::gelu(hc.ic_z1);
      hc.ic_z2 = (hc.ic_a1 * params.at("head.ic.w2")).rowwise() +
                 params.at("head.ic.b2").row(0);
      hc.ic_a2 = detail::gelu(hc.ic_z2);
      trace.ic_logits = (hc.ic_a2 * params.at("head.ic.w3")).rowwise() +
                        params.at("head.ic.b3").row(0);
    }
    if (cfg.n_tags > 0) {
      hc.sf_z1 = (final_hidden * params.at("head.sf.w1")).rowwise() +
                 params.at("head.sf.b1").row(0);
      hc.sf_a1 = detail::gelu(hc.sf_z1);
      hc.sf_z2 = (hc.sf_a1 * params.at("head.sf.w2")).rowwise() +
                 params.at("head.sf.b2").row(0);
      hc.sf_a2 = detail::gelu(hc.sf_z2);
      trace.sf_logits = (hc.sf_a2 * params.at("head.sf.w3")).rowwise() +
                        params.at("head.sf.b3").row(0);
    }
    if (cache != nullptr) cache->ran_heads = true;
  }

  return trace;
}

// Recomputes head logits from a finished trace (evaluation path; the
// training path runs heads inside forward so the cache holds them).
template <typename S>
Mat<S> classify(const ParameterSet<S>& params, const EncoderConfig& cfg,
                const ForwardTrace<S>& trace, Task task) {
  const long T = trace.final_hidden.rows();
  const long H = cfg.hidden;
  if (task == Task::intent) {
    if (cfg.n_intents <= 0)
      throw ConfigError("intent head is not configured (n_intents == 0)");
    Mat<S> pooled = Mat<S>::Zero(1, H);
    if (cfg.pooling == Pooling::mean) {
      long n_real = 0;
      for (long t = 0; t < T; ++t)
        if (trace.mask[static_cast<std::size_t>(t)] != 0) {
          pooled.row(0) += trace.final_hidden.row(t);
          ++n_real;
        }
      pooled /= static_cast<S>(n_real);
    } else {
      pooled.row(0) = trace.final_hidden.row(0);
    }
    const Mat<S> a1 = detail::gelu<S>(
        (pooled * params.at("head.ic.w1")).rowwise() + params.at("head.ic.b1").row(0));
    const Mat<S> a2 = detail::gelu<S>(
        (a1 * params.at("head.ic.w2")).rowwise() + params.at("head.ic.b2").row(0));
    return (a2 * params.at("head.ic.w3")).rowwise() + params.at("head.ic.b3").row(0);
  }
  if (cfg.n_tags <= 0)
    throw ConfigError("slot head is not configured (n_tags == 0)");
  const Mat<S> a1 = detail::gelu<S>(
      (trace.final_hidden * params.at("head.sf.w1")).rowwise() +
      params.at("head.sf.b1").row(0));
  const Mat<S> a2 = detail::gelu<S>(
      (a1 * params.at("head.sf.w2")).rowwise() + params.at("head.sf.b2").row(0));
  return (a2 * params.at("head.sf.w3")).rowwise() + params.at("head.sf.b3").row(0);
}

// Full backward pass. Returns gradients for every parameter tensor (zero for
// tensors the loss does not reach).
template <typename S>
ParameterSet<S> backward(const ParameterSet<S>& params, const EncoderConfig& cfg,
                         const ForwardCache<S>& cache, const TraceGrads<S>& g) {
  if (!cache.train_mode)
    throw ValidationError("backward requires a train-mode forward cache");
  const long T = static_cast<long>(cache.ids.size());
  const long H = cfg.hidden;
  const long A = cfg.attn_width();
  const long dh = cfg.head_size;
  const S inv_sqrt_dh = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh)));
  const bool use_dropout = cfg.dropout > 0.0;

  ParameterSet<S> grads = zeros_like(params);
  Mat<S> d_final = Mat<S>::Zero(T, H);

  // Post-final-layernorm activations, recomputed from the cached normalized
  // stream (cheaper than caching them separately).
  Mat<S> final_hidden(T, H);
  for (long t = 0; t < T; ++t)
    final_hidden.row(t) =
        cache.xhatf.row(t).cwiseProduct(params.at("final_ln.g").row(0)) +
        params.at("final_ln.b").row(0);

  // MLM head.
  if (g.d_mlm_logits.size() != 0) {
    const Mat<S>& dl = g.d_mlm_logits;
    if (cfg.tie_mlm) {
      d_final += dl * params.at("emb.tok");
      grads.at("emb.tok") += dl.transpose() * final_hidden;
    } else {
      d_final += dl * params.at("mlm.w").transpose();
      grads.at("mlm.w") += final_hidden.transpose() * dl;
    }
    grads.at("mlm.bias") += dl.colwise().sum();
  }

  // Classification heads.
  if (g.d_ic_logits.size() != 0) {
    if (!cache.ran_heads)
      throw ValidationError("intent-head gradient without head forward");
    const HeadCache<S>& hc = cache.heads;
    Mat<S> d = g.d_ic_logits;  // 1 x n_intents
    grads.at("head.ic.w3") += hc.ic_a2.transpose() * d;
    grads.at("head.ic.b3") += d.colwise().sum();
    Mat<S> d_a2 = d * params.at("head.ic.w3").transpose();
    Mat<S> d_z2 = d_a2.cwiseProduct(detail::gelu_grad(hc.ic_z2));
    grads.at("head.ic.w2") += hc.ic_a1.transpose() * d_z2;
    grads.at("head.ic.b2") += d_z2.colwise().sum();
    Mat<S> d_a1 = d_z2 * params.at("head.ic.w2").transpose();
    Mat<S> d_z1 = d_a1.cwiseProduct(detail::gelu_grad(hc.ic_z1));
    grads.at("head.ic.w1") += hc.pooled.transpose() * d_z1;
    grads.at("head.ic.b1") += d_z1.colwise().sum();
    const Mat<S> d_pooled = d_z1 * params.at("head.ic.w1").transpose();
    if (cfg.pooling == Pooling::mean) {
      const S inv_n = static_cast<S>(1.0 / hc.pool_count);
      for (long t = 0; t < T; ++t)
        if (cache.mask[static_cast<std::size_t>(t)] != 0)
          d_final.row(t) += d_pooled.row(0) * inv_n;
    } else {
      d_final.row(0) += d_pooled.row(0);
    }
  }
  if (g.d_sf_logits.size() != 0) {
    if (!cache.ran_heads)
      throw ValidationError("slot-head gradient without head forward");
    const HeadCache<S>& hc = cache.heads;
    const Mat<S>& d = g.d_sf_logits;  // T x n_tags
    grads.at("head.sf.w3") += hc.sf_a2.transpose() * d;
    grads.at("head.sf.b3") += d.colwise().sum();
    Mat<S> d_a2 = d * params.at("head.sf.w3").transpose();
    Mat<S> d_z2 = d_a2.cwiseProduct(detail::gelu_grad(hc.sf_z2));
    grads.at("head.sf.w2") += hc.sf_a1.transpose() * d_z2;
    grads.at("head.sf.b2") += d_z2.colwise().sum();
    Mat<S> d_a1 = d_z2 * params.at("head.sf.w2").transpose();
    Mat<S> d_z1 = d_a1.cwiseProduct(detail::gelu_grad(hc.sf_z1));
    grads.at("head.sf.w1") += final_hidden.transpose() * d_z1;
    grads.at("head.sf.b1") += d_z1.colwise().sum();
    d_final += d_z1 * params.at("head.sf.w1").transpose();
  }

  // Final layernorm.
  Mat<S> d_stream = detail::layer_norm_backward(
      d_final, cache.xhatf, cache.invf, params.at("final_ln.g"),
      grads.at("final_ln.g"), grads.at("final_ln.b"));

  for (int layer = cfg.n_layers - 1; layer >= 0; --layer) {
    const auto it = g.d_block_out.find(layer);
    if (it != g.d_block_out.end()) d_stream += it->second;

    const std::string p = [&] {
      char buf[24];
      std::snprintf(buf, sizeof(buf), "layer.%02d.", layer);
      return std::string(buf);
    }();
    const LayerCache<S>& lc = cache.layers[static_cast<std::size_t>(layer)];

    // FFN sublayer: x_out = x_mid + drop(W2 gelu(W1 ln2(x_mid) + b1) + b2).
    Mat<S> d_ffn_out = d_stream;
    if (use_dropout) d_ffn_out = d_ffn_out.cwiseProduct(lc.ffn_drop);
    grads.at(p + "ffn.w2") += lc.g1.transpose() * d_ffn_out;
    grads.at(p + "ffn.b2") += d_ffn_out.colwise().sum();
    Mat<S> d_g1 = d_ffn_out * params.at(p + "ffn.w2").transpose();
    Mat<S> d_z1 = d_g1.cwiseProduct(detail::gelu_grad(lc.z1));
    grads.at(p + "ffn.w1") += lc.ln2_out.transpose() * d_z1;
    grads.at(p + "ffn.b1") += d_z1.colwise().sum();
    Mat<S> d_ln2_out = d_z1 * params.at(p + "ffn.w1").transpose();
    Mat<S> d_mid = d_stream + detail::layer_norm_backward(
                                  d_ln2_out, lc.xhat2, lc.inv2,
                                  params.at(p + "ln2.g"), grads.at(p + "ln2.g"),
                                  grads.at(p + "ln2.b"));

    // Attention sublayer: x_mid = x_in + drop(context Wo + bo).
    Mat<S> d_attn_out = d_mid;
    if (use_dropout) d_attn_out = d_attn_out.cwiseProduct(lc.attn_drop);
    grads.at(p + "attn.wo") += lc.context.transpose() * d_attn_out;
    grads.at(p + "attn.bo") += d_attn_out.colwise().sum();
    Mat<S> d_context = d_attn_out * params.at(p + "attn.wo").transpose();

    Mat<S> d_q = Mat<S>::Zero(T, A);
    Mat<S> d_k = Mat<S>::Zero(T, A);
    Mat<S> d_v = Mat<S>::Zero(T, A);
    for (int h = 0; h < cfg.n_heads; ++h) {
      const auto qh = lc.q.middleCols(h * dh, dh);
      const auto kh = lc.k.middleCols(h * dh, dh);
      const auto vh = lc.v.middleCols(h * dh, dh);
      const Mat<S>& probs = lc.probs[static_cast<std::size_t>(h)];
      const auto d_ch = d_context.middleCols(h * dh, dh);

      Mat<S> used = probs;
      if (use_dropout)
        used = used.cwiseProduct(lc.prob_drop[static_cast<std::size_t>(h)]);
      d_v.middleCols(h * dh, dh) += used.transpose() * d_ch;

      Mat<S> d_used = d_ch * vh.transpose();
      if (use_dropout)
        d_used = d_used.cwiseProduct(lc.prob_drop[static_cast<std::size_t>(h)]);
      // Softmax backward, rowwise: dS = P .* (dP - sum(dP .* P)).
      Mat<S> d_scores(T, T);
      for (long i = 0; i < T; ++i) {
        double dot = 0.0;
        for (long j = 0; j < T; ++j)
          dot += static_cast<double>(d_used(i, j)) *
                 static_cast<double>(probs(i, j));
        for (long j = 0; j < T; ++j)
          d_scores(i, j) =
              probs(i, j) * (d_used(i, j) - static_cast<S>(dot));
      }
      d_scores *= inv_sqrt_dh;
      d_q.middleCols(h * dh, dh) += d_scores * kh;
      d_k.middleCols(h * dh, dh) += d_scores.transpose() * qh;
    }

    grads.at(p + "attn.wq") += lc.a.transpose() * d_q;
    grads.at(p + "attn.bq") += d_q.colwise().sum();
    grads.at(p + "attn.wk") += lc.a.transpose() * d_k;
    grads.at(p + "attn.bk") += d_k.colwise().sum();
    grads.at(p + "attn.wv") += lc.a.transpose() * d_v;
    grads.at(p + "attn.bv") += d_v.colwise().sum();
    Mat<S> d_a = d_q * params.at(p + "attn.wq").transpose() +
                 d_k * params.at(p + "attn.wk").transpose() +
                 d_v * params.at(p + "attn.wv").transpose();
    d_stream = d_mid + detail::layer_norm_backward(
                           d_a, lc.xhat1, lc.inv1, params.at(p + "ln1.g"),
                           grads.at(p + "ln1.g"), grads.at(p + "ln1.b"));
  }

  // Embeddings.
  if (use_dropout) d_stream = d_stream.cwiseProduct(cache.emb_drop);
  Mat<S>& d_tok = grads.at("emb.tok");
  Mat<S>& d_pos = grads.at("emb.pos");
  for (long t = 0; t < T; ++t) {
    d_tok.row(cache.ids[static_cast<std::size_t>(t)]) += d_stream.row(t);
    d_pos.row(t) += d_stream.row(t);
  }

  for (const auto& [name, tensor] : grads.tensors)
    if (!tensor.allFinite())
      throw NumericFault("non-finite gradient in tensor '" + name + "'");
  return grads;
}

// dst += scale * src over every tensor.
template <typename S>
void axpy(ParameterSet<S>& dst, const ParameterSet<S>& src, S scale = S(1)) {
  for (auto& [name, tensor] : dst.tensors) {
    const auto it = src.tensors.find(name);
    if (it != src.tensors.end()) tensor += it->second * scale;
  }
}

}  // namespace dforge::enc
