#pragma once

#include <cmath>

#include "dforge/encoder/params.hpp"
#include "dforge/pretrain/schedule.hpp"

namespace dforge::pretrain {

template <typename S>
struct AdamState {
  std::int64_t t = 0;
  enc::ParameterSet<S> m;
  enc::ParameterSet<S> v;

  static AdamState zero_like(const enc::ParameterSet<S>& params) {
    AdamState state;
    state.m = enc::zeros_like(params);
    state.v = enc::zeros_like(params);
    return state;
  }
};

// Global gradient norm, accumulated in double.
template <typename S>
double global_norm(const enc::ParameterSet<S>& grads) {
  double sumsq = 0.0;
  for (const auto& [name, tensor] : grads.tensors)
    sumsq += static_cast<double>(
        tensor.template cast<double>().array().square().sum());
  return std::sqrt(sumsq);
}

// Scales gradients in place so the global norm is at most `clip`. A small
// tolerance keeps the operation exactly idempotent despite rounding.
template <typename S>
double clip_global_norm(enc::ParameterSet<S>& grads, double clip) {
  const double norm = global_norm(grads);
  if (norm <= clip * (1.0 + 1e-12)) return norm;
  const S scale = static_cast<S>(clip / norm);
  for (auto& [name, tensor] : grads.tensors) tensor *= scale;
  return norm;
}

// Weight decay is decoupled (applied to the weights, never to the moments)
// and skipped for biases and layernorm parameters.
inline bool weight_decay_applies(const std::string& name) {
  const std::size_t dot = name.rfind('.');
  const std::string leaf = dot == std::string::npos ? name : name.substr(dot + 1);
  if (leaf.empty()) return false;
  if (leaf[0] == 'b' || leaf == "g") return false;
  return true;
}

// One clipped AdamW step. Gradients must be finite (checked before any state
// is mutated so an aborted step leaves params and state untouched).
template <typename S>
void optimizer_step(enc::ParameterSet<S>& params, enc::ParameterSet<S> grads,
                    const TrainConfig& config, double lr, AdamState<S>& state) {
  for (const auto& [name, tensor] : grads.tensors)
    if (!tensor.allFinite())
      throw NumericFault("non-finite gradient in tensor '" + name +
                         "'; optimizer step aborted");

  clip_global_norm(grads, config.grad_clip);
  state.t += 1;
  const double b1 = config.adam_beta1;
  const double b2 = config.adam_beta2;
  const double bias1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
  const double bias2 = 1.0 - std::pow(b2, static_cast<double>(state.t));

  for (auto& [name, grad] : grads.tensors) {
    auto& p = params.at(name);
    auto& m = state.m.at(name);
    auto& v = state.v.at(name);
    m = m * static_cast<S>(b1) + grad * static_cast<S>(1.0 - b1);
    v = (v.array() * static_cast<S>(b2) +
         grad.array().square() * static_cast<S>(1.0 - b2))
            .matrix();
    for (long r = 0; r < p.rows(); ++r) {
      for (long c = 0; c < p.cols(); ++c) {
        const double mhat = static_cast<double>(m(r, c)) / bias1;
        const double vhat = static_cast<double>(v(r, c)) / bias2;
        p(r, c) -= static_cast<S>(lr * mhat /
                                  (std::sqrt(vhat) + config.adam_eps));
      }
    }
    if (config.weight_decay > 0.0 && weight_decay_applies(name))
      p *= static_cast<S>(1.0 - lr * config.weight_decay);
  }
}

}  // namespace dforge::pretrain
