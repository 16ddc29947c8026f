#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dforge/common/error.hpp"
#include "dforge/common/rng.hpp"
#include "dforge/encoder/config.hpp"

namespace dforge::enc {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Named tensors, ordered by name so that initialization, serialization, and
// optimizer traversals are all deterministic.
template <typename S>
struct ParameterSet {
  std::map<std::string, Mat<S>> tensors;

  Mat<S>& at(const std::string& name) {
    const auto it = tensors.find(name);
    if (it == tensors.end()) throw ConfigError("missing tensor '" + name + "'");
    return it->second;
  }
  const Mat<S>& at(const std::string& name) const {
    const auto it = tensors.find(name);
    if (it == tensors.end()) throw ConfigError("missing tensor '" + name + "'");
    return it->second;
  }
  bool has(const std::string& name) const { return tensors.contains(name); }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& [name, tensor] : tensors)
      n += static_cast<std::size_t>(tensor.size());
    return n;
  }
};

struct TensorShape {
  std::string name;
  long rows = 0;
  long cols = 0;
};

// Canonical tensor inventory for a configuration, sorted by name.
std::vector<TensorShape> parameter_shapes(const EncoderConfig& config);
std::size_t parameter_count(const EncoderConfig& config);

// Weights ~ Normal(0, 0.02^2) from the seeded generator; layernorm gains 1;
// biases 0. Draws happen in name order, in double, then cast, so the same
// seed produces the same parameters for every scalar type.
template <typename S>
ParameterSet<S> init_params(const EncoderConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(mix_seed(seed, "init"));
  ParameterSet<S> params;
  for (const auto& shape : parameter_shapes(config)) {
    Mat<S> tensor(shape.rows, shape.cols);
    const std::string& name = shape.name;
    const std::size_t dot = name.rfind('.');
    const std::string leaf = dot == std::string::npos ? name : name.substr(dot + 1);
    if (leaf == "g") {
      tensor.setOnes();
    } else if (!leaf.empty() && leaf[0] == 'b') {
      tensor.setZero();
    } else {
      for (long r = 0; r < tensor.rows(); ++r)
        for (long c = 0; c < tensor.cols(); ++c)
          tensor(r, c) = static_cast<S>(rng.normal(0.0, 0.02));
    }
    params.tensors.emplace(name, std::move(tensor));
  }
  return params;
}

template <typename S>
ParameterSet<S> zeros_like(const ParameterSet<S>& params) {
  ParameterSet<S> out;
  for (const auto& [name, tensor] : params.tensors)
    out.tensors.emplace(name, Mat<S>::Zero(tensor.rows(), tensor.cols()));
  return out;
}

template <typename To, typename From>
ParameterSet<To> cast_params(const ParameterSet<From>& params) {
  ParameterSet<To> out;
  for (const auto& [name, tensor] : params.tensors)
    out.tensors.emplace(name, tensor.template cast<To>());
  return out;
}

}  // namespace dforge::enc
