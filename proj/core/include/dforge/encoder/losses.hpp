#pragma once

#include <cmath>
#include <span>

#include "dforge/encoder/params.hpp"

namespace dforge::enc {

// Label value meaning "no supervision at this position".
inline constexpr std::int32_t kIgnoreLabel = -1;

template <typename S>
struct LossGrad {
  double value = 0.0;   // summed (not averaged) cross-entropy
  long count = 0;       // labeled positions
  Mat<S> d_logits;      // gradient of the *sum*
};

// Summed categorical cross-entropy over rows with a non-IGNORE label.
// Softmax normalizers are accumulated in double.
template <typename S>
LossGrad<S> cross_entropy_sum(const Mat<S>& logits,
                              std::span<const std::int32_t> labels) {
  if (static_cast<long>(labels.size()) != logits.rows())
    throw ValidationError("labels do not align with logits rows");
  LossGrad<S> out;
  out.d_logits = Mat<S>::Zero(logits.rows(), logits.cols());
  const long V = logits.cols();
  for (long t = 0; t < logits.rows(); ++t) {
    const std::int32_t y = labels[static_cast<std::size_t>(t)];
    if (y == kIgnoreLabel) continue;
    if (y < 0 || y >= V)
      throw ValidationError("label " + std::to_string(y) + " out of range");
    double row_max = -std::numeric_limits<double>::infinity();
    for (long j = 0; j < V; ++j)
      row_max = std::max(row_max, static_cast<double>(logits(t, j)));
    double denom = 0.0;
    for (long j = 0; j < V; ++j)
      denom += std::exp(static_cast<double>(logits(t, j)) - row_max);
    const double log_denom = std::log(denom) + row_max;
    out.value += log_denom - static_cast<double>(logits(t, y));
    for (long j = 0; j < V; ++j) {
      const double p =
          std::exp(static_cast<double>(logits(t, j)) - log_denom);
      out.d_logits(t, j) = static_cast<S>(p);
    }
    out.d_logits(t, y) -= S(1);
    ++out.count;
  }
  return out;
}

// Mean categorical cross-entropy over labeled positions; at least one
// position must carry a label.
template <typename S>
LossGrad<S> mlm_loss(const Mat<S>& logits, std::span<const std::int32_t> labels) {
  LossGrad<S> out = cross_entropy_sum(logits, labels);
  if (out.count == 0)
    throw ValidationError("mlm_loss requires at least one labeled position");
  out.value /= static_cast<double>(out.count);
  out.d_logits /= static_cast<S>(out.count);
  return out;
}

}  // namespace dforge::enc
