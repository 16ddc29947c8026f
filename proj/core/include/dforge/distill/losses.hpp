#pragma once

#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "dforge/encoder/net.hpp"

namespace dforge::distill {

// Student layer index -> learned linear map (student_hidden x teacher_hidden)
// aligning widths for hidden-state matching. Present only when the widths
// differ; discarded after distillation.
template <typename S>
struct ProjectionSet {
  std::map<int, enc::Mat<S>> weights;
};

template <typename S>
ProjectionSet<S> init_projections(const std::vector<std::pair<int, int>>& layer_map,
                                  int student_hidden, int teacher_hidden,
                                  std::uint64_t seed) {
  ProjectionSet<S> out;
  if (student_hidden == teacher_hidden) return out;
  Rng rng(mix_seed(seed, "projections"));
  for (const auto& [s_layer, t_layer] : layer_map) {
    enc::Mat<S> w(student_hidden, teacher_hidden);
    for (long r = 0; r < w.rows(); ++r)
      for (long c = 0; c < w.cols(); ++c)
        w(r, c) = static_cast<S>(rng.normal(0.0, 0.02));
    out.weights.emplace(s_layer, std::move(w));
  }
  return out;
}

// Soft cross-entropy between student and teacher logits at a temperature:
// sum over `positions` of CE(softmax(teacher/T), log_softmax(student/T)).
// `sum`/`count` let callers average over a whole batch; d_student is the
// gradient of the sum.
template <typename S>
struct SoftCeResult {
  double sum = 0.0;
  long count = 0;
  enc::Mat<S> d_student;
};

template <typename S>
SoftCeResult<S> soft_cross_entropy(const enc::Mat<S>& student,
                                   const enc::Mat<S>& teacher,
                                   double temperature,
                                   const std::vector<long>& positions) {
  if (student.rows() != teacher.rows() || student.cols() != teacher.cols())
    throw ValidationError("soft cross-entropy requires matching logit shapes");
  if (!(temperature > 0.0))
    throw ValidationError("temperature must be positive");

  SoftCeResult<S> out;
  out.d_student = enc::Mat<S>::Zero(student.rows(), student.cols());
  const long V = student.cols();
  std::vector<double> ps(static_cast<std::size_t>(V));
  std::vector<double> pt(static_cast<std::size_t>(V));
  for (const long row : positions) {
    if (row < 0 || row >= student.rows())
      throw ValidationError("soft cross-entropy position out of range");
    double max_s = -std::numeric_limits<double>::infinity();
    double max_t = max_s;
    for (long j = 0; j < V; ++j) {
      max_s = std::max(max_s, static_cast<double>(student(row, j)) / temperature);
      max_t = std::max(max_t, static_cast<double>(teacher(row, j)) / temperature);
    }
    double zs = 0.0, zt = 0.0;
    for (long j = 0; j < V; ++j) {
      ps[static_cast<std::size_t>(j)] =
          std::exp(static_cast<double>(student(row, j)) / temperature - max_s);
      pt[static_cast<std::size_t>(j)] =
          std::exp(static_cast<double>(teacher(row, j)) / temperature - max_t);
      zs += ps[static_cast<std::size_t>(j)];
      zt += pt[static_cast<std::size_t>(j)];
    }
    const double log_zs = std::log(zs);
    double ce = 0.0;
    for (long j = 0; j < V; ++j) {
      ps[static_cast<std::size_t>(j)] /= zs;
      pt[static_cast<std::size_t>(j)] /= zt;
      const double log_ps =
          static_cast<double>(student(row, j)) / temperature - max_s - log_zs;
      ce -= pt[static_cast<std::size_t>(j)] * log_ps;
    }
    out.sum += ce;
    ++out.count;
    for (long j = 0; j < V; ++j)
      out.d_student(row, j) += static_cast<S>(
          (ps[static_cast<std::size_t>(j)] - pt[static_cast<std::size_t>(j)]) /
          temperature);
  }
  return out;
}

// Validates a student->teacher layer map against both layer counts.
void validate_layer_map(const std::vector<std::pair<int, int>>& layer_map,
                        int student_layers, int teacher_layers);

// Mean squared error between (projected) student block outputs and mapped
// teacher block outputs over unpadded positions. `sum` accumulates squared
// error over (layers x rows x teacher_hidden); a batch-level mean divides by
// (n_layers * teacher_hidden * total_rows).
template <typename S>
struct HiddenMatchResult {
  double sum = 0.0;
  long rows = 0;  // unpadded positions (per sequence, not per layer)
  std::map<int, enc::Mat<S>> d_student_blocks;  // grads of `sum`
  std::map<int, enc::Mat<S>> d_projections;
};

template <typename S>
HiddenMatchResult<S> hidden_match_loss(const enc::ForwardTrace<S>& student,
                                       const enc::ForwardTrace<S>& teacher,
                                       const std::vector<std::pair<int, int>>& layer_map,
                                       const ProjectionSet<S>* projections) {
  if (student.ids != teacher.ids)
    throw ValidationError("hidden matching requires identical input ids");
  validate_layer_map(layer_map,
                     static_cast<int>(student.hidden.size()) - 1,
                     static_cast<int>(teacher.hidden.size()) - 1);

  const long hs = student.hidden.front().cols();
  const long ht = teacher.hidden.front().cols();
  const bool need_proj = hs != ht;
  if (need_proj && projections == nullptr)
    throw ConfigError("hidden widths differ but no projections were provided");

  HiddenMatchResult<S> out;
  const long T = student.hidden.front().rows();
  for (long t = 0; t < T; ++t)
    if (student.mask.empty() || student.mask[static_cast<std::size_t>(t)] != 0)
      ++out.rows;

  for (const auto& [s_layer, t_layer] : layer_map) {
    const enc::Mat<S>& s_out = student.hidden[static_cast<std::size_t>(s_layer) + 1];
    const enc::Mat<S>& t_out = teacher.hidden[static_cast<std::size_t>(t_layer) + 1];
    const enc::Mat<S>* w = nullptr;
    if (need_proj) {
      const auto it = projections->weights.find(s_layer);
      if (it == projections->weights.end())
        throw ConfigError("missing projection for student layer " +
                          std::to_string(s_layer));
      w = &it->second;
    }
    enc::Mat<S> projected = need_proj ? enc::Mat<S>(s_out * *w) : s_out;
    enc::Mat<S> diff = projected - t_out;
    for (long t = 0; t < T; ++t)
      if (!student.mask.empty() && student.mask[static_cast<std::size_t>(t)] == 0)
        diff.row(t).setZero();
    out.sum += static_cast<double>(
        diff.template cast<double>().array().square().sum());
    const enc::Mat<S> d_proj = diff * S(2);
    if (need_proj) {
      out.d_projections[s_layer] = s_out.transpose() * d_proj;
      auto [it, inserted] =
          out.d_student_blocks.emplace(s_layer, d_proj * w->transpose());
      if (!inserted) it->second += d_proj * w->transpose();
    } else {
      auto [it, inserted] = out.d_student_blocks.emplace(s_layer, d_proj);
      if (!inserted) it->second += d_proj;
    }
  }
  return out;
}

}  // namespace dforge::distill
