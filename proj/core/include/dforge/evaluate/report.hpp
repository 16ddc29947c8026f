#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace dforge::eval {

struct MetricValue {
  double value = 0.0;
  double weight = 0.0;  // denominator count behind the value
};

// Metric name -> value, plus optional per-group (language/domain) breakdowns
// whose weighted average reproduces the pooled value.
struct EvalReport {
  std::string checkpoint_id;
  std::map<std::string, double> metrics;
  std::map<std::string, std::map<std::string, MetricValue>> breakdowns;
  std::vector<std::uint64_t> seeds;

  // Weighted average of a metric's breakdown groups.
  double pooled(const std::string& metric) const;

  void save_json(const std::filesystem::path& path) const;
  static EvalReport load_json(const std::filesystem::path& path);

  // Flat table for plotting: metric<TAB>group<TAB>value<TAB>weight.
  void save_tsv(const std::filesystem::path& path) const;
};

}  // namespace dforge::eval
