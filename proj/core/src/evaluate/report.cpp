#include "dforge/evaluate/report.hpp"

#include <fstream>

#include <json.hpp>

#include "dforge/common/error.hpp"

namespace dforge::eval {

using json = nlohmann::json;

double EvalReport::pooled(const std::string& metric) const {
  const auto it = breakdowns.find(metric);
  if (it == breakdowns.end() || it->second.empty())
    throw ValidationError("no breakdown recorded for metric '" + metric + "'");
  double num = 0.0, denom = 0.0;
  for (const auto& [group, mv] : it->second) {
    num += mv.value * mv.weight;
    denom += mv.weight;
  }
  if (denom == 0.0)
    throw ValidationError("breakdown for '" + metric + "' has zero weight");
  return num / denom;
}

void EvalReport::save_json(const std::filesystem::path& path) const {
  json doc;
  doc["checkpoint_id"] = checkpoint_id;
  doc["metrics"] = metrics;
  doc["seeds"] = seeds;
  json bd = json::object();
  for (const auto& [metric, groups] : breakdowns) {
    json g = json::object();
    for (const auto& [group, mv] : groups)
      g[group] = {{"value", mv.value}, {"weight", mv.weight}};
    bd[metric] = g;
  }
  doc["breakdowns"] = bd;
  std::ofstream out(path);
  if (!out) throw IoError("cannot write report " + path.string());
  out << doc.dump(2) << '\n';
}

EvalReport EvalReport::load_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open report " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  EvalReport report;
  report.checkpoint_id = doc.value("checkpoint_id", "");
  if (doc.contains("metrics"))
    report.metrics = doc["metrics"].get<std::map<std::string, double>>();
  if (doc.contains("seeds"))
    report.seeds = doc["seeds"].get<std::vector<std::uint64_t>>();
  if (doc.contains("breakdowns")) {
    for (const auto& [metric, groups] : doc["breakdowns"].items()) {
      for (const auto& [group, mv] : groups.items()) {
        report.breakdowns[metric][group] = {mv.at("value").get<double>(),
                                            mv.at("weight").get<double>()};
      }
    }
  }
  return report;
}

void EvalReport::save_tsv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "metric\tgroup\tvalue\tweight\n";
  for (const auto& [metric, value] : metrics)
    out << metric << "\tall\t" << std::to_string(value) << "\t0\n";
  for (const auto& [metric, groups] : breakdowns)
    for (const auto& [group, mv] : groups)
      out << metric << '\t' << group << '\t' << std::to_string(mv.value) << '\t'
          << std::to_string(mv.weight) << '\n';
}

}  // namespace dforge::eval
