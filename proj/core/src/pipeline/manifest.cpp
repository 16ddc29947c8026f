#include "dforge/pipeline/manifest.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include <json.hpp>

#include "dforge/common/error.hpp"
#include "dforge/common/hash.hpp"

namespace dforge::pipeline {

using json = nlohmann::json;

namespace {

std::filesystem::path manifest_path(const std::filesystem::path& workdir) {
  return workdir / "manifests.jsonl";
}

}  // namespace

void append_manifest(const std::filesystem::path& workdir, const RunManifest& m) {
  std::ofstream out(manifest_path(workdir), std::ios::app);
  if (!out) throw IoError("cannot append manifest in " + workdir.string());
  json doc{{"run_id", m.run_id},   {"stage", m.stage},
           {"inputs", m.inputs},   {"outputs", m.outputs},
           {"seeds", m.seeds},     {"wall_ms", m.wall_ms},
           {"steps", m.steps}};
  if (!m.config_json.empty()) doc["config"] = json::parse(m.config_json);
  out << doc.dump() << '\n';
}

std::vector<RunManifest> load_manifests(const std::filesystem::path& workdir) {
  std::vector<RunManifest> manifests;
  const auto path = manifest_path(workdir);
  if (!std::filesystem::exists(path)) return manifests;
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json doc;
    try {
      doc = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ValidationError(path.string() + ":" + std::to_string(lineno) +
                            ": " + e.what());
    }
    RunManifest m;
    m.run_id = doc.at("run_id").get<std::string>();
    m.stage = doc.at("stage").get<std::string>();
    m.inputs = doc.value("inputs", std::map<std::string, std::string>{});
    m.outputs = doc.value("outputs", std::map<std::string, std::string>{});
    m.seeds = doc.value("seeds", std::vector<std::uint64_t>{});
    m.wall_ms = doc.value("wall_ms", static_cast<std::int64_t>(0));
    m.steps = doc.value("steps", static_cast<std::int64_t>(0));
    if (doc.contains("config")) m.config_json = doc["config"].dump();
    manifests.push_back(std::move(m));
  }
  return manifests;
}

std::string compute_run_id(const std::string& stage,
                           const std::map<std::string, std::string>& inputs,
                           const std::string& config_json) {
  std::string blob = stage;
  blob.push_back('\n');
  for (const auto& [name, digest] : inputs) {
    blob += name;
    blob.push_back('=');
    blob += digest;
    blob.push_back('\n');
  }
  blob += config_json;
  return sha256_hex(blob).substr(0, 16);
}

std::vector<std::string> provenance_chain(const std::filesystem::path& workdir,
                                          const std::string& artifact_hash) {
  const auto manifests = load_manifests(workdir);
  std::vector<std::string> chain;
  std::set<std::string> visited;
  std::vector<std::string> frontier = {artifact_hash};
  while (!frontier.empty()) {
    const std::string hash = frontier.back();
    frontier.pop_back();
    for (const auto& m : manifests) {
      const bool produces =
          std::any_of(m.outputs.begin(), m.outputs.end(),
                      [&](const auto& kv) { return kv.second == hash; });
      if (!produces || visited.contains(m.run_id)) continue;
      visited.insert(m.run_id);
      chain.push_back(m.run_id);
      for (const auto& [name, input_hash] : m.inputs)
        frontier.push_back(input_hash);
    }
  }
  return chain;
}

}  // namespace dforge::pipeline
