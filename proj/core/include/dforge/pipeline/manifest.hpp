#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace dforge::pipeline {

// Append-only provenance record: every output artifact hash is tied to the
// full set of input hashes that produced it.
struct RunManifest {
  std::string run_id;
  std::string stage;
  std::map<std::string, std::string> inputs;   // name -> sha256
  std::map<std::string, std::string> outputs;  // name -> sha256
  std::string config_json;
  std::vector<std::uint64_t> seeds;
  std::int64_t wall_ms = 0;
  std::int64_t steps = 0;
};

void append_manifest(const std::filesystem::path& workdir, const RunManifest& m);
std::vector<RunManifest> load_manifests(const std::filesystem::path& workdir);

// Deterministic identity of a stage execution.
std::string compute_run_id(const std::string& stage,
                           const std::map<std::string, std::string>& inputs,
                           const std::string& config_json);

// Walks the manifest chain backwards from an artifact hash; returns the run
// ids from the producing stage back to the roots.
std::vector<std::string> provenance_chain(const std::filesystem::path& workdir,
                                          const std::string& artifact_hash);

}  // namespace dforge::pipeline
