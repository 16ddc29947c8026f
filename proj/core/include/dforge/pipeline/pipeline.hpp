#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "dforge/pipeline/manifest.hpp"

namespace dforge::pipeline {

// Ordered stage list; each stage carries its configuration as JSON. The
// shipped "toy" preset runs the full chain: data -> tokenizer ->
// stage2-corpus -> stage1 -> stage2 -> distill-intermediate (teacher switch)
// -> interlude -> distill-final -> finetune -> evaluate.
struct PipelineRecipe {
  std::string name = "toy";
  std::uint64_t seed = 7;
  std::vector<std::pair<std::string, std::string>> stages;  // (name, config json)

  static PipelineRecipe toy_preset(std::uint64_t seed = 7);
  void save(const std::filesystem::path& path) const;
  static PipelineRecipe load(const std::filesystem::path& path);
};

struct PipelineSummary {
  int stages_run = 0;
  int stages_skipped = 0;
  std::int64_t steps_executed = 0;
  std::vector<std::string> run_ids;
};

// Executes stages in order under a workdir lock. Completed stages (same run
// id, outputs present with matching hashes) are skipped; outputs present
// with different hashes raise a stale-artifact error. `max_stages` >= 0
// stops after that many stages (interruption hook for resume tests).
PipelineSummary run_pipeline(const PipelineRecipe& recipe,
                             const std::filesystem::path& workdir,
                             int max_stages = -1);

struct ReportPaths {
  std::filesystem::path consolidated_json;
  std::filesystem::path table_tsv;
  std::filesystem::path deltas_tsv;
};

// Aggregates every EvalReport under workdir/reports into one table and a
// relative-delta table against the named baseline report (negative delta =
// reduced error / improvement for error-style metrics).
ReportPaths report(const std::filesystem::path& workdir,
                   const std::string& baseline = "stage1-teacher");

}  // namespace dforge::pipeline
