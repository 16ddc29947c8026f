#include "dforge/distill/plan.hpp"

#include <fstream>

#include <json.hpp>

#include "dforge/common/error.hpp"

namespace dforge::distill {

using json = nlohmann::json;

void LossRecipe::validate() const {
  if (mlm_ce < 0.0 || soft_ce < 0.0)
    throw ValidationError("loss weights must be non-negative");
  const double hidden_weight = hidden.has_value() ? hidden->weight : 0.0;
  if (hidden_weight < 0.0)
    throw ValidationError("hidden-match weight must be non-negative");
  if (mlm_ce == 0.0 && soft_ce == 0.0 && hidden_weight == 0.0)
    throw ValidationError("loss recipe has no positive weight");
  if (!(temperature > 0.0)) throw ValidationError("temperature must be positive");
  if (hidden.has_value() && hidden->layer_map.empty())
    throw ConfigError("hidden matching requires a layer map");
}

void DistillPlan::validate() const {
  student.validate();
  train.validate();
  if (segments.empty()) throw ValidationError("distillation plan has no segments");
  for (const auto& segment : segments) {
    if (segment.updates < 0)
      throw ValidationError("segment update budget must be >= 0");
    segment.recipe.validate();
  }
}

namespace {

json recipe_to_json(const LossRecipe& recipe) {
  json doc{{"mlm_ce", recipe.mlm_ce},
           {"soft_ce", recipe.soft_ce},
           {"temperature", recipe.temperature},
           {"soft_all_positions", recipe.soft_all_positions}};
  if (recipe.hidden.has_value()) {
    json map = json::array();
    for (const auto& [s, t] : recipe.hidden->layer_map)
      map.push_back(json::array({s, t}));
    doc["hidden"] = {{"layer_map", map}, {"weight", recipe.hidden->weight}};
  }
  return doc;
}

LossRecipe recipe_from_json(const json& doc) {
  LossRecipe recipe;
  recipe.mlm_ce = doc.value("mlm_ce", 1.0);
  recipe.soft_ce = doc.value("soft_ce", 1.0);
  recipe.temperature = doc.value("temperature", 1.0);
  recipe.soft_all_positions = doc.value("soft_all_positions", false);
  if (doc.contains("hidden")) {
    HiddenMatchSpec spec;
    spec.weight = doc["hidden"].value("weight", 1.0);
    for (const auto& pair : doc["hidden"].at("layer_map"))
      spec.layer_map.emplace_back(pair.at(0).get<int>(), pair.at(1).get<int>());
    recipe.hidden = std::move(spec);
  }
  return recipe;
}

}  // namespace

void DistillPlan::save(const std::filesystem::path& path) const {
  json doc;
  doc["student"] = json::parse(student.to_json_string());
  doc["train"] = json::parse(train.to_json_string());
  doc["seed"] = seed;
  doc["segments"] = json::array();
  for (const auto& segment : segments) {
    doc["segments"].push_back({{"teacher_checkpoint", segment.teacher_checkpoint.string()},
                               {"corpus_file", segment.corpus_file.string()},
                               {"updates", segment.updates},
                               {"recipe", recipe_to_json(segment.recipe)}});
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot write plan " + path.string());
  out << doc.dump(2) << '\n';
}

DistillPlan DistillPlan::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open plan " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  DistillPlan plan;
  try {
    plan.student = enc::EncoderConfig::from_json_string(doc.at("student").dump());
    plan.train = pretrain::TrainConfig::from_json_string(doc.at("train").dump());
    plan.seed = doc.value("seed", 1);
    for (const auto& item : doc.at("segments")) {
      DistillSegment segment;
      segment.teacher_checkpoint =
          item.at("teacher_checkpoint").get<std::string>();
      segment.corpus_file = item.at("corpus_file").get<std::string>();
      segment.updates = item.at("updates").get<std::int64_t>();
      if (item.contains("recipe"))
        segment.recipe = recipe_from_json(item["recipe"]);
      plan.segments.push_back(std::move(segment));
    }
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  plan.validate();
  return plan;
}

}  // namespace dforge::distill
