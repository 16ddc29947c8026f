#include "dforge/corpus/io.hpp"

#include "../internal/jsonl.hpp"

namespace dforge::corpus {

using internal::json;

std::vector<TextExample> read_corpus(const std::filesystem::path& path,
                                     const std::set<std::string>& languages) {
  std::vector<TextExample> examples;
  internal::for_each_jsonl(path, [&](const json& record, std::size_t lineno) {
    TextExample example;
    try {
      example.text = record.at("text").get<std::string>();
      example.language = record.at("language").get<std::string>();
      if (record.contains("form"))
        example.form = form_from_string(record["form"].get<std::string>());
      if (record.contains("source"))
        example.source = record["source"].get<std::string>();
      if (record.contains("count"))
        example.count = record["count"].get<std::uint64_t>();
    } catch (const json::exception& e) {
      throw ValidationError(path.string() + ":" + std::to_string(lineno) +
                            ": " + e.what());
    }
    validate_example(example, languages);
    examples.push_back(std::move(example));
  });
  return examples;
}

void write_corpus(const std::filesystem::path& path,
                  const std::vector<TextExample>& examples) {
  internal::JsonlWriter out(path);
  for (const auto& example : examples) {
    json record = {{"text", example.text},
                   {"language", example.language},
                   {"form", to_string(example.form)},
                   {"source", example.source},
                   {"count", example.count}};
    out.write(record);
  }
  out.close();
}

std::vector<NluExample> read_nlu(const std::filesystem::path& path) {
  std::vector<NluExample> examples;
  internal::for_each_jsonl(path, [&](const json& record, std::size_t lineno) {
    NluExample example;
    try {
      example.utterance = record.at("utterance").get<std::string>();
      example.intent = record.at("intent").get<std::string>();
      example.slots = record.at("slots").get<std::vector<std::string>>();
      if (record.contains("language"))
        example.language = record["language"].get<std::string>();
      if (record.contains("domain"))
        example.domain = record["domain"].get<std::string>();
    } catch (const json::exception& e) {
      throw ValidationError(path.string() + ":" + std::to_string(lineno) +
                            ": " + e.what());
    }
    validate_nlu_example(example);
    examples.push_back(std::move(example));
  });
  return examples;
}

void write_nlu(const std::filesystem::path& path,
               const std::vector<NluExample>& examples) {
  internal::JsonlWriter out(path);
  for (const auto& example : examples) {
    json record = {{"utterance", example.utterance},
                   {"intent", example.intent},
                   {"slots", example.slots},
                   {"language", example.language}};
    if (!example.domain.empty()) record["domain"] = example.domain;
    out.write(record);
  }
  out.close();
}

}  // namespace dforge::corpus
