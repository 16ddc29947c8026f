#pragma once

#include <filesystem>
#include <vector>

#include "dforge/corpus/types.hpp"

namespace dforge::corpus {

// Corpus interchange format: UTF-8, one JSON object per line with keys
// text/language/form/source/count. Missing form defaults to written,
// missing count to 1.
std::vector<TextExample> read_corpus(const std::filesystem::path& path,
                                     const std::set<std::string>& languages =
                                         default_language_set());
void write_corpus(const std::filesystem::path& path,
                  const std::vector<TextExample>& examples);

// NLU dataset format: one JSON object per line with keys utterance/intent/
// slots (space-aligned tag list) and optional language/domain.
std::vector<NluExample> read_nlu(const std::filesystem::path& path);
void write_nlu(const std::filesystem::path& path,
               const std::vector<NluExample>& examples);

}  // namespace dforge::corpus
