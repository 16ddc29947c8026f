#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dforge/corpus/types.hpp"

namespace dforge::corpus {

// Template generator for general written-form text (the pretraining-corpus
// stand-in). Templates carry capitalization, punctuation, digits, and clock
// times so the spoken-form transform has real work to do.
struct TextGrammar {
  std::string language = "en";
  std::vector<std::string> templates;
  std::map<std::string, std::vector<std::string>> pools;
};

// Built-in grammar with a compact (~200 word) lexicon.
TextGrammar general_text_grammar();

std::vector<TextExample> generate_text(const TextGrammar& grammar, std::size_t n,
                                       std::uint64_t seed,
                                       const std::string& source = "synthetic-text");

}  // namespace dforge::corpus
