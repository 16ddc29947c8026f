#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dforge/corpus/types.hpp"

namespace dforge::corpus {

// Template grammar for synthetic intent/slot data. Templates are literal
// words with {slot} placeholders; slot values may be multiword (they expand
// to B-slot I-slot... tag runs).
struct IntentSpec {
  std::string name;
  std::vector<std::string> templates;
};

struct NluGrammar {
  std::string language = "en";
  std::string domain;
  std::vector<IntentSpec> intents;
  std::map<std::string, std::vector<std::string>> slots;
};

void validate_grammar(const NluGrammar& grammar);

// Upper bound on the number of distinct utterances the grammar can produce.
std::uint64_t grammar_capacity(const NluGrammar& grammar);

std::size_t grammar_intent_count(const NluGrammar& grammar);
std::size_t grammar_slot_count(const NluGrammar& grammar);

// Distinct words used anywhere in the grammar (templates plus lexicons).
std::size_t grammar_lexicon_size(const NluGrammar& grammar);

NluGrammar load_grammar(const std::filesystem::path& path);
void save_grammar(const std::filesystem::path& path, const NluGrammar& grammar);

// Built-in grammars:
//   "domain1-like"  16 intents, 98 slot types (assistant domain)
// Unknown names raise ConfigError.
NluGrammar grammar_preset(const std::string& name);

struct NluSplits {
  std::vector<NluExample> train;
  std::vector<NluExample> val;
  std::vector<NluExample> test;
};

// Splits are disjoint at the utterance-string level and the val/test label
// sets are subsets of the train label sets. Fixed seeds reproduce byte-
// identical output.
NluSplits generate_synthetic_nlu(const NluGrammar& grammar, std::size_t n_train,
                                 std::size_t n_val, std::size_t n_test,
                                 std::uint64_t seed);

// Unlabeled utterance stream sampled with replacement; duplicates are
// aggregated into repetition counts (input for square-root deduplication).
std::vector<TextExample> sample_utterances(const NluGrammar& grammar,
                                           std::size_t n_draws,
                                           std::uint64_t seed);

}  // namespace dforge::corpus
