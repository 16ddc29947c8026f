#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "dforge/common/error.hpp"

namespace dforge::corpus {

enum class Form { spoken, written };

std::string to_string(Form form);
Form form_from_string(const std::string& text);

// One corpus record. `count` is the number of observed repetitions; square
// root deduplication rewrites it, and sampling materializes it.
struct TextExample {
  std::string text;
  std::string language;  // ISO 639-1
  Form form = Form::written;
  std::string source;
  std::uint64_t count = 1;
};

// Languages accepted by default when validating corpus files: ar, de, en,
// es, fr, hi, it, ja, mr, pt, ta, te.
const std::set<std::string>& default_language_set();

void validate_example(const TextExample& example,
                      const std::set<std::string>& languages = default_language_set());

// Exponentiated-and-renormalized sampling distribution over languages.
struct LanguageDistribution {
  double alpha = 0.5;
  // Ordered so iteration (and categorical sampling) is deterministic.
  std::vector<std::pair<std::string, double>> probs;

  double prob(const std::string& language) const;
};

struct PackedSequence {
  std::string text;
  std::string language;
  std::size_t word_count = 0;
  std::vector<std::size_t> constituent_ids;  // indices into the input stream
};

// Labeled utterance for intent classification + slot filling. `slots` holds
// one BIO tag per whitespace token of `utterance`.
struct NluExample {
  std::string utterance;
  std::string intent;
  std::vector<std::string> slots;
  std::string language = "en";
  std::string domain;
};

// Checks tag/token alignment and BIO well-formedness (no I-X without a
// preceding B-X or I-X of the same type).
void validate_nlu_example(const NluExample& example);

std::size_t whitespace_word_count(const std::string& text);
std::vector<std::string> whitespace_words(const std::string& text);

}  // namespace dforge::corpus
