#include "dforge/corpus/types.hpp"

#include <sstream>

namespace dforge::corpus {

std::string to_string(Form form) {
  return form == Form::spoken ? "spoken" : "written";
}

Form form_from_string(const std::string& text) {
  if (text == "spoken") return Form::spoken;
  if (text == "written") return Form::written;
  throw ValidationError("unknown form '" + text + "' (expected spoken|written)");
}

const std::set<std::string>& default_language_set() {
  static const std::set<std::string> langs = {"ar", "de", "en", "es", "fr", "hi",
                                              "it", "ja", "mr", "pt", "ta", "te"};
  return langs;
}

void validate_example(const TextExample& example,
                      const std::set<std::string>& languages) {
  if (example.text.empty()) throw ValidationError("corpus record has empty text");
  if (example.count < 1) throw ValidationError("corpus record has count < 1");
  if (!languages.contains(example.language))
    throw ValidationError("language '" + example.language +
                          "' is not in the configured language set");
}

double LanguageDistribution::prob(const std::string& language) const {
  for (const auto& [lang, q] : probs)
    if (lang == language) return q;
  return 0.0;
}

std::vector<std::string> whitespace_words(const std::string& text) {
  std::vector<std::string> words;
  std::istringstream stream(text);
  std::string word;
  while (stream >> word) words.push_back(word);
  return words;
}

std::size_t whitespace_word_count(const std::string& text) {
  std::istringstream stream(text);
  std::string word;
  std::size_t n = 0;
  while (stream >> word) ++n;
  return n;
}

void validate_nlu_example(const NluExample& example) {
  const std::size_t n_tokens = whitespace_word_count(example.utterance);
  if (example.slots.size() != n_tokens)
    throw ValidationError("slot tags (" + std::to_string(example.slots.size()) +
                          ") do not align with utterance tokens (" +
                          std::to_string(n_tokens) + ")");
  std::string prev = "O";
  for (const auto& tag : example.slots) {
    if (tag == "O") {
      prev = tag;
      continue;
    }
    if (tag.size() < 3 || (tag[0] != 'B' && tag[0] != 'I') || tag[1] != '-')
      throw ValidationError("malformed BIO tag '" + tag + "'");
    if (tag[0] == 'I') {
      const std::string type = tag.substr(2);
      const bool continues = prev.size() >= 3 && prev.substr(2) == type &&
                             (prev[0] == 'B' || prev[0] == 'I');
      if (!continues)
        throw ValidationError("I-" + type + " without preceding B-" + type);
    }
    prev = tag;
  }
}

}  // namespace dforge::corpus
