#include "dforge/corpus/nlu_gen.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "dforge/common/rng.hpp"
#include "../internal/jsonl.hpp"

namespace dforge::corpus {

namespace {

struct TemplatePart {
  bool is_slot = false;
  std::string text;  // literal word or slot name
};

std::vector<TemplatePart> parse_template(const std::string& tpl) {
  std::vector<TemplatePart> parts;
  for (const auto& word : whitespace_words(tpl)) {
    if (word.size() >= 3 && word.front() == '{' && word.back() == '}') {
      parts.push_back({true, word.substr(1, word.size() - 2)});
    } else {
      parts.push_back({false, word});
    }
  }
  return parts;
}

std::vector<std::string> template_slots(const std::string& tpl) {
  std::vector<std::string> slots;
  for (const auto& part : parse_template(tpl))
    if (part.is_slot) slots.push_back(part.text);
  return slots;
}

struct Generated {
  std::string utterance;
  std::vector<std::string> tags;
};

Generated instantiate(const std::vector<TemplatePart>& parts,
                      const NluGrammar& grammar, Rng& rng) {
  Generated out;
  std::ostringstream text;
  bool first = true;
  for (const auto& part : parts) {
    if (!part.is_slot) {
      if (!first) text << ' ';
      text << part.text;
      out.tags.push_back("O");
      first = false;
      continue;
    }
    const auto& values = grammar.slots.at(part.text);
    const std::string& value = values[rng.below(values.size())];
    bool head = true;
    for (const auto& word : whitespace_words(value)) {
      if (!first) text << ' ';
      text << word;
      out.tags.push_back((head ? "B-" : "I-") + part.text);
      head = false;
      first = false;
    }
  }
  out.utterance = text.str();
  return out;
}

}  // namespace

void validate_grammar(const NluGrammar& grammar) {
  if (grammar.intents.size() < 2)
    throw ValidationError("grammar needs at least 2 intents");
  if (grammar.slots.size() < 2)
    throw ValidationError("grammar needs at least 2 slot types");
  std::set<std::string> names;
  for (const auto& intent : grammar.intents) {
    if (intent.name.empty()) throw ValidationError("intent with empty name");
    if (!names.insert(intent.name).second)
      throw ValidationError("duplicate intent '" + intent.name + "'");
    if (intent.templates.empty())
      throw ValidationError("intent '" + intent.name + "' has no templates");
    for (const auto& tpl : intent.templates) {
      for (const auto& slot : template_slots(tpl)) {
        const auto it = grammar.slots.find(slot);
        if (it == grammar.slots.end())
          throw GenerationError("template references undefined slot '" + slot +
                                "' in intent '" + intent.name + "'");
        if (it->second.empty())
          throw GenerationError("slot '" + slot + "' has an empty lexicon");
      }
    }
  }
  for (const auto& [slot, values] : grammar.slots)
    if (values.empty())
      throw GenerationError("slot '" + slot + "' has an empty lexicon");
}

std::uint64_t grammar_capacity(const NluGrammar& grammar) {
  std::uint64_t total = 0;
  for (const auto& intent : grammar.intents) {
    for (const auto& tpl : intent.templates) {
      std::uint64_t combos = 1;
      for (const auto& slot : template_slots(tpl)) {
        const auto it = grammar.slots.find(slot);
        combos *= it == grammar.slots.end() ? 0 : it->second.size();
      }
      total += combos;
    }
  }
  return total;
}

std::size_t grammar_intent_count(const NluGrammar& grammar) {
  return grammar.intents.size();
}

std::size_t grammar_slot_count(const NluGrammar& grammar) {
  return grammar.slots.size();
}

std::size_t grammar_lexicon_size(const NluGrammar& grammar) {
  std::set<std::string> words;
  for (const auto& intent : grammar.intents)
    for (const auto& tpl : intent.templates)
      for (const auto& part : parse_template(tpl))
        if (!part.is_slot) words.insert(part.text);
  for (const auto& [slot, values] : grammar.slots)
    for (const auto& value : values)
      for (const auto& word : whitespace_words(value)) words.insert(word);
  return words.size();
}

NluGrammar load_grammar(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open grammar " + path.string());
  internal::json doc;
  try {
    in >> doc;
  } catch (const internal::json::parse_error& e) {
    throw ValidationError("grammar " + path.string() + ": " + e.what());
  }
  NluGrammar grammar;
  try {
    grammar.language = doc.value("language", "en");
    grammar.domain = doc.value("domain", "");
    for (const auto& item : doc.at("intents")) {
      IntentSpec intent;
      intent.name = item.at("name").get<std::string>();
      intent.templates = item.at("templates").get<std::vector<std::string>>();
      grammar.intents.push_back(std::move(intent));
    }
    for (const auto& [slot, values] : doc.at("slots").items())
      grammar.slots[slot] = values.get<std::vector<std::string>>();
  } catch (const internal::json::exception& e) {
    throw ValidationError("grammar " + path.string() + ": " + e.what());
  }
  validate_grammar(grammar);
  return grammar;
}

void save_grammar(const std::filesystem::path& path, const NluGrammar& grammar) {
  internal::json doc;
  doc["language"] = grammar.language;
  if (!grammar.domain.empty()) doc["domain"] = grammar.domain;
  doc["intents"] = internal::json::array();
  for (const auto& intent : grammar.intents)
    doc["intents"].push_back(
        {{"name", intent.name}, {"templates", intent.templates}});
  doc["slots"] = internal::json::object();
  for (const auto& [slot, values] : grammar.slots) doc["slots"][slot] = values;
  std::ofstream out(path);
  if (!out) throw IoError("cannot write grammar " + path.string());
  out << doc.dump(2) << '\n';
}

NluSplits generate_synthetic_nlu(const NluGrammar& grammar, std::size_t n_train,
                                 std::size_t n_val, std::size_t n_test,
                                 std::uint64_t seed) {
  validate_grammar(grammar);
  const std::size_t requested = n_train + n_val + n_test;
  if (requested > grammar_capacity(grammar))
    throw GenerationError("grammar capacity " +
                          std::to_string(grammar_capacity(grammar)) +
                          " cannot supply " + std::to_string(requested) +
                          " distinct utterances");
  if (n_train == 0 && requested > 0)
    throw GenerationError(
        "val/test labels must be covered by train; n_train=0 requires empty "
        "val/test");

  // Pre-parse templates, flattened over intents.
  struct Entry {
    const IntentSpec* intent;
    std::vector<TemplatePart> parts;
  };
  std::vector<Entry> entries;
  for (const auto& intent : grammar.intents)
    for (const auto& tpl : intent.templates)
      entries.push_back({&intent, parse_template(tpl)});

  Rng rng(mix_seed(seed, "nlu-gen"));
  std::set<std::string> seen;

  auto draw = [&](std::size_t n, const std::set<std::string>* intent_filter,
                  const std::set<std::string>* slot_filter) {
    std::vector<NluExample> out;
    std::uint64_t attempts = 0;
    const std::uint64_t max_attempts = 1000 + 400 * static_cast<std::uint64_t>(n);
    while (out.size() < n) {
      if (++attempts > max_attempts)
        throw GenerationError("could not draw " + std::to_string(n) +
                              " distinct utterances (grammar too small for "
                              "the requested split sizes)");
      const Entry& entry = entries[rng.below(entries.size())];
      if (intent_filter != nullptr && !intent_filter->contains(entry.intent->name))
        continue;
      Generated gen = instantiate(entry.parts, grammar, rng);
      if (slot_filter != nullptr) {
        bool covered = true;
        for (const auto& tag : gen.tags)
          if (tag != "O" && !slot_filter->contains(tag.substr(2))) covered = false;
        if (!covered) continue;
      }
      if (!seen.insert(gen.utterance).second) continue;
      NluExample example;
      example.utterance = std::move(gen.utterance);
      example.intent = entry.intent->name;
      example.slots = std::move(gen.tags);
      example.language = grammar.language;
      example.domain = grammar.domain;
      out.push_back(std::move(example));
    }
    return out;
  };

  NluSplits splits;
  splits.train = draw(n_train, nullptr, nullptr);

  std::set<std::string> train_intents;
  std::set<std::string> train_slots;
  for (const auto& example : splits.train) {
    train_intents.insert(example.intent);
    for (const auto& tag : example.slots)
      if (tag != "O") train_slots.insert(tag.substr(2));
  }
  splits.val = draw(n_val, &train_intents, &train_slots);
  splits.test = draw(n_test, &train_intents, &train_slots);
  return splits;
}

std::vector<TextExample> sample_utterances(const NluGrammar& grammar,
                                           std::size_t n_draws,
                                           std::uint64_t seed) {
  validate_grammar(grammar);
  std::vector<std::vector<TemplatePart>> all_parts;
  for (const auto& intent : grammar.intents)
    for (const auto& tpl : intent.templates)
      all_parts.push_back(parse_template(tpl));

  Rng rng(mix_seed(seed, "utterances"));
  std::map<std::string, std::uint64_t> counts;
  std::vector<std::string> order;  // first-seen order
  for (std::size_t i = 0; i < n_draws; ++i) {
    Generated gen =
        instantiate(all_parts[rng.below(all_parts.size())], grammar, rng);
    auto [it, inserted] = counts.emplace(gen.utterance, 0);
    if (inserted) order.push_back(it->first);
    ++it->second;
  }

  std::vector<TextExample> out;
  out.reserve(order.size());
  for (const auto& text : order) {
    TextExample example;
    example.text = text;
    example.language = grammar.language;
    example.form = Form::spoken;
    example.source = grammar.domain.empty() ? "synthetic-nlu" : grammar.domain;
    example.count = counts[text];
    out.push_back(std::move(example));
  }
  return out;
}

}  // namespace dforge::corpus
