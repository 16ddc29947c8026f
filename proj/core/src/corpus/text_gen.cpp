#include "dforge/corpus/text_gen.hpp"

#include <sstream>

#include "dforge/common/rng.hpp"

namespace dforge::corpus {

TextGrammar general_text_grammar() {
  TextGrammar grammar;
  grammar.language = "en";
  grammar.pools = {
      {"noun",
       {"fox", "market", "garden", "river", "mountain", "library", "train",
        "teacher", "doctor", "farmer", "child", "dog", "cat", "bird", "boat",
        "bridge", "castle", "forest", "village", "road"}},
      {"adj",
       {"red", "old", "quiet", "bright", "small", "large", "happy", "cold",
        "warm", "green", "busy", "empty"}},
      {"verb",
       {"walked", "returned", "traveled", "moved", "hurried", "wandered",
        "marched", "drifted"}},
      {"place",
       {"station", "harbor", "valley", "square", "museum", "school", "farm",
        "tower"}},
      {"clock",
       {"7:30AM", "9:05PM", "12:15PM", "6:45AM", "11:20AM", "8:00PM"}},
      {"count", {"3", "7", "12", "25", "42", "100", "911", "1250"}},
      {"day", {"Monday", "Tuesday", "Friday", "Sunday"}},
      {"name", {"Maria", "Peter", "Ana", "Omar"}},
      {"thing", {"apples", "maps", "letters", "tickets", "lanterns"}},
  };
  grammar.templates = {
      "The {adj} {noun} {verb} to the {place} at {clock}.",
      "{name} bought {count} {thing} at the {place} on {day}.",
      "Did the {noun} stay near the {place} on {day}?",
      "A {adj} {noun} and a {adj} {noun} waited by the {place}.",
      "{name} said the {noun} was {adj}, but nobody listened.",
      "On {day}, {count} people visited the {place}.",
      "Call {name} before {clock}; the {noun} will be ready.",
      "The {noun} near the {place} looked {adj} in the {adj} light.",
      "{name} counted {count} {thing} and {verb} home.",
      "After the {noun} {verb} past the {place}, the {adj} {noun} followed.",
      "Is the {place} open at {clock} on {day}?",
      "{name} left {count} {thing} for the {adj} {noun}.",
  };
  return grammar;
}

std::vector<TextExample> generate_text(const TextGrammar& grammar, std::size_t n,
                                       std::uint64_t seed,
                                       const std::string& source) {
  if (grammar.templates.empty())
    throw ValidationError("text grammar has no templates");
  Rng rng(mix_seed(seed, "text-gen"));
  std::vector<TextExample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::string& tpl = grammar.templates[rng.below(grammar.templates.size())];
    std::ostringstream text;
    std::size_t pos = 0;
    while (pos < tpl.size()) {
      const std::size_t open = tpl.find('{', pos);
      if (open == std::string::npos) {
        text << tpl.substr(pos);
        break;
      }
      const std::size_t close = tpl.find('}', open);
      if (close == std::string::npos)
        throw ValidationError("unbalanced '{' in text template: " + tpl);
      text << tpl.substr(pos, open - pos);
      const std::string pool_name = tpl.substr(open + 1, close - open - 1);
      const auto it = grammar.pools.find(pool_name);
      if (it == grammar.pools.end() || it->second.empty())
        throw ValidationError("text template references unknown pool '" +
                              pool_name + "'");
      text << it->second[rng.below(it->second.size())];
      pos = close + 1;
    }
    TextExample example;
    example.text = text.str();
    example.language = grammar.language;
    example.form = Form::written;
    example.source = source;
    out.push_back(std::move(example));
  }
  return out;
}

}  // namespace dforge::corpus
