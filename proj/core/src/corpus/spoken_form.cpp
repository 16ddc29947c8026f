#include "dforge/corpus/spoken_form.hpp"

#include <array>
#include <map>
#include <sstream>

namespace dforge::corpus {

namespace {

const std::array<std::string_view, 20> kSmall = {
    "zero",    "one",     "two",       "three",    "four",
    "five",    "six",     "seven",     "eight",    "nine",
    "ten",     "eleven",  "twelve",    "thirteen", "fourteen",
    "fifteen", "sixteen", "seventeen", "eighteen", "nineteen"};

const std::array<std::string_view, 10> kTens = {
    "",      "",      "twenty",  "thirty", "forty",
    "fifty", "sixty", "seventy", "eighty", "ninety"};

std::string below_hundred(unsigned value) {
  if (value < 20) return std::string(kSmall[value]);
  std::string out(kTens[value / 10]);
  if (value % 10 != 0) {
    out.push_back(' ');
    out += kSmall[value % 10];
  }
  return out;
}

std::string below_thousand(unsigned value) {
  if (value < 100) return below_hundred(value);
  std::string out = std::string(kSmall[value / 100]) + " hundred";
  if (value % 100 != 0) {
    out.push_back(' ');
    out += below_hundred(value % 100);
  }
  return out;
}

bool is_ascii_digit(char c) { return c >= '0' && c <= '9'; }
bool is_ascii_alpha(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
}

std::string digits_spelled(std::string_view digits) {
  std::string out;
  for (const char c : digits) {
    if (!out.empty()) out.push_back(' ');
    out += kSmall[static_cast<unsigned>(c - '0')];
  }
  return out;
}

// "7:30am" -> "seven thirty a. m.", minutes 01-09 spoken as "oh five".
std::string render_clock(unsigned hour, unsigned minute, bool am) {
  std::string out = english_cardinal(hour);
  if (minute != 0) {
    out.push_back(' ');
    if (minute < 10)
      out += "oh " + english_cardinal(minute);
    else
      out += english_cardinal(minute);
  }
  out += am ? " a. m." : " p. m.";
  return out;
}

// Expands hh:mm(AM|PM) occurrences in already-lowercased text.
std::string expand_clock_times(const std::string& text) {
  std::string out;
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    // A candidate starts on a digit not preceded by a digit or letter.
    const bool boundary =
        i == 0 || (!is_ascii_digit(text[i - 1]) && !is_ascii_alpha(text[i - 1]));
    if (boundary && is_ascii_digit(text[i])) {
      std::size_t j = i;
      unsigned hour = 0;
      std::size_t hour_digits = 0;
      while (j < n && is_ascii_digit(text[j]) && hour_digits < 2) {
        hour = hour * 10 + static_cast<unsigned>(text[j] - '0');
        ++j;
        ++hour_digits;
      }
      if (j < n && text[j] == ':' && j + 2 < n && is_ascii_digit(text[j + 1]) &&
          is_ascii_digit(text[j + 2]) && hour >= 1 && hour <= 12) {
        const unsigned minute = static_cast<unsigned>(text[j + 1] - '0') * 10 +
                                static_cast<unsigned>(text[j + 2] - '0');
        std::size_t k = j + 3;
        while (k < n && text[k] == ' ') ++k;
        if (minute <= 59 && k + 1 < n && (text[k] == 'a' || text[k] == 'p') &&
            text[k + 1] == 'm' && (k + 2 >= n || !is_ascii_alpha(text[k + 2]))) {
          out += render_clock(hour, minute, text[k] == 'a');
          i = k + 2;
          continue;
        }
      }
    }
    out.push_back(text[i]);
    ++i;
  }
  return out;
}

bool is_sentence_punct(char c) {
  switch (c) {
    case '.':
    case ',':
    case '?':
    case '!':
    case ':':
    case ';':
    case '"':
    case '(':
    case ')':
      return true;
    default:
      return false;
  }
}

// Single lowercase letter followed by a period, e.g. "a." in "a. m.".
// These survive punctuation removal so the transform stays idempotent.
bool is_spoken_initialism(std::string_view token) {
  return token.size() == 2 && token[1] == '.' && token[0] >= 'a' &&
         token[0] <= 'z';
}

std::string strip_token_punct(std::string_view token) {
  if (is_spoken_initialism(token)) return std::string(token);
  std::string out;
  for (std::size_t i = 0; i < token.size(); ++i) {
    const char c = token[i];
    if (c == '\'') {
      // Intra-word apostrophes only.
      const bool prev_alpha = !out.empty() && is_ascii_alpha(out.back());
      const bool next_alpha = i + 1 < token.size() && is_ascii_alpha(token[i + 1]);
      if (prev_alpha && next_alpha) out.push_back(c);
      continue;
    }
    if (c == '.') continue;
    out.push_back(c);
  }
  return out;
}

std::string verbalize_token(std::string_view token) {
  if (token.empty()) return std::string(token);
  for (const char c : token)
    if (!is_ascii_digit(c)) return std::string(token);
  // Pure digit string: long or zero-padded strings read per digit,
  // everything else (0..9999) as a cardinal.
  if (token.size() >= 5 || (token.size() > 1 && token[0] == '0'))
    return digits_spelled(token);
  return english_cardinal(static_cast<unsigned>(std::stoul(std::string(token))));
}

std::string english_spoken_form(std::string_view input) {
  std::string text(input);
  for (auto& c : text)
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');

  text = expand_clock_times(text);

  // Replace sentence punctuation (periods handled token-wise below) with
  // spaces, then normalize tokens.
  std::string spaced;
  spaced.reserve(text.size());
  for (const char c : text)
    spaced.push_back(is_sentence_punct(c) && c != '.' ? ' ' : c);

  std::istringstream stream(spaced);
  std::string token;
  std::string out;
  while (stream >> token) {
    std::string cleaned = strip_token_punct(token);
    if (cleaned.empty()) continue;
    cleaned = verbalize_token(cleaned);
    if (!out.empty()) out.push_back(' ');
    out += cleaned;
  }
  return out;
}

std::map<std::string, SpokenFormFn>& registry() {
  static std::map<std::string, SpokenFormFn> rules = {
      {"en", english_spoken_form}};
  return rules;
}

}  // namespace

std::string english_cardinal(unsigned value) {
  if (value > 9999) throw ValidationError("english_cardinal covers 0..9999");
  if (value < 1000) return below_thousand(value);
  std::string out = std::string(kSmall[value / 1000]) + " thousand";
  if (value % 1000 != 0) {
    out.push_back(' ');
    out += below_thousand(value % 1000);
  }
  return out;
}

bool spoken_form_registered(const std::string& language) {
  return registry().contains(language);
}

void register_spoken_form(const std::string& language, SpokenFormFn fn) {
  registry()[language] = std::move(fn);
}

std::string spoken_form_transform(std::string_view text, const std::string& language) {
  const auto it = registry().find(language);
  if (it == registry().end())
    throw ConfigError("no spoken-form rules registered for language '" +
                      language + "'");
  return it->second(text);
}

TextExample spoken_form_transform(const TextExample& example) {
  TextExample out = example;
  out.text = spoken_form_transform(example.text, example.language);
  out.form = Form::spoken;
  return out;
}

}  // namespace dforge::corpus
