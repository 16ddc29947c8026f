#pragma once

#include <functional>
#include <string>
#include <string_view>

#include "dforge/corpus/types.hpp"

namespace dforge::corpus {

// Converts written-form text to canonical spoken form. English rules ship
// with the library: lowercasing, sentence-punctuation removal (intra-word
// apostrophes survive), cardinal verbalization of 0-9999, per-digit reading
// of longer digit strings, and hh:mm(AM|PM) clock times rendered as e.g.
// "seven thirty a. m.". The transform is idempotent.
std::string spoken_form_transform(std::string_view text, const std::string& language);

bool spoken_form_registered(const std::string& language);

using SpokenFormFn = std::function<std::string(std::string_view)>;
void register_spoken_form(const std::string& language, SpokenFormFn fn);

// English cardinal for 0..9999 ("911" -> "nine hundred eleven").
std::string english_cardinal(unsigned value);

TextExample spoken_form_transform(const TextExample& example);

}  // namespace dforge::corpus
