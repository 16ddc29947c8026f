#include "dforge/corpus/ops.hpp"

#include <algorithm>
#include <cmath>

#include "dforge/common/rng.hpp"
#include "dforge/tokenizer/model.hpp"

namespace dforge::corpus {

LanguageDistribution compute_language_distribution(
    const std::map<std::string, std::uint64_t>& counts, double alpha) {
  if (counts.empty())
    throw ConfigError("language distribution requires a nonempty count map");
  if (!(alpha > 0.0) || alpha > 1.0)
    throw ConfigError("alpha must lie in (0, 1]");

  double total = 0.0;
  for (const auto& [lang, n] : counts) {
    if (n == 0)
      throw ValidationError("language '" + lang + "' has a nonpositive count");
    total += static_cast<double>(n);
  }

  LanguageDistribution dist;
  dist.alpha = alpha;
  double norm = 0.0;
  for (const auto& [lang, n] : counts) {
    const double p = static_cast<double>(n) / total;
    const double q = std::pow(p, alpha);
    dist.probs.emplace_back(lang, q);
    norm += q;
  }
  for (auto& [lang, q] : dist.probs) q /= norm;
  return dist;
}

namespace {

// Cyclic iterator over a seeded shuffle of one language's records, with each
// record materialized `count` times before shuffling.
class StreamCycle {
 public:
  StreamCycle(const std::vector<TextExample>& examples, std::uint64_t seed)
      : examples_(examples) {
    for (std::size_t i = 0; i < examples.size(); ++i)
      for (std::uint64_t c = 0; c < examples[i].count; ++c) order_.push_back(i);
    Rng rng(seed);
    rng.shuffle(order_);
  }

  bool empty() const { return order_.empty(); }

  const TextExample& next() {
    const TextExample& example = examples_[order_[cursor_]];
    cursor_ = (cursor_ + 1) % order_.size();
    return example;
  }

 private:
  const std::vector<TextExample>& examples_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

}  // namespace

std::vector<TextExample> sample_corpus(
    const std::map<std::string, std::vector<TextExample>>& streams,
    const LanguageDistribution& dist, std::size_t size, std::uint64_t seed) {
  if (size == 0) throw ValidationError("sample size must be positive");

  std::vector<StreamCycle> cycles;
  std::vector<double> probs;
  cycles.reserve(dist.probs.size());
  for (const auto& [lang, q] : dist.probs) {
    const auto it = streams.find(lang);
    if (it == streams.end())
      throw ValidationError("no stream for language '" + lang + "'");
    if (it->second.empty())
      throw ValidationError("stream for language '" + lang + "' is empty");
    cycles.emplace_back(it->second, mix_seed(seed, "stream-" + lang));
    probs.push_back(q);
  }

  Rng draw_rng(mix_seed(seed, "draws"));
  std::vector<TextExample> out;
  out.reserve(size);
  for (std::size_t i = 0; i < size; ++i) {
    const std::size_t k = draw_rng.categorical(probs);
    TextExample example = cycles[k].next();
    example.count = 1;  // materialized
    out.push_back(std::move(example));
  }
  return out;
}

std::vector<TextExample> dedup_sqrt(std::vector<TextExample> examples) {
  for (auto& example : examples) {
    if (example.count < 1) throw ValidationError("corpus record has count < 1");
    // Integer sqrt to dodge floating-point edge cases on perfect squares.
    std::uint64_t root = static_cast<std::uint64_t>(
        std::sqrt(static_cast<double>(example.count)));
    while (root * root > example.count) --root;
    while ((root + 1) * (root + 1) <= example.count) ++root;
    example.count = std::max<std::uint64_t>(1, root);
  }
  return examples;
}

std::vector<PackedSequence> pack_sentences(const std::vector<TextExample>& stream,
                                           std::size_t target_words) {
  if (target_words < 1) throw ValidationError("target_words must be >= 1");

  std::vector<PackedSequence> out;
  std::map<std::string, PackedSequence> open;  // language -> open sequence
  std::vector<std::string> open_order;

  auto flush = [&](const std::string& lang) {
    auto it = open.find(lang);
    if (it == open.end()) return;
    out.push_back(std::move(it->second));
    open.erase(it);
    open_order.erase(std::find(open_order.begin(), open_order.end(), lang));
  };

  for (std::size_t i = 0; i < stream.size(); ++i) {
    const TextExample& sentence = stream[i];
    const std::size_t words = whitespace_word_count(sentence.text);
    auto it = open.find(sentence.language);
    if (it != open.end() && it->second.word_count >= target_words) {
      flush(sentence.language);
      it = open.end();
    }
    if (it == open.end()) {
      PackedSequence seq;
      seq.language = sentence.language;
      it = open.emplace(sentence.language, std::move(seq)).first;
      open_order.push_back(sentence.language);
    }
    PackedSequence& seq = it->second;
    if (!seq.text.empty()) seq.text.push_back(' ');
    seq.text += sentence.text;
    seq.word_count += words;
    seq.constituent_ids.push_back(i);
  }
  // Flush remaining sequences in first-opened order.
  for (const auto& lang : std::vector<std::string>(open_order))
    out.push_back(std::move(open.at(lang)));
  return out;
}

std::vector<TextExample> mix_corpora(
    const std::vector<std::pair<std::vector<TextExample>, double>>& parts,
    std::size_t size, std::uint64_t seed) {
  if (parts.empty()) throw ValidationError("mix_corpora requires at least one part");
  if (size == 0) throw ValidationError("mix size must be positive");

  std::vector<StreamCycle> cycles;
  std::vector<double> probs;
  double norm = 0.0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto& [stream, weight] = parts[k];
    if (stream.empty())
      throw ValidationError("mix part " + std::to_string(k) + " is empty");
    if (!(weight > 0.0))
      throw ValidationError("mix part " + std::to_string(k) +
                            " has a nonpositive weight");
    cycles.emplace_back(stream, mix_seed(seed, "part", k));
    probs.push_back(weight);
    norm += weight;
  }
  for (auto& w : probs) w /= norm;

  Rng draw_rng(mix_seed(seed, "mix-draws"));
  std::vector<TextExample> out;
  out.reserve(size);
  for (std::size_t i = 0; i < size; ++i) {
    const std::size_t k = draw_rng.categorical(probs);
    TextExample example = cycles[k].next();
    example.count = 1;
    out.push_back(std::move(example));
  }
  return out;
}

std::vector<TextExample> filter_min_tokens(const std::vector<TextExample>& stream,
                                           const tok::TokenizerModel& tokenizer,
                                           std::size_t min_tokens) {
  std::vector<TextExample> out;
  for (const auto& example : stream) {
    if (tokenizer.encode(example.text).size() >= min_tokens)
      out.push_back(example);
  }
  return out;
}

}  // namespace dforge::corpus
