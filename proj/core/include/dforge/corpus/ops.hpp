#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "dforge/corpus/types.hpp"

namespace dforge::tok {
class TokenizerModel;
}

namespace dforge::corpus {

// q_i = p_i^alpha / sum_j p_j^alpha with p_i = n_i / sum_k n_k. alpha in
// (0,1]; alpha < 1 up-samples low-resource languages.
LanguageDistribution compute_language_distribution(
    const std::map<std::string, std::uint64_t>& counts, double alpha);

// Draws exactly `size` examples. Each draw picks a language from `dist`,
// then takes the next record from that language's stream, cycling over a
// seeded shuffle with records repeated `count` times (offline up-sampling).
std::vector<TextExample> sample_corpus(
    const std::map<std::string, std::vector<TextExample>>& streams,
    const LanguageDistribution& dist, std::size_t size, std::uint64_t seed);

// Rewrites each record's count to max(1, floor(sqrt(count))).
std::vector<TextExample> dedup_sqrt(std::vector<TextExample> examples);

// Concatenates sentences (single-space joined, stream order) into sequences
// of at least `target_words` words. A sentence is appended while the open
// sequence is still short of the target, so sequences may overshoot by at
// most one sentence. Sentences are never split and languages never mixed.
std::vector<PackedSequence> pack_sentences(const std::vector<TextExample>& stream,
                                           std::size_t target_words = 700);

// Draws `size` records, picking part k with probability weight_k / sum(w),
// cycling each part over a seeded shuffle.
std::vector<TextExample> mix_corpora(
    const std::vector<std::pair<std::vector<TextExample>, double>>& parts,
    std::size_t size, std::uint64_t seed);

// Keeps records whose tokenization is at least `min_tokens` pieces long.
std::vector<TextExample> filter_min_tokens(const std::vector<TextExample>& stream,
                                           const tok::TokenizerModel& tokenizer,
                                           std::size_t min_tokens = 5);

}  // namespace dforge::corpus
