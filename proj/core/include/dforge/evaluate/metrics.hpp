#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "dforge/corpus/types.hpp"
#include "dforge/encoder/checkpoint.hpp"
#include "dforge/encoder/net.hpp"
#include "dforge/pretrain/data.hpp"
#include "dforge/pretrain/masking.hpp"

namespace dforge::eval {

// exp(mean masked-LM cross-entropy) under a fixed-seed application of the
// masking policy; deterministic for a given (params, dataset, seed).
double perplexity(const enc::ParameterSet<float>& params,
                  const enc::EncoderConfig& config,
                  const pretrain::SequenceDataset& dataset,
                  const pretrain::MaskingPolicy& policy, std::uint64_t mask_seed);

// ---------------------------------------------------------------------------
// Noun mask-filling.

struct MaskFillTask {
  std::string text;
  std::string target_word;
  std::vector<std::int32_t> context_ids;  // <s> ... </s>
  std::size_t span_begin = 0;             // first masked position
  std::size_t span_len = 0;               // all subword tokens of the target
};

struct MaskFillTaskSet {
  std::vector<MaskFillTask> tasks;
  std::size_t skipped = 0;  // sentences without a lexicon word
};

// One task per eligible sentence: a seeded-random occurrence of a lexicon
// word is chosen and its full subword span masked.
MaskFillTaskSet build_mask_fill_tasks(
    const std::vector<corpus::TextExample>& sentences,
    const std::map<std::string, std::set<std::string>>& noun_lexicon,
    const tok::TokenizerModel& tokenizer, int max_len, std::uint64_t seed);

// A task scores 1 iff the argmax prediction at every masked position equals
// the original id (all positions masked simultaneously).
double mask_fill_accuracy(const enc::ParameterSet<float>& params,
                          const enc::EncoderConfig& config,
                          const std::vector<MaskFillTask>& tasks);

// ---------------------------------------------------------------------------
// NLU metrics.

struct SemErCounts {
  std::uint64_t correct = 0;
  std::uint64_t deletion = 0;
  std::uint64_t insertion = 0;
  std::uint64_t substitution = 0;

  SemErCounts& operator+=(const SemErCounts& other);
};

struct Hypothesis {
  std::string intent;
  std::vector<std::string> slots;  // BIO tags aligned to reference tokens
};

// Slot chunks are (name, value) pairs; intent is compared as one unit whose
// mismatch counts as a substitution.
SemErCounts semer_counts(const corpus::NluExample& reference,
                         const Hypothesis& hypothesis);

// SemER = (deletion + insertion + substitution) / (correct + deletion +
// substitution); the denominator must be positive.
double semer(const SemErCounts& counts);
double semer(const std::vector<corpus::NluExample>& references,
             const std::vector<Hypothesis>& hypotheses);

// Fraction of examples whose intent or any slot chunk (name + span) differs.
double exact_match_error(const std::vector<corpus::NluExample>& references,
                         const std::vector<Hypothesis>& hypotheses);

struct IcSfErrors {
  double ic_error = 0.0;  // 1 - intent accuracy
  double sf_error = 0.0;  // 1 - micro-averaged chunk F1
};

IcSfErrors ic_sf_errors(const std::vector<corpus::NluExample>& references,
                        const std::vector<Hypothesis>& hypotheses);

// BIO chunk spans as (name, begin, end); exposed for metric internals/tests.
struct Chunk {
  std::string name;
  std::size_t begin = 0;
  std::size_t end = 0;  // exclusive
  auto operator<=>(const Chunk&) const = default;
};
std::vector<Chunk> bio_chunks(const std::vector<std::string>& tags);

// ---------------------------------------------------------------------------
// Correlation.

struct Correlation {
  double pearson_r = 0.0;
  double r_squared = 0.0;
  double spearman_rho = 0.0;
};

// Requires |x| == |y| >= 3 and non-constant series.
Correlation correlation_report(const std::vector<double>& x,
                               const std::vector<double>& y);

}  // namespace dforge::eval
