#include "dforge/evaluate/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace dforge::eval {

double perplexity(const enc::ParameterSet<float>& params,
                  const enc::EncoderConfig& config,
                  const pretrain::SequenceDataset& dataset,
                  const pretrain::MaskingPolicy& policy, std::uint64_t mask_seed) {
  if (dataset.sequences.empty())
    throw ValidationError("perplexity requires a nonempty corpus");
  double ce_sum = 0.0;
  long count = 0;
  for (std::size_t i = 0; i < dataset.sequences.size(); ++i) {
    Rng rng(mix_seed(mask_seed, "ppl-seq", i));
    const auto row = pretrain::apply_masking(dataset.sequences[i], policy,
                                             config.vocab_size, rng);
    const auto trace = enc::forward<float>(params, config, row.input_ids, {},
                                           enc::RunMode::eval);
    const auto lg = enc::cross_entropy_sum(trace.mlm_logits, row.labels);
    ce_sum += lg.value;
    count += lg.count;
  }
  if (count == 0)
    throw ValidationError("perplexity: the masking pass selected no positions");
  return std::exp(ce_sum / static_cast<double>(count));
}

MaskFillTaskSet build_mask_fill_tasks(
    const std::vector<corpus::TextExample>& sentences,
    const std::map<std::string, std::set<std::string>>& noun_lexicon,
    const tok::TokenizerModel& tokenizer, int max_len, std::uint64_t seed) {
  std::set<std::string> languages;
  for (const auto& sentence : sentences) languages.insert(sentence.language);
  for (const auto& language : languages) {
    const auto it = noun_lexicon.find(language);
    if (it == noun_lexicon.end() || it->second.empty())
      throw ValidationError("noun lexicon is empty for language '" + language +
                            "'");
  }

  MaskFillTaskSet out;
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    const auto& sentence = sentences[i];
    const auto& lexicon = noun_lexicon.at(sentence.language);
    const auto words = corpus::whitespace_words(sentence.text);

    std::vector<std::size_t> eligible;
    for (std::size_t w = 0; w < words.size(); ++w)
      if (lexicon.contains(words[w])) eligible.push_back(w);
    if (eligible.empty()) {
      ++out.skipped;
      continue;
    }

    Rng rng(mix_seed(seed, "mask-fill", i));
    const std::size_t target = eligible[rng.below(eligible.size())];

    MaskFillTask task;
    task.text = sentence.text;
    task.target_word = words[target];
    task.context_ids.push_back(tok::kBosId);
    for (std::size_t w = 0; w < words.size(); ++w) {
      const auto ids = tokenizer.encode_word(words[w]);
      if (w == target) {
        task.span_begin = task.context_ids.size();
        task.span_len = ids.size();
      }
      task.context_ids.insert(task.context_ids.end(), ids.begin(), ids.end());
    }
    task.context_ids.push_back(tok::kEosId);
    if (static_cast<int>(task.context_ids.size()) > max_len) {
      ++out.skipped;
      continue;
    }
    out.tasks.push_back(std::move(task));
  }
  if (out.tasks.empty() && out.skipped > 0)
    throw ValidationError("mask-fill: no eligible sentences");
  return out;
}

double mask_fill_accuracy(const enc::ParameterSet<float>& params,
                          const enc::EncoderConfig& config,
                          const std::vector<MaskFillTask>& tasks) {
  if (tasks.empty()) throw ValidationError("mask_fill_accuracy: no tasks");
  std::uint64_t correct = 0;
  for (const auto& task : tasks) {
    std::vector<std::int32_t> input = task.context_ids;
    for (std::size_t k = 0; k < task.span_len; ++k)
      input[task.span_begin + k] = tok::kMaskId;
    const auto trace =
        enc::forward<float>(params, config, input, {}, enc::RunMode::eval);
    bool all = true;
    for (std::size_t k = 0; k < task.span_len; ++k) {
      const long row = static_cast<long>(task.span_begin + k);
      long argmax = 0;
      float best = trace.mlm_logits(row, 0);
      for (long j = 1; j < trace.mlm_logits.cols(); ++j) {
        if (trace.mlm_logits(row, j) > best) {
          best = trace.mlm_logits(row, j);
          argmax = j;
        }
      }
      if (argmax != task.context_ids[task.span_begin + k]) all = false;
    }
    correct += all ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(tasks.size());
}

SemErCounts& SemErCounts::operator+=(const SemErCounts& other) {
  correct += other.correct;
  deletion += other.deletion;
  insertion += other.insertion;
  substitution += other.substitution;
  return *this;
}

std::vector<Chunk> bio_chunks(const std::vector<std::string>& tags) {
  std::vector<Chunk> chunks;
  for (std::size_t t = 0; t < tags.size(); ++t) {
    const std::string& tag = tags[t];
    if (tag == "O" || tag.size() < 3) continue;
    const std::string name = tag.substr(2);
    const bool continues = tag[0] == 'I' && !chunks.empty() &&
                           chunks.back().end == t && chunks.back().name == name;
    if (continues)
      chunks.back().end = t + 1;
    else
      chunks.push_back({name, t, t + 1});
  }
  return chunks;
}

namespace {

std::string chunk_value(const std::vector<std::string>& words, const Chunk& chunk) {
  std::string value;
  for (std::size_t t = chunk.begin; t < chunk.end && t < words.size(); ++t) {
    if (!value.empty()) value.push_back(' ');
    value += words[t];
  }
  return value;
}

// name -> multiset of chunk values
std::map<std::string, std::vector<std::string>> chunk_values_by_name(
    const std::vector<std::string>& words, const std::vector<Chunk>& chunks) {
  std::map<std::string, std::vector<std::string>> out;
  for (const auto& chunk : chunks) out[chunk.name].push_back(chunk_value(words, chunk));
  for (auto& [name, values] : out) std::sort(values.begin(), values.end());
  return out;
}

std::size_t multiset_intersection(const std::vector<std::string>& a,
                                  const std::vector<std::string>& b) {
  std::size_t i = 0, j = 0, matches = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] == b[j]) {
      ++matches;
      ++i;
      ++j;
    } else if (a[i] < b[j]) {
      ++i;
    } else {
      ++j;
    }
  }
  return matches;
}

void check_aligned(const corpus::NluExample& reference,
                   const Hypothesis& hypothesis) {
  if (reference.slots.size() != hypothesis.slots.size())
    throw ValidationError("hypothesis tags are not aligned to the reference");
}

}  // namespace

SemErCounts semer_counts(const corpus::NluExample& reference,
                         const Hypothesis& hypothesis) {
  check_aligned(reference, hypothesis);
  const auto words = corpus::whitespace_words(reference.utterance);
  const auto ref = chunk_values_by_name(words, bio_chunks(reference.slots));
  const auto hyp = chunk_values_by_name(words, bio_chunks(hypothesis.slots));

  SemErCounts counts;
  for (const auto& [name, ref_values] : ref) {
    const auto it = hyp.find(name);
    const std::vector<std::string> empty;
    const auto& hyp_values = it == hyp.end() ? empty : it->second;
    const std::size_t matches = multiset_intersection(ref_values, hyp_values);
    const std::size_t paired = std::min(ref_values.size(), hyp_values.size());
    counts.correct += matches;
    counts.substitution += paired - matches;
    if (ref_values.size() > paired) counts.deletion += ref_values.size() - paired;
    if (hyp_values.size() > paired) counts.insertion += hyp_values.size() - paired;
  }
  for (const auto& [name, hyp_values] : hyp)
    if (!ref.contains(name)) counts.insertion += hyp_values.size();

  if (reference.intent == hypothesis.intent)
    counts.correct += 1;
  else
    counts.substitution += 1;
  return counts;
}

double semer(const SemErCounts& counts) {
  const std::uint64_t denom =
      counts.correct + counts.deletion + counts.substitution;
  if (denom == 0) throw ValidationError("SemER denominator is zero");
  return static_cast<double>(counts.deletion + counts.insertion +
                             counts.substitution) /
         static_cast<double>(denom);
}

double semer(const std::vector<corpus::NluExample>& references,
             const std::vector<Hypothesis>& hypotheses) {
  if (references.size() != hypotheses.size())
    throw ValidationError("reference/hypothesis corpora differ in size");
  SemErCounts total;
  for (std::size_t i = 0; i < references.size(); ++i)
    total += semer_counts(references[i], hypotheses[i]);
  return semer(total);
}

double exact_match_error(const std::vector<corpus::NluExample>& references,
                         const std::vector<Hypothesis>& hypotheses) {
  if (references.size() != hypotheses.size())
    throw ValidationError("reference/hypothesis corpora differ in size");
  if (references.empty()) return 0.0;
  std::uint64_t errors = 0;
  for (std::size_t i = 0; i < references.size(); ++i) {
    check_aligned(references[i], hypotheses[i]);
    const bool intent_ok = references[i].intent == hypotheses[i].intent;
    const bool slots_ok =
        bio_chunks(references[i].slots) == bio_chunks(hypotheses[i].slots);
    if (!intent_ok || !slots_ok) ++errors;
  }
  return static_cast<double>(errors) / static_cast<double>(references.size());
}

IcSfErrors ic_sf_errors(const std::vector<corpus::NluExample>& references,
                        const std::vector<Hypothesis>& hypotheses) {
  if (references.size() != hypotheses.size())
    throw ValidationError("reference/hypothesis corpora differ in size");
  if (references.empty()) return {};
  std::uint64_t intent_errors = 0;
  std::uint64_t tp = 0, ref_total = 0, hyp_total = 0;
  for (std::size_t i = 0; i < references.size(); ++i) {
    check_aligned(references[i], hypotheses[i]);
    intent_errors += references[i].intent != hypotheses[i].intent;
    auto ref = bio_chunks(references[i].slots);
    auto hyp = bio_chunks(hypotheses[i].slots);
    std::sort(ref.begin(), ref.end());
    std::sort(hyp.begin(), hyp.end());
    std::vector<Chunk> common;
    std::set_intersection(ref.begin(), ref.end(), hyp.begin(), hyp.end(),
                          std::back_inserter(common));
    tp += common.size();
    ref_total += ref.size();
    hyp_total += hyp.size();
  }
  IcSfErrors out;
  out.ic_error = static_cast<double>(intent_errors) /
                 static_cast<double>(references.size());
  if (ref_total == 0 && hyp_total == 0) {
    out.sf_error = 0.0;
  } else if (tp == 0) {
    out.sf_error = 1.0;
  } else {
    const double precision = static_cast<double>(tp) / static_cast<double>(hyp_total);
    const double recall = static_cast<double>(tp) / static_cast<double>(ref_total);
    out.sf_error = 1.0 - 2.0 * precision * recall / (precision + recall);
  }
  return out;
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && x[order[j + 1]] == x[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0)
    throw ValidationError("correlation undefined for a constant series");
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace

Correlation correlation_report(const std::vector<double>& x,
                               const std::vector<double>& y) {
  if (x.size() != y.size())
    throw ValidationError("correlation series differ in length");
  if (x.size() < 3)
    throw ValidationError("correlation requires at least 3 points");
  Correlation out;
  out.pearson_r = pearson(x, y);
  out.r_squared = out.pearson_r * out.pearson_r;
  out.spearman_rho = pearson(average_ranks(x), average_ranks(y));
  return out;
}

}  // namespace dforge::eval
