#include "dforge/pretrain/data.hpp"

#include <algorithm>

#include "dforge/common/rng.hpp"

namespace dforge::pretrain {

namespace {

void append_chunks(std::vector<std::vector<std::int32_t>>& out,
                   const std::vector<std::int32_t>& ids, int max_len) {
  const std::size_t body = static_cast<std::size_t>(max_len) - 2;
  for (std::size_t start = 0; start < ids.size(); start += body) {
    const std::size_t end = std::min(ids.size(), start + body);
    std::vector<std::int32_t> chunk;
    chunk.reserve(end - start + 2);
    chunk.push_back(tok::kBosId);
    chunk.insert(chunk.end(), ids.begin() + static_cast<std::ptrdiff_t>(start),
                 ids.begin() + static_cast<std::ptrdiff_t>(end));
    chunk.push_back(tok::kEosId);
    out.push_back(std::move(chunk));
  }
}

}  // namespace

SequenceDataset SequenceDataset::build(
    const std::vector<corpus::TextExample>& records,
    const tok::TokenizerModel& tokenizer, int max_len) {
  if (max_len < 4) throw ValidationError("max_len too small for sequences");
  SequenceDataset dataset;
  dataset.tokenizer_fingerprint = tokenizer.fingerprint();
  for (const auto& record : records) {
    const auto ids = tokenizer.encode(record.text);
    if (ids.empty()) continue;
    append_chunks(dataset.sequences, ids, max_len);
  }
  if (dataset.sequences.empty())
    throw ValidationError("dataset is empty: no usable sequences");
  return dataset;
}

SequenceDataset SequenceDataset::build_from_texts(
    const std::vector<std::string>& texts, const tok::TokenizerModel& tokenizer,
    int max_len) {
  std::vector<corpus::TextExample> records;
  records.reserve(texts.size());
  for (const auto& text : texts) {
    corpus::TextExample record;
    record.text = text;
    record.language = "en";
    records.push_back(std::move(record));
  }
  return build(records, tokenizer, max_len);
}

BatchPlan::BatchPlan(const SequenceDataset& dataset, std::int64_t batch_tokens,
                     std::uint64_t seed)
    : seed_(seed) {
  if (dataset.sequences.empty())
    throw ValidationError("cannot build a batch plan from an empty dataset");

  std::vector<std::size_t> order(dataset.sequences.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const std::size_t la = dataset.sequences[a].size();
    const std::size_t lb = dataset.sequences[b].size();
    return la != lb ? la < lb : a < b;
  });

  std::vector<std::size_t> current;
  std::size_t current_max = 0;
  for (const std::size_t idx : order) {
    const std::size_t len = dataset.sequences[idx].size();
    const std::size_t padded =
        (current.size() + 1) * std::max(current_max, len);
    if (!current.empty() &&
        padded > static_cast<std::size_t>(batch_tokens)) {
      batches_.push_back(std::move(current));
      current.clear();
      current_max = 0;
    }
    current.push_back(idx);
    current_max = std::max(current_max, len);
  }
  if (!current.empty()) batches_.push_back(std::move(current));
}

const std::vector<std::size_t>& BatchPlan::batch_for_step(
    std::int64_t step) const {
  const std::int64_t n = static_cast<std::int64_t>(batches_.size());
  const std::int64_t epoch = step / n;
  const std::int64_t slot = step % n;
  if (epoch != cached_epoch_) {
    Rng rng(mix_seed(seed_, "batch-order", static_cast<std::uint64_t>(epoch)));
    order_ = rng.permutation(batches_.size());
    cached_epoch_ = epoch;
  }
  return batches_[order_[static_cast<std::size_t>(slot)]];
}

}  // namespace dforge::pretrain
