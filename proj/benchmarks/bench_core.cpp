// Hot-path microbenchmarks: tokenizer segmentation, masking, the encoder
// forward/backward, and one optimizer step.

#include <benchmark/benchmark.h>

#include "dforge/corpus/text_gen.hpp"
#include "dforge/encoder/losses.hpp"
#include "dforge/encoder/net.hpp"
#include "dforge/pretrain/adam.hpp"
#include "dforge/pretrain/masking.hpp"
#include "dforge/tokenizer/train.hpp"

using namespace dforge;

namespace {

struct BenchWorld {
  tok::TokenizerModel tokenizer;
  std::vector<std::string> texts;
  enc::EncoderConfig config;
  enc::ParameterSet<float> params;
  std::vector<std::int32_t> sequence;

  BenchWorld() {
    const auto grammar = corpus::general_text_grammar();
    const auto records = corpus::generate_text(grammar, 400, 3);
    for (const auto& record : records) texts.push_back(record.text);
    tokenizer = tok::train_unigram(texts, 384, {}, 1);

    config.n_layers = 4;
    config.hidden = 64;
    config.ffn_inner = 256;
    config.n_heads = 4;
    config.head_size = 16;
    config.max_len = 128;
    config.vocab_size = static_cast<std::int32_t>(tokenizer.size());
    config.dropout = 0.1;
    params = enc::init_params<float>(config, 7);

    sequence.push_back(tok::kBosId);
    for (const auto& text : texts) {
      for (const auto id : tokenizer.encode(text)) {
        if (sequence.size() >= 95) break;
        sequence.push_back(id);
      }
      if (sequence.size() >= 95) break;
    }
    sequence.push_back(tok::kEosId);
  }
};

BenchWorld& world() {
  static BenchWorld instance;
  return instance;
}

void BM_TokenizerEncode(benchmark::State& state) {
  auto& w = world();
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(w.tokenizer.encode(w.texts[i % w.texts.size()]));
    ++i;
  }
}
BENCHMARK(BM_TokenizerEncode);

void BM_ApplyMasking(benchmark::State& state) {
  auto& w = world();
  pretrain::MaskingPolicy policy;
  Rng rng(3);
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        pretrain::apply_masking(w.sequence, policy, w.config.vocab_size, rng));
  }
}
BENCHMARK(BM_ApplyMasking);

void BM_ForwardEval(benchmark::State& state) {
  auto& w = world();
  for (auto _ : state) {
    benchmark::DoNotOptimize(enc::forward<float>(w.params, w.config, w.sequence,
                                                 {}, enc::RunMode::eval));
  }
}
BENCHMARK(BM_ForwardEval);

void BM_ForwardBackward(benchmark::State& state) {
  auto& w = world();
  Rng rng(5);
  pretrain::MaskingPolicy policy;
  for (auto _ : state) {
    const auto row =
        pretrain::apply_masking(w.sequence, policy, w.config.vocab_size, rng);
    enc::ForwardCache<float> cache;
    const auto trace = enc::forward<float>(w.params, w.config, row.input_ids,
                                           {}, enc::RunMode::train, &rng, &cache);
    auto loss = enc::cross_entropy_sum(trace.mlm_logits, row.labels);
    enc::TraceGrads<float> tg;
    tg.d_mlm_logits = std::move(loss.d_logits);
    benchmark::DoNotOptimize(enc::backward(w.params, w.config, cache, tg));
  }
}
BENCHMARK(BM_ForwardBackward);

void BM_OptimizerStep(benchmark::State& state) {
  auto& w = world();
  pretrain::TrainConfig cfg;
  auto params = w.params;
  auto adam = pretrain::AdamState<float>::zero_like(params);
  auto grads = enc::zeros_like(params);
  for (auto& [name, tensor] : grads.tensors) tensor.setConstant(1e-3f);
  for (auto _ : state) {
    auto g = grads;
    pretrain::optimizer_step(params, std::move(g), cfg, 1e-4, adam);
  }
}
BENCHMARK(BM_OptimizerStep);

}  // namespace

BENCHMARK_MAIN();
