#include "dforge/encoder/params.hpp"

#include <cstdio>

namespace dforge::enc {

namespace {

std::string layer_prefix(int layer) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "layer.%02d.", layer);
  return buf;
}

}  // namespace

std::vector<TensorShape> parameter_shapes(const EncoderConfig& config) {
  const long H = config.hidden;
  const long A = config.attn_width();
  const long F = config.ffn_inner;
  const long V = config.vocab_size;
  const long HH = config.head_hidden;

  std::vector<TensorShape> shapes;
  shapes.push_back({"emb.tok", V, H});
  shapes.push_back({"emb.pos", config.max_len, H});
  for (int i = 0; i < config.n_layers; ++i) {
    const std::string p = layer_prefix(i);
    shapes.push_back({p + "ln1.g", 1, H});
    shapes.push_back({p + "ln1.b", 1, H});
    shapes.push_back({p + "attn.wq", H, A});
    shapes.push_back({p + "attn.bq", 1, A});
    shapes.push_back({p + "attn.wk", H, A});
    shapes.push_back({p + "attn.bk", 1, A});
    shapes.push_back({p + "attn.wv", H, A});
    shapes.push_back({p + "attn.bv", 1, A});
    shapes.push_back({p + "attn.wo", A, H});
    shapes.push_back({p + "attn.bo", 1, H});
    shapes.push_back({p + "ln2.g", 1, H});
    shapes.push_back({p + "ln2.b", 1, H});
    shapes.push_back({p + "ffn.w1", H, F});
    shapes.push_back({p + "ffn.b1", 1, F});
    shapes.push_back({p + "ffn.w2", F, H});
    shapes.push_back({p + "ffn.b2", 1, H});
  }
  shapes.push_back({"final_ln.g", 1, H});
  shapes.push_back({"final_ln.b", 1, H});
  shapes.push_back({"mlm.bias", 1, V});
  if (!config.tie_mlm) shapes.push_back({"mlm.w", H, V});
  if (config.n_intents > 0) {
    shapes.push_back({"head.ic.w1", H, HH});
    shapes.push_back({"head.ic.b1", 1, HH});
    shapes.push_back({"head.ic.w2", HH, HH});
    shapes.push_back({"head.ic.b2", 1, HH});
    shapes.push_back({"head.ic.w3", HH, config.n_intents});
    shapes.push_back({"head.ic.b3", 1, config.n_intents});
  }
  if (config.n_tags > 0) {
    shapes.push_back({"head.sf.w1", H, HH});
    shapes.push_back({"head.sf.b1", 1, HH});
    shapes.push_back({"head.sf.w2", HH, HH});
    shapes.push_back({"head.sf.b2", 1, HH});
    shapes.push_back({"head.sf.w3", HH, config.n_tags});
    shapes.push_back({"head.sf.b3", 1, config.n_tags});
  }
  std::sort(shapes.begin(), shapes.end(),
            [](const TensorShape& a, const TensorShape& b) { return a.name < b.name; });
  return shapes;
}

std::size_t parameter_count(const EncoderConfig& config) {
  std::size_t n = 0;
  for (const auto& shape : parameter_shapes(config))
    n += static_cast<std::size_t>(shape.rows) * static_cast<std::size_t>(shape.cols);
  return n;
}

}  // namespace dforge::enc
