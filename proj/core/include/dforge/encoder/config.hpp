#pragma once

#include <cstdint>
#include <string>

namespace dforge::enc {

enum class Pooling { mean, first };

// Architecture of the pre-layernorm encoder plus its heads. Attention width
// is n_heads * head_size, which may differ from the hidden size.
struct EncoderConfig {
  int n_layers = 2;
  int hidden = 32;
  int ffn_inner = 128;
  int n_heads = 4;
  int head_size = 8;
  double dropout = 0.1;
  int max_len = 128;
  std::int32_t vocab_size = 512;

  // Heads; 0 means the head is absent.
  int n_intents = 0;
  int n_tags = 0;
  int head_hidden = 256;

  bool tie_mlm = true;  // MLM output projection shares the token embeddings
  Pooling pooling = Pooling::mean;

  int attn_width() const { return n_heads * head_size; }

  void validate() const;

  std::string to_json_string() const;
  static EncoderConfig from_json_string(const std::string& text);

  // Shape presets: "teacher-700m", "teacher-2.3b", "teacher-9.3b" (full-size
  // rows, used for configuration validation only; do not instantiate).
  static EncoderConfig preset(const std::string& name);
};

}  // namespace dforge::enc
