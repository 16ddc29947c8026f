#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include "dforge/encoder/config.hpp"
#include "dforge/encoder/params.hpp"

namespace dforge::enc {

// Training-state snapshot carried alongside the weights.
struct CheckpointMeta {
  std::int64_t step = 0;
  std::string stage = "stage1";  // stage1 | stage2 | distill | finetune
  double loss_ema = 0.0;
  std::string train_config_json;
  std::map<std::string, std::string> rng_states;
};

// On-disk layout (directory):
//   manifest               name<TAB>f32<TAB>rows,cols<TAB>offset<TAB>sha256
//   weights.bin            raw row-major little-endian f32 tensors
//   config                 encoder configuration (JSON)
//   tokenizer.fingerprint  hex digest of the tokenizer model
//   meta.json              optional CheckpointMeta
//   optim.manifest/.bin    optional optimizer tensors (same manifest format)
struct Checkpoint {
  ParameterSet<float> params;
  EncoderConfig config;
  std::string tokenizer_fingerprint;
  std::optional<CheckpointMeta> meta;
  std::map<std::string, Mat<float>> optim;
};

void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& dir,
                           bool load_optimizer = true);

// sha256 of weights.bin; the identity of a checkpoint's parameters.
std::string checkpoint_weights_digest(const std::filesystem::path& dir);

}  // namespace dforge::enc
