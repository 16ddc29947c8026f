#include "dforge/encoder/config.hpp"

#include <json.hpp>

#include "dforge/common/error.hpp"
#include "dforge/tokenizer/model.hpp"

namespace dforge::enc {

using json = nlohmann::json;

void EncoderConfig::validate() const {
  if (n_layers < 1) throw ConfigError("n_layers must be >= 1");
  if (hidden < 1) throw ConfigError("hidden must be >= 1");
  if (ffn_inner < 1) throw ConfigError("ffn_inner must be >= 1");
  if (n_heads < 1 || head_size < 1)
    throw ConfigError("attention heads and head size must be >= 1");
  if (dropout < 0.0 || dropout >= 1.0)
    throw ConfigError("dropout must lie in [0, 1)");
  if (max_len < 2) throw ConfigError("max_len must be >= 2");
  if (vocab_size <= tok::kNumSpecials)
    throw ConfigError("vocab_size must exceed the special-token count");
  if (n_intents < 0 || n_tags < 0) throw ConfigError("negative head size");
  if ((n_intents > 0 || n_tags > 0) && head_hidden < 1)
    throw ConfigError("head_hidden must be >= 1");
}

std::string EncoderConfig::to_json_string() const {
  json doc{{"n_layers", n_layers},
           {"hidden", hidden},
           {"ffn_inner", ffn_inner},
           {"n_heads", n_heads},
           {"head_size", head_size},
           {"dropout", dropout},
           {"max_len", max_len},
           {"vocab_size", vocab_size},
           {"n_intents", n_intents},
           {"n_tags", n_tags},
           {"head_hidden", head_hidden},
           {"tie_mlm", tie_mlm},
           {"pooling", pooling == Pooling::mean ? "mean" : "first"}};
  return doc.dump(2);
}

EncoderConfig EncoderConfig::from_json_string(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("encoder config: ") + e.what());
  }
  EncoderConfig config;
  try {
    config.n_layers = doc.at("n_layers").get<int>();
    config.hidden = doc.at("hidden").get<int>();
    config.ffn_inner = doc.at("ffn_inner").get<int>();
    config.n_heads = doc.at("n_heads").get<int>();
    config.head_size = doc.at("head_size").get<int>();
    config.dropout = doc.value("dropout", 0.1);
    config.max_len = doc.at("max_len").get<int>();
    config.vocab_size = doc.at("vocab_size").get<std::int32_t>();
    config.n_intents = doc.value("n_intents", 0);
    config.n_tags = doc.value("n_tags", 0);
    config.head_hidden = doc.value("head_hidden", 256);
    config.tie_mlm = doc.value("tie_mlm", true);
    const std::string pooling = doc.value("pooling", "mean");
    if (pooling == "mean")
      config.pooling = Pooling::mean;
    else if (pooling == "first")
      config.pooling = Pooling::first;
    else
      throw ConfigError("unknown pooling '" + pooling + "'");
  } catch (const json::exception& e) {
    throw ConfigError(std::string("encoder config: ") + e.what());
  }
  config.validate();
  return config;
}

EncoderConfig EncoderConfig::preset(const std::string& name) {
  EncoderConfig config;
  config.vocab_size = 150000;
  config.dropout = 0.1;
  if (name == "teacher-700m") {
    config.n_layers = 20;
    config.hidden = 1536;
    config.ffn_inner = 6144;
    config.n_heads = 16;
    config.head_size = 64;
    config.max_len = 1024;
  } else if (name == "teacher-2.3b") {
    config.n_layers = 29;
    config.hidden = 2560;
    config.ffn_inner = 10240;
    config.n_heads = 32;
    config.head_size = 80;
    config.max_len = 512;
  } else if (name == "teacher-9.3b") {
    config.n_layers = 46;
    config.hidden = 4096;
    config.ffn_inner = 16384;
    config.n_heads = 32;
    config.head_size = 128;
    config.max_len = 512;
  } else {
    throw ConfigError("unknown encoder preset '" + name + "'");
  }
  config.validate();
  return config;
}

}  // namespace dforge::enc
