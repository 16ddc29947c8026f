#include "dforge/encoder/checkpoint.hpp"

#include <bit>
#include <charconv>
#include <fstream>
#include <sstream>
#include <vector>

#include <json.hpp>

#include "dforge/common/hash.hpp"

namespace dforge::enc {

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format is little-endian");

using json = nlohmann::json;

std::string tensor_bytes(const Mat<float>& tensor) {
  return std::string(reinterpret_cast<const char*>(tensor.data()),
                     static_cast<std::size_t>(tensor.size()) * sizeof(float));
}

void write_tensor_pair(const std::filesystem::path& manifest_path,
                       const std::filesystem::path& bin_path,
                       const std::map<std::string, Mat<float>>& tensors) {
  std::ofstream manifest(manifest_path);
  std::ofstream bin(bin_path, std::ios::binary);
  if (!manifest || !bin)
    throw IoError("cannot write checkpoint files in " +
                  manifest_path.parent_path().string());
  std::size_t offset = 0;
  for (const auto& [name, tensor] : tensors) {
    const std::string bytes = tensor_bytes(tensor);
    manifest << name << "\tf32\t" << tensor.rows() << ',' << tensor.cols()
             << '\t' << offset << '\t' << sha256_hex(bytes) << '\n';
    bin.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    offset += bytes.size();
  }
  manifest.close();
  bin.close();
  if (!manifest || !bin)
    throw IoError("write failed in " + manifest_path.parent_path().string());
}

std::map<std::string, Mat<float>> read_tensor_pair(
    const std::filesystem::path& manifest_path,
    const std::filesystem::path& bin_path, bool verify) {
  std::ifstream manifest(manifest_path);
  if (!manifest) throw IoError("cannot open " + manifest_path.string());
  std::ifstream bin(bin_path, std::ios::binary);
  if (!bin) throw IoError("cannot open " + bin_path.string());

  std::map<std::string, Mat<float>> tensors;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(manifest, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string name, dtype, shape, offset_text, digest;
    if (!std::getline(fields, name, '\t') || !std::getline(fields, dtype, '\t') ||
        !std::getline(fields, shape, '\t') ||
        !std::getline(fields, offset_text, '\t') ||
        !std::getline(fields, digest, '\t'))
      throw ValidationError(manifest_path.string() + ":" +
                            std::to_string(lineno) + ": malformed entry");
    if (dtype != "f32")
      throw ValidationError(manifest_path.string() + ": unsupported dtype '" +
                            dtype + "'");
    const std::size_t comma = shape.find(',');
    long rows = 0, cols = 0;
    std::size_t offset = 0;
    if (comma == std::string::npos ||
        std::from_chars(shape.data(), shape.data() + comma, rows).ec !=
            std::errc{} ||
        std::from_chars(shape.data() + comma + 1, shape.data() + shape.size(),
                        cols)
                .ec != std::errc{} ||
        std::from_chars(offset_text.data(),
                        offset_text.data() + offset_text.size(), offset)
                .ec != std::errc{})
      throw ValidationError(manifest_path.string() + ":" +
                            std::to_string(lineno) + ": malformed entry");

    Mat<float> tensor(rows, cols);
    bin.seekg(static_cast<std::streamoff>(offset));
    bin.read(reinterpret_cast<char*>(tensor.data()),
             static_cast<std::streamsize>(static_cast<std::size_t>(tensor.size()) *
                                          sizeof(float)));
    if (!bin)
      throw IoError(bin_path.string() + ": truncated tensor '" + name + "'");
    if (verify && sha256_hex(tensor_bytes(tensor)) != digest)
      throw IoError(bin_path.string() + ": checksum mismatch for tensor '" +
                    name + "'");
    tensors.emplace(name, std::move(tensor));
  }
  return tensors;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  out.close();
  if (!out) throw IoError("write failed for " + path.string());
}

std::string strip_trailing_newline(std::string text) {
  while (!text.empty() && (text.back() == '\n' || text.back() == '\r'))
    text.pop_back();
  return text;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ckpt) {
  std::filesystem::create_directories(dir);
  write_tensor_pair(dir / "manifest", dir / "weights.bin", ckpt.params.tensors);
  write_text_file(dir / "config", ckpt.config.to_json_string() + "\n");
  write_text_file(dir / "tokenizer.fingerprint", ckpt.tokenizer_fingerprint + "\n");
  if (ckpt.meta.has_value()) {
    json doc{{"step", ckpt.meta->step},
             {"stage", ckpt.meta->stage},
             {"loss_ema", ckpt.meta->loss_ema},
             {"rng_states", ckpt.meta->rng_states}};
    if (!ckpt.meta->train_config_json.empty())
      doc["train_config"] = json::parse(ckpt.meta->train_config_json);
    write_text_file(dir / "meta.json", doc.dump(2) + "\n");
  }
  if (!ckpt.optim.empty())
    write_tensor_pair(dir / "optim.manifest", dir / "optim.bin", ckpt.optim);
}

Checkpoint load_checkpoint(const std::filesystem::path& dir, bool load_optimizer) {
  if (!std::filesystem::exists(dir / "manifest"))
    throw IoError("no checkpoint at " + dir.string());
  Checkpoint ckpt;
  ckpt.params.tensors =
      read_tensor_pair(dir / "manifest", dir / "weights.bin", true);
  ckpt.config = EncoderConfig::from_json_string(read_text_file(dir / "config"));
  ckpt.tokenizer_fingerprint =
      strip_trailing_newline(read_text_file(dir / "tokenizer.fingerprint"));
  if (std::filesystem::exists(dir / "meta.json")) {
    const json doc = json::parse(read_text_file(dir / "meta.json"));
    CheckpointMeta meta;
    meta.step = doc.at("step").get<std::int64_t>();
    meta.stage = doc.at("stage").get<std::string>();
    meta.loss_ema = doc.at("loss_ema").get<double>();
    if (doc.contains("train_config"))
      meta.train_config_json = doc["train_config"].dump();
    if (doc.contains("rng_states"))
      meta.rng_states =
          doc["rng_states"].get<std::map<std::string, std::string>>();
    ckpt.meta = std::move(meta);
  }
  if (load_optimizer && std::filesystem::exists(dir / "optim.manifest"))
    ckpt.optim = read_tensor_pair(dir / "optim.manifest", dir / "optim.bin", true);

  // Shape audit against the configuration.
  for (const auto& shape : parameter_shapes(ckpt.config)) {
    const auto it = ckpt.params.tensors.find(shape.name);
    if (it == ckpt.params.tensors.end())
      throw ValidationError(dir.string() + ": missing tensor '" + shape.name + "'");
    if (it->second.rows() != shape.rows || it->second.cols() != shape.cols)
      throw ValidationError(dir.string() + ": tensor '" + shape.name +
                            "' has inconsistent shape");
  }
  return ckpt;
}

std::string checkpoint_weights_digest(const std::filesystem::path& dir) {
  return sha256_file_hex(dir / "weights.bin");
}

}  // namespace dforge::enc
