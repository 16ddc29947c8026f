#pragma once

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dforge/corpus/types.hpp"
#include "dforge/tokenizer/model.hpp"

namespace testutil {

// Unique scratch directory, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    const auto base = std::filesystem::temp_directory_path() / "dforge-tests";
    std::filesystem::create_directories(base);
    static std::atomic<int> counter{0};
    path_ = base / (tag + "-" + std::to_string(::getpid()) + "-" +
                    std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& rel) const {
    return path_ / rel;
  }

 private:
  std::filesystem::path path_;
};

inline dforge::corpus::TextExample example(const std::string& text,
                                           const std::string& lang = "en",
                                           std::uint64_t count = 1) {
  dforge::corpus::TextExample out;
  out.text = text;
  out.language = lang;
  out.count = count;
  return out;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Hand-built tokenizer model from (piece, log_prob) pairs (specials added by
// the model itself).
inline dforge::tok::TokenizerModel handmade_tokenizer(
    std::vector<std::pair<std::string, double>> pieces) {
  return dforge::tok::TokenizerModel(std::move(pieces), {});
}

}  // namespace testutil
