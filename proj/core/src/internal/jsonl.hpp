#pragma once

// Internal helpers for the record-per-line interchange files. Not installed.

#include <filesystem>
#include <fstream>
#include <functional>
#include <string>

#include <json.hpp>

#include "dforge/common/error.hpp"

namespace dforge::internal {

using json = nlohmann::json;

inline void for_each_jsonl(const std::filesystem::path& path,
                           const std::function<void(const json&, std::size_t)>& fn) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json record;
    try {
      record = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ValidationError(path.string() + ":" + std::to_string(lineno) +
                            ": malformed record: " + e.what());
    }
    fn(record, lineno);
  }
}

class JsonlWriter {
 public:
  explicit JsonlWriter(const std::filesystem::path& path)
      : path_(path), out_(path) {
    if (!out_) throw IoError("cannot write " + path.string());
  }

  void write(const json& record) { out_ << record.dump() << '\n'; }

  void close() {
    out_.close();
    if (!out_) throw IoError("write failed for " + path_.string());
  }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

}  // namespace dforge::internal
