#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace dforge {

// SHA-256 hex digest. Used for tokenizer fingerprints, checkpoint tensor
// checksums, and pipeline provenance hashes.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file_hex(const std::filesystem::path& path);

}  // namespace dforge
