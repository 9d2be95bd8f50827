#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

namespace fesense {

// Incremental SHA-256, hex digest output.
class Sha256 {
 public:
  Sha256();
  void update(const void* data, std::size_t len);
  std::string hex_digest();  // finalizes; further updates are invalid

 private:
  void process_block(const std::uint8_t* block);
  std::uint32_t h_[8];
  std::uint8_t buffer_[64];
  std::size_t buffered_ = 0;
  std::uint64_t total_ = 0;
};

std::string sha256_hex(const std::string& data);
std::string sha256_file_hex(const std::filesystem::path& path);

}  // namespace fesense
