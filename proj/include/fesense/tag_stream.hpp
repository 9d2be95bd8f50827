#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iosfwd>
#include <span>
#include <vector>

namespace fesense {

// Photon arrival times in integer picoseconds, strictly increasing,
// bounded by the stream duration.
class TagStream {
 public:
  TagStream() = default;
  TagStream(std::uint64_t duration_ps, std::uint64_t seed, std::vector<std::uint64_t> tags_ps);

  std::uint64_t duration_ps() const { return duration_ps_; }
  double duration_s() const { return static_cast<double>(duration_ps_) * 1e-12; }
  std::uint64_t seed() const { return seed_; }
  const std::vector<std::uint64_t>& tags_ps() const { return tags_ps_; }
  std::size_t size() const { return tags_ps_.size(); }

 private:
  std::uint64_t duration_ps_ = 0;
  std::uint64_t seed_ = 0;
  std::vector<std::uint64_t> tags_ps_;
};

// Binary tag file: magic "FETG", u32 version, u64 duration_ps, u64 count,
// u64 seed, then count u64 timestamps. Little-endian throughout.
struct TagFileHeader {
  std::uint32_t version = 1;
  std::uint64_t duration_ps = 0;
  std::uint64_t count = 0;
  std::uint64_t seed = 0;
};

void write_tag_file(const TagStream& stream, const std::filesystem::path& path);
TagStream read_tag_file(const std::filesystem::path& path);

// Streaming access for files too large to hold at once.
class TagFileReader {
 public:
  explicit TagFileReader(const std::filesystem::path& path);
  const TagFileHeader& header() const { return header_; }
  // Fills buffer with the next chunk; returns number of tags delivered,
  // 0 at end of stream.
  std::size_t next(std::span<std::uint64_t> buffer);

 private:
  std::ifstream in_;
  TagFileHeader header_;
  std::uint64_t remaining_ = 0;
  std::uint64_t last_tag_ = 0;
  bool first_ = true;
};

// One timestamp per row, seconds, full double precision.
void write_tag_csv(const TagStream& stream, std::ostream& out);

}  // namespace fesense
