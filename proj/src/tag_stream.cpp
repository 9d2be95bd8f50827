#include "fesense/tag_stream.hpp"

#include <bit>
#include <cstring>
#include <ostream>

#include "fesense/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "tag file I/O assumes a little-endian host");

namespace fesense {

namespace {
constexpr char kMagic[4] = {'F', 'E', 'T', 'G'};

void check_tags(std::uint64_t duration_ps, const std::vector<std::uint64_t>& tags) {
  std::uint64_t prev = 0;
  bool first = true;
  for (std::uint64_t t : tags) {
    if (!first && t <= prev)
      throw validation_error("tag stream not strictly increasing");
    if (t > duration_ps)
      throw validation_error("tag beyond stream duration");
    prev = t;
    first = false;
  }
}
}  // namespace

TagStream::TagStream(std::uint64_t duration_ps, std::uint64_t seed,
                     std::vector<std::uint64_t> tags_ps)
    : duration_ps_(duration_ps), seed_(seed), tags_ps_(std::move(tags_ps)) {
  check_tags(duration_ps_, tags_ps_);
}

void write_tag_file(const TagStream& stream, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw io_error("cannot open tag file for writing: " + path.string());
  TagFileHeader h;
  h.duration_ps = stream.duration_ps();
  h.count = stream.size();
  h.seed = stream.seed();
  out.write(kMagic, 4);
  out.write(reinterpret_cast<const char*>(&h.version), sizeof h.version);
  out.write(reinterpret_cast<const char*>(&h.duration_ps), sizeof h.duration_ps);
  out.write(reinterpret_cast<const char*>(&h.count), sizeof h.count);
  out.write(reinterpret_cast<const char*>(&h.seed), sizeof h.seed);
  const auto& tags = stream.tags_ps();
  if (!tags.empty())
    out.write(reinterpret_cast<const char*>(tags.data()),
              static_cast<std::streamsize>(tags.size() * sizeof(std::uint64_t)));
  if (!out) throw io_error("failed writing tag file: " + path.string());
}

namespace {
TagFileHeader read_header(std::ifstream& in, const std::filesystem::path& path) {
  char magic[4];
  TagFileHeader h;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&h.version), sizeof h.version);
  in.read(reinterpret_cast<char*>(&h.duration_ps), sizeof h.duration_ps);
  in.read(reinterpret_cast<char*>(&h.count), sizeof h.count);
  in.read(reinterpret_cast<char*>(&h.seed), sizeof h.seed);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw io_error("not a tag file: " + path.string());
  if (h.version != 1)
    throw io_error("unsupported tag file version in " + path.string());
  return h;
}
}  // namespace

TagStream read_tag_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open tag file: " + path.string());
  TagFileHeader h = read_header(in, path);
  std::vector<std::uint64_t> tags(h.count);
  if (h.count > 0)
    in.read(reinterpret_cast<char*>(tags.data()),
            static_cast<std::streamsize>(h.count * sizeof(std::uint64_t)));
  if (!in) throw io_error("truncated tag file: " + path.string());
  return TagStream(h.duration_ps, h.seed, std::move(tags));
}

TagFileReader::TagFileReader(const std::filesystem::path& path)
    : in_(path, std::ios::binary) {
  if (!in_) throw io_error("cannot open tag file: " + path.string());
  header_ = read_header(in_, path);
  remaining_ = header_.count;
}

std::size_t TagFileReader::next(std::span<std::uint64_t> buffer) {
  if (remaining_ == 0 || buffer.empty()) return 0;
  const std::uint64_t want =
      std::min<std::uint64_t>(remaining_, static_cast<std::uint64_t>(buffer.size()));
  in_.read(reinterpret_cast<char*>(buffer.data()),
           static_cast<std::streamsize>(want * sizeof(std::uint64_t)));
  if (!in_) throw io_error("truncated tag file while streaming");
  for (std::uint64_t i = 0; i < want; ++i) {
    const std::uint64_t t = buffer[i];
    if (!first_ || i > 0) {
      if (t <= last_tag_) throw io_error("tag stream not strictly increasing");
    }
    if (t > header_.duration_ps) throw io_error("tag beyond stream duration");
    last_tag_ = t;
  }
  first_ = false;
  remaining_ -= want;
  return static_cast<std::size_t>(want);
}

void write_tag_csv(const TagStream& stream, std::ostream& out) {
  out << "time_s\n";
  out.precision(17);
  for (std::uint64_t t : stream.tags_ps()) out << static_cast<double>(t) * 1e-12 << "\n";
}

}  // namespace fesense
