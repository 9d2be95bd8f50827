#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "fesense/errors.hpp"
#include "fesense/tag_stream.hpp"

using namespace fesense;
namespace fs = std::filesystem;

namespace {

fs::path scratch() {
  fs::path dir = fs::temp_directory_path() / "fesense_tag_io";
  fs::create_directories(dir);
  return dir;
}

std::vector<char> slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::vector<char>(std::istreambuf_iterator<char>(in),
                           std::istreambuf_iterator<char>());
}

TagStream sample_stream() {
  std::vector<std::uint64_t> tags;
  std::uint64_t t = 0;
  for (int i = 0; i < 5000; ++i) {
    t += 137 + static_cast<std::uint64_t>(i % 61) * 1000;  // irregular but increasing
    tags.push_back(t);
  }
  return TagStream(t + 12345, 0xDEADBEEFULL, std::move(tags));
}

}  // namespace

TEST_CASE("tag stream constructor enforces ordering and bounds") {
  CHECK_THROWS_AS(TagStream(100, 1, {10, 10, 30}), validation_error);
  CHECK_THROWS_AS(TagStream(100, 1, {30, 10}), validation_error);
  CHECK_THROWS_AS(TagStream(100, 1, {50, 101}), validation_error);
  TagStream ok(100, 1, {0, 50, 100});  // end-of-stream tag is allowed
  CHECK(ok.size() == 3);
  CHECK(ok.duration_s() == doctest::Approx(1e-10));
}

TEST_CASE("tag file round trip is exact and byte-stable") {
  const TagStream s = sample_stream();
  const fs::path p1 = scratch() / "roundtrip_a.fetg";
  const fs::path p2 = scratch() / "roundtrip_b.fetg";
  write_tag_file(s, p1);
  write_tag_file(s, p2);
  CHECK(slurp(p1) == slurp(p2));

  TagStream back = read_tag_file(p1);
  CHECK(back.duration_ps() == s.duration_ps());
  CHECK(back.seed() == s.seed());
  REQUIRE(back.tags_ps() == s.tags_ps());

  // header layout: magic + u32 version + 3 x u64, then count u64 tags
  CHECK(fs::file_size(p1) == 4 + 4 + 24 + s.size() * 8);
}

TEST_CASE("streaming reader matches whole-file read across chunk sizes") {
  const TagStream s = sample_stream();
  const fs::path p = scratch() / "chunked.fetg";
  write_tag_file(s, p);

  for (std::size_t chunk : {1u, 7u, 4096u, 100000u}) {
    TagFileReader reader(p);
    CHECK(reader.header().duration_ps == s.duration_ps());
    CHECK(reader.header().count == s.size());
    CHECK(reader.header().seed == s.seed());
    std::vector<std::uint64_t> buf(chunk);
    std::vector<std::uint64_t> collected;
    while (std::size_t n = reader.next(buf))
      collected.insert(collected.end(), buf.begin(), buf.begin() + n);
    CHECK(collected == s.tags_ps());
    CHECK(reader.next(buf) == 0);  // stays at end
  }
}

TEST_CASE("malformed tag files are rejected") {
  const fs::path dir = scratch();
  const fs::path good = dir / "good.fetg";
  write_tag_file(sample_stream(), good);

  {
    auto bytes = slurp(good);
    bytes[0] = 'X';
    std::ofstream(dir / "badmagic.fetg", std::ios::binary)
        .write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    CHECK_THROWS_AS(read_tag_file(dir / "badmagic.fetg"), io_error);
    CHECK_THROWS_AS(TagFileReader(dir / "badmagic.fetg"), io_error);
  }
  {
    auto bytes = slurp(good);
    bytes[4] = 2;  // unsupported version
    std::ofstream(dir / "badver.fetg", std::ios::binary)
        .write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    CHECK_THROWS_AS(read_tag_file(dir / "badver.fetg"), io_error);
  }
  {
    auto bytes = slurp(good);
    bytes.resize(bytes.size() - 11);  // cut into the tag payload
    std::ofstream(dir / "trunc.fetg", std::ios::binary)
        .write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    CHECK_THROWS_AS(read_tag_file(dir / "trunc.fetg"), io_error);
    TagFileReader reader(dir / "trunc.fetg");
    std::vector<std::uint64_t> buf(1 << 16);
    auto drain = [&] {
      while (reader.next(buf)) {
      }
    };
    CHECK_THROWS_AS(drain(), io_error);
  }
  CHECK_THROWS_AS(read_tag_file(dir / "does_not_exist.fetg"), io_error);
}

TEST_CASE("csv export is one timestamp per row in seconds") {
  TagStream s(5'000'000, 9, {1'000'000, 2'500'000, 4'999'999});
  std::ostringstream out;
  write_tag_csv(s, out);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "time_s");
  std::vector<double> vals;
  while (std::getline(in, line)) vals.push_back(std::stod(line));
  REQUIRE(vals.size() == 3);
  CHECK(vals[0] == doctest::Approx(1e-6).epsilon(1e-15));
  CHECK(vals[2] == doctest::Approx(4.999999e-6).epsilon(1e-15));
}
