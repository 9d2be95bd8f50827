#include "fesense/config.hpp"

#include <fstream>

#include "fesense/errors.hpp"

namespace fesense {

nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open config: " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw validation_error("malformed json in " + path.string() + ": " + e.what());
  }
}

std::string canonical_json(const nlohmann::json& j) {
  // nlohmann objects iterate in key order already; dump(2) is stable.
  return j.dump(2);
}

void atomic_write_file(const std::filesystem::path& path, const std::string& contents) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("cannot open for writing: " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw io_error("failed writing " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw io_error("cannot move " + tmp.string() + " into place: " + ec.message());
}

std::string version_string() { return "0.1.0"; }

}  // namespace fesense
