#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

namespace fesense {

nlohmann::json read_json_file(const std::filesystem::path& path);

// Canonical serialization (sorted keys, fixed spacing) used for config
// digests and deterministic artifacts.
std::string canonical_json(const nlohmann::json& j);

// Writes to a temp file in the same directory, then renames into place,
// so readers never observe a partial file.
void atomic_write_file(const std::filesystem::path& path, const std::string& contents);

std::string version_string();

}  // namespace fesense
