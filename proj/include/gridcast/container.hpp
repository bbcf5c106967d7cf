#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <json.hpp>

namespace gridcast {

using ordered_json = nlohmann::ordered_json;

/// On-disk container: one compact JSON header line, '\n', raw payload bytes.
/// Shared by grid files, feature bundles, predictions and checkpoints.
struct Container {
  ordered_json header;
  std::vector<std::uint8_t> payload;
};

/// Writes to a sibling temp file and renames over `path`.
void write_container(const std::filesystem::path& path, const ordered_json& header,
                     std::span<const std::uint8_t> payload);

/// Throws IoError if unreadable, FormatError if the header line is not JSON.
Container read_container(const std::filesystem::path& path);

/// Atomic text write (temp + rename).
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

/// Product of a JSON shape array; FormatError if it is not a list of non-negative ints.
std::uint64_t shape_volume(const ordered_json& shape);

}  // namespace gridcast
