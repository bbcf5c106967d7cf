#include "gridcast/container.hpp"

#include <fstream>
#include <iterator>
#include <string>

#include "gridcast/error.hpp"

namespace gridcast {
namespace fs = std::filesystem;

namespace {

fs::path temp_sibling(const fs::path& path) {
  auto tmp = path;
  tmp += ".tmp";
  return tmp;
}

void ensure_parent(const fs::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
}

void commit(const fs::path& tmp, const fs::path& path) {
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " -> " + path.string() + ": " + ec.message());
}

}  // namespace

void write_container(const fs::path& path, const ordered_json& header,
                     std::span<const std::uint8_t> payload) {
  ensure_parent(path);
  const auto tmp = temp_sibling(path);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    const std::string line = header.dump();
    out.write(line.data(), static_cast<std::streamsize>(line.size()));
    out.put('\n');
    out.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  commit(tmp, path);
}

Container read_container(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ": missing header line");
  Container c;
  try {
    c.header = ordered_json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": header is not valid JSON (" + e.what() + ")");
  }
  if (!c.header.is_object()) throw FormatError(path.string() + ": header must be a JSON object");
  c.payload.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  return c;
}

void write_text_atomic(const fs::path& path, const std::string& text) {
  ensure_parent(path);
  const auto tmp = temp_sibling(path);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out << text;
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  commit(tmp, path);
}

std::uint64_t shape_volume(const ordered_json& shape) {
  if (!shape.is_array()) throw FormatError("shape must be an array");
  std::uint64_t v = 1;
  for (const auto& d : shape) {
    if (!d.is_number_integer() || d.get<std::int64_t>() < 0) throw FormatError("shape entries must be non-negative integers");
    v *= d.get<std::uint64_t>();
  }
  return v;
}

}  // namespace gridcast
