#include "phasecycle/array_io.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

namespace phasecycle {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kFormat = "phasecycle-array";
constexpr int kVersion = 1;

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

void to_little(std::vector<unsigned char>& bytes) {
  if constexpr (std::endian::native == std::endian::big)
    for (std::size_t i = 0; i + 8 <= bytes.size(); i += 8) std::reverse(bytes.begin() + i, bytes.begin() + i + 8);
}

std::vector<unsigned char> read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError("cannot open '" + p.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& p, const void* data, std::size_t bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write '" + p.string() + "'");
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
  if (!out) throw DataError("write failed for '" + p.string() + "'");
}

void write_impl(const fs::path& stem_in, const double* values, std::size_t count, DType dtype, const Shape& shape,
                std::vector<std::string> axes) {
  const fs::path stem = array_stem(stem_in);
  const std::size_t n = shape_size(shape);
  const std::size_t per = dtype == DType::Complex128 ? 2 : 1;
  if (count != n * per)
    throw ShapeError("write_array: " + std::to_string(count / per) + " values for shape " + shape_str(shape));
  if (!axes.empty() && axes.size() != shape.size())
    throw ShapeError("write_array: " + std::to_string(axes.size()) + " axis labels for rank " +
                     std::to_string(shape.size()));
  if (axes.empty())
    for (std::size_t a = 0; a < shape.size(); ++a) axes.push_back("axis" + std::to_string(a));
  if (!fs::is_directory(stem.parent_path().empty() ? fs::path(".") : stem.parent_path()))
    throw DataError("write_array: directory '" + stem.parent_path().string() + "' does not exist");

  std::vector<unsigned char> bytes(count * sizeof(double));
  if (count) std::memcpy(bytes.data(), values, bytes.size());
  to_little(bytes);
  const fs::path raw = fs::path(stem.string() + ".raw");
  write_file(raw, bytes.data(), bytes.size());

  json h;
  h["format"] = kFormat;
  h["version"] = kVersion;
  h["dtype"] = dtype_name(dtype);
  h["shape"] = shape;
  h["axes"] = axes;
  h["endianness"] = "little";
  h["order"] = "row-major";
  h["payload"] = raw.filename().string();
  h["payload_bytes"] = bytes.size();
  const std::string text = h.dump(2) + "\n";
  write_file(fs::path(stem.string() + ".json"), text.data(), text.size());
}

}  // namespace

std::string dtype_name(DType d) { return d == DType::Real64 ? "real64" : "complex128"; }
std::size_t dtype_size(DType d) { return d == DType::Real64 ? 8 : 16; }

fs::path array_stem(const fs::path& path) {
  const auto ext = path.extension();
  if (ext == ".json" || ext == ".raw") return fs::path(path).replace_extension();
  return path;
}

void write_array(const fs::path& stem, std::span<const double> values, const Shape& shape,
                 std::vector<std::string> axes) {
  write_impl(stem, values.data(), values.size(), DType::Real64, shape, std::move(axes));
}

void write_array(const fs::path& stem, std::span<const Cx> values, const Shape& shape, std::vector<std::string> axes) {
  write_impl(stem, reinterpret_cast<const double*>(values.data()), 2 * values.size(), DType::Complex128, shape,
             std::move(axes));
}

ArrayHeader read_array_header(const fs::path& path) {
  const fs::path header_path = fs::path(array_stem(path).string() + ".json");
  if (!fs::exists(header_path)) throw DataError("array header '" + header_path.string() + "' does not exist");
  const auto bytes = read_file(header_path);
  json h;
  try {
    h = json::parse(bytes.begin(), bytes.end());
  } catch (const json::exception& e) {
    throw DataError("array header '" + header_path.string() + "' is not valid JSON: " + e.what());
  }
  ArrayHeader out;
  try {
    if (h.at("format").get<std::string>() != kFormat)
      throw DataError("array header '" + header_path.string() + "': unexpected format");
    if (h.at("version").get<int>() != kVersion)
      throw DataError("array header '" + header_path.string() + "': unsupported version");
    const auto dt = h.at("dtype").get<std::string>();
    if (dt == "real64")
      out.dtype = DType::Real64;
    else if (dt == "complex128")
      out.dtype = DType::Complex128;
    else
      throw DataError("array header '" + header_path.string() + "': unknown dtype '" + dt + "'");
    if (h.at("endianness").get<std::string>() != "little")
      throw DataError("array header '" + header_path.string() + "': only little-endian payloads are supported");
    if (h.at("order").get<std::string>() != "row-major")
      throw DataError("array header '" + header_path.string() + "': only row-major order is supported");
    out.shape = h.at("shape").get<Shape>();
    out.axes = h.at("axes").get<std::vector<std::string>>();
    out.payload = h.at("payload").get<std::string>();
    out.payload_bytes = h.at("payload_bytes").get<std::size_t>();
  } catch (const json::exception& e) {
    throw DataError("array header '" + header_path.string() + "': " + e.what());
  }
  if (out.axes.size() != out.shape.size())
    throw DataError("array header '" + header_path.string() + "': axis labels do not match rank");
  if (out.payload_bytes != shape_size(out.shape) * dtype_size(out.dtype))
    throw DataError("array header '" + header_path.string() + "': payload_bytes disagrees with shape and dtype");
  return out;
}

ArrayData read_array(const fs::path& path) {
  ArrayData d;
  d.header = read_array_header(path);
  const fs::path raw = array_stem(path).parent_path() / d.header.payload;
  auto bytes = read_file(raw);
  if (bytes.size() != d.header.payload_bytes)
    throw DataError("array payload '" + raw.string() + "' has " + std::to_string(bytes.size()) + " bytes, header says " +
                    std::to_string(d.header.payload_bytes));
  to_little(bytes);
  const std::size_t n = shape_size(d.header.shape);
  if (d.header.dtype == DType::Real64) {
    d.real.resize(n);
    if (n) std::memcpy(d.real.data(), bytes.data(), bytes.size());
  } else {
    d.cx.resize(n);
    if (n) std::memcpy(reinterpret_cast<double*>(d.cx.data()), bytes.data(), bytes.size());
  }
  return d;
}

ArrayData read_real_array(const fs::path& path) {
  auto d = read_array(path);
  if (d.header.dtype != DType::Real64) throw DataError("'" + path.string() + "' holds complex values, expected real64");
  return d;
}

ArrayData read_complex_array(const fs::path& path) {
  auto d = read_array(path);
  if (d.header.dtype != DType::Complex128)
    throw DataError("'" + path.string() + "' holds real values, expected complex128");
  return d;
}

std::uint64_t fnv1a(std::span<const unsigned char> bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fnv1a(const std::string& text) {
  return fnv1a(std::span<const unsigned char>(reinterpret_cast<const unsigned char*>(text.data()), text.size()));
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

std::string payload_hash(const fs::path& path) {
  const auto h = read_array_header(path);
  return hex64(fnv1a(read_file(array_stem(path).parent_path() / h.payload)));
}

}  // namespace phasecycle
