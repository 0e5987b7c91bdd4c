#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "phasecycle/types.hpp"

namespace phasecycle {

enum class DType { Real64, Complex128 };

std::string dtype_name(DType d);
std::size_t dtype_size(DType d);

/// Sidecar header stored as `<stem>.json`; the payload is `<stem>.raw`.
struct ArrayHeader {
  DType dtype = DType::Real64;
  Shape shape;
  std::vector<std::string> axes;
  std::string payload;  // file name of the raw payload, relative to the header
  std::size_t payload_bytes = 0;
};

struct ArrayData {
  ArrayHeader header;
  RealVec real;  // dtype real64
  CxVec cx;      // dtype complex128

  std::size_t size() const { return shape_size(header.shape); }
};

/// `path` may be the stem or either of the two files.
std::filesystem::path array_stem(const std::filesystem::path& path);

void write_array(const std::filesystem::path& stem, std::span<const double> values, const Shape& shape,
                 std::vector<std::string> axes = {});
void write_array(const std::filesystem::path& stem, std::span<const Cx> values, const Shape& shape,
                 std::vector<std::string> axes = {});

ArrayHeader read_array_header(const std::filesystem::path& path);
ArrayData read_array(const std::filesystem::path& path);
/// Throws DataError unless the file holds real64 values.
ArrayData read_real_array(const std::filesystem::path& path);
ArrayData read_complex_array(const std::filesystem::path& path);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::span<const unsigned char> bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a(const std::string& text);
std::string hex64(std::uint64_t v);
/// FNV-1a of the raw payload of the array at `path`.
std::string payload_hash(const std::filesystem::path& path);

}  // namespace phasecycle
