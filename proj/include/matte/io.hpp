#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "matte/types.hpp"

namespace matte::io {

std::uint64_t fnv1a64(const void* data, std::size_t n);
std::string fnv1a64_hex(const void* data, std::size_t n);
inline std::string fnv1a64_hex(const std::string& s) { return fnv1a64_hex(s.data(), s.size()); }

void write_bytes(const std::string& path, const void* data, std::size_t n);
std::vector<char> read_bytes(const std::string& path);
void write_text(const std::string& path, const std::string& text);
std::string read_text(const std::string& path);

// Raw f64 arrays, native (little-endian) layout.
void write_f64(const std::string& path, const std::vector<double>& v);
std::vector<double> read_f64(const std::string& path);
void write_u32(const std::string& path, const std::vector<std::uint32_t>& v);
std::vector<std::uint32_t> read_u32(const std::string& path);

}  // namespace matte::io

namespace matte {

// Named-tensor container: <stem>.json manifest (names, shapes, byte offsets)
// next to <stem>.bin holding column-major f64 payloads.
struct NamedTensor {
  std::string name;
  Matrix value;
};

void save_tensors(const std::string& stem, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_tensors(const std::string& stem);

}  // namespace matte
