#include "matte/io.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>

#include "json.hpp"

namespace matte::io {

std::uint64_t fnv1a64(const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string fnv1a64_hex(const void* data, std::size_t n) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(data, n)));
  return std::string(buf);
}

void write_bytes(const std::string& path, const void* data, std::size_t n) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw ValidationError("cannot open for writing: " + path);
  os.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
  if (!os) throw ValidationError("write failure: " + path);
}

std::vector<char> read_bytes(const std::string& path) {
  std::ifstream is(path, std::ios::binary | std::ios::ate);
  if (!is) throw ValidationError("cannot open for reading: " + path);
  const std::streamsize n = is.tellg();
  is.seekg(0);
  std::vector<char> buf(static_cast<std::size_t>(n));
  if (n > 0) is.read(buf.data(), n);
  if (!is) throw ValidationError("read failure: " + path);
  return buf;
}

void write_text(const std::string& path, const std::string& text) {
  write_bytes(path, text.data(), text.size());
}

std::string read_text(const std::string& path) {
  const std::vector<char> b = read_bytes(path);
  return std::string(b.begin(), b.end());
}

void write_f64(const std::string& path, const std::vector<double>& v) {
  write_bytes(path, v.data(), v.size() * sizeof(double));
}

std::vector<double> read_f64(const std::string& path) {
  const std::vector<char> b = read_bytes(path);
  if (b.size() % sizeof(double) != 0)
    throw ValidationError("f64 file has truncated payload: " + path);
  std::vector<double> v(b.size() / sizeof(double));
  std::memcpy(v.data(), b.data(), b.size());
  return v;
}

void write_u32(const std::string& path, const std::vector<std::uint32_t>& v) {
  write_bytes(path, v.data(), v.size() * sizeof(std::uint32_t));
}

std::vector<std::uint32_t> read_u32(const std::string& path) {
  const std::vector<char> b = read_bytes(path);
  if (b.size() % sizeof(std::uint32_t) != 0)
    throw ValidationError("u32 file has truncated payload: " + path);
  std::vector<std::uint32_t> v(b.size() / sizeof(std::uint32_t));
  std::memcpy(v.data(), b.data(), b.size());
  return v;
}

}  // namespace matte::io

namespace matte {

void save_tensors(const std::string& stem, const std::vector<NamedTensor>& tensors) {
  std::vector<double> blob;
  nlohmann::json manifest;
  manifest["dtype"] = "f64le";
  manifest["layout"] = "col-major";
  nlohmann::json list = nlohmann::json::array();
  for (const NamedTensor& t : tensors) {
    nlohmann::json e;
    e["name"] = t.name;
    e["rows"] = t.value.rows();
    e["cols"] = t.value.cols();
    e["offset"] = blob.size() * sizeof(double);
    list.push_back(std::move(e));
    blob.insert(blob.end(), t.value.data(), t.value.data() + t.value.size());
  }
  manifest["tensors"] = std::move(list);
  io::write_text(stem + ".json", manifest.dump(2));
  io::write_f64(stem + ".bin", blob);
}

std::vector<NamedTensor> load_tensors(const std::string& stem) {
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(io::read_text(stem + ".json"));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("tensor manifest parse failure: " + std::string(e.what()));
  }
  const std::vector<double> blob = io::read_f64(stem + ".bin");
  std::vector<NamedTensor> out;
  for (const auto& e : manifest.at("tensors")) {
    NamedTensor t;
    t.name = e.at("name").get<std::string>();
    const Index rows = e.at("rows").get<Index>();
    const Index cols = e.at("cols").get<Index>();
    const std::size_t offset = e.at("offset").get<std::size_t>() / sizeof(double);
    if (offset + static_cast<std::size_t>(rows * cols) > blob.size())
      throw ValidationError("tensor payload out of range: " + t.name);
    t.value.resize(rows, cols);
    std::memcpy(t.value.data(), blob.data() + offset,
                static_cast<std::size_t>(rows * cols) * sizeof(double));
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace matte
