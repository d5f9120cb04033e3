#pragma once

// Little-endian binary containers.
//
// Snapshot container ("SHKC", version 1):
//   char[4] magic | u32 version | u32 nx | u32 ny | u32 n_snapshots | u32 n_fields
//   f64 times[n_snapshots]
//   f32 data[n_snapshots][n_fields][ny][nx]      (x fastest)
//
// Parameter container ("SHKP", version 1):
//   char[4] magic | u32 version | u32 n_arrays
//   repeated n_arrays times:
//     u32 name_len | char name[name_len] | u32 ndim | u32 dims[ndim]
//     f32 data[prod(dims)]

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "shockcast/error.hpp"

namespace shockcast {

static_assert(std::endian::native == std::endian::little,
              "container I/O assumes a little-endian host");

inline constexpr std::uint32_t kContainerVersion = 1;
inline constexpr std::size_t kSnapshotHeaderBytes = 24;

namespace detail {

class Writer {
 public:
  explicit Writer(const std::string& path) : path_(path), out_(path, std::ios::binary) {
    if (!out_) throw FormatError("cannot open for writing: " + path);
  }
  void bytes(const void* p, std::size_t n) {
    out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  }
  void u32(std::uint32_t v) { bytes(&v, 4); }
  void f32(float v) { bytes(&v, 4); }
  void f64(double v) { bytes(&v, 8); }
  void magic(const char (&m)[5]) { bytes(m, 4); }
  void close() {
    out_.close();
    if (!out_) throw FormatError("write failed: " + path_);
  }

 private:
  std::string path_;
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::string& path) : path_(path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open for reading: " + path);
    buf_.assign(std::istreambuf_iterator<char>(in), {});
  }
  void bytes(void* p, std::size_t n) {
    if (pos_ + n > buf_.size()) throw FormatError("truncated file: " + path_);
    std::memcpy(p, buf_.data() + pos_, n);
    pos_ += n;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    bytes(&v, 4);
    return v;
  }
  float f32() {
    float v;
    bytes(&v, 4);
    return v;
  }
  double f64() {
    double v;
    bytes(&v, 8);
    return v;
  }
  void expect_magic(const char (&m)[5]) {
    char got[4];
    bytes(got, 4);
    if (std::memcmp(got, m, 4) != 0)
      throw FormatError("bad magic in " + path_ + " (expected " + m + ")");
    const std::uint32_t version = u32();
    if (version != kContainerVersion)
      throw FormatError("unsupported container version " + std::to_string(version) +
                        " in " + path_);
  }
  std::size_t remaining() const { return buf_.size() - pos_; }
  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::vector<char> buf_;
  std::size_t pos_ = 0;
};

}  // namespace detail

// Raw snapshot block, independent of grid geometry.
struct SnapshotBlock {
  std::uint32_t nx = 0;
  std::uint32_t ny = 0;
  std::uint32_t n_fields = 0;
  std::vector<double> times;
  std::vector<float> data;  // n_snapshots * n_fields * ny * nx

  std::size_t n_snapshots() const { return times.size(); }
  std::size_t snapshot_stride() const {
    return static_cast<std::size_t>(n_fields) * nx * ny;
  }
};

inline std::size_t snapshot_file_size(std::size_t n, std::size_t n_fields,
                                      std::size_t nx, std::size_t ny) {
  return kSnapshotHeaderBytes + n * 8 + n * n_fields * nx * ny * 4;
}

inline void write_snapshot_block(const std::string& path, const SnapshotBlock& b) {
  if (b.data.size() != b.n_snapshots() * b.snapshot_stride())
    throw ShapeError("write_snapshot_block: data size does not match header");
  detail::Writer w(path);
  w.magic("SHKC");
  w.u32(kContainerVersion);
  w.u32(b.nx);
  w.u32(b.ny);
  w.u32(static_cast<std::uint32_t>(b.n_snapshots()));
  w.u32(b.n_fields);
  for (double t : b.times) w.f64(t);
  w.bytes(b.data.data(), b.data.size() * sizeof(float));
  w.close();
}

inline SnapshotBlock read_snapshot_block(const std::string& path) {
  detail::Reader r(path);
  r.expect_magic("SHKC");
  SnapshotBlock b;
  b.nx = r.u32();
  b.ny = r.u32();
  const std::uint32_t n = r.u32();
  b.n_fields = r.u32();
  const std::size_t expected = static_cast<std::size_t>(n) * 8 +
                               static_cast<std::size_t>(n) * b.n_fields * b.nx * b.ny * 4;
  if (r.remaining() < expected) throw FormatError("truncated file: " + path);
  if (r.remaining() > expected) throw FormatError("trailing bytes in " + path);
  b.times.resize(n);
  for (auto& t : b.times) t = r.f64();
  b.data.resize(static_cast<std::size_t>(n) * b.snapshot_stride());
  r.bytes(b.data.data(), b.data.size() * sizeof(float));
  return b;
}

struct NamedArray {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> data;
};

inline void write_parameter_file(const std::string& path,
                                 const std::vector<NamedArray>& arrays) {
  detail::Writer w(path);
  w.magic("SHKP");
  w.u32(kContainerVersion);
  w.u32(static_cast<std::uint32_t>(arrays.size()));
  for (const auto& a : arrays) {
    std::size_t n = 1;
    for (auto d : a.dims) n *= d;
    if (n != a.data.size()) throw ShapeError("write_parameter_file: bad array " + a.name);
    w.u32(static_cast<std::uint32_t>(a.name.size()));
    w.bytes(a.name.data(), a.name.size());
    w.u32(static_cast<std::uint32_t>(a.dims.size()));
    for (auto d : a.dims) w.u32(d);
    w.bytes(a.data.data(), a.data.size() * sizeof(float));
  }
  w.close();
}

inline std::vector<NamedArray> read_parameter_file(const std::string& path) {
  detail::Reader r(path);
  r.expect_magic("SHKP");
  const std::uint32_t count = r.u32();
  std::vector<NamedArray> out(count);
  for (auto& a : out) {
    const std::uint32_t len = r.u32();
    if (len > r.remaining()) throw FormatError("truncated file: " + path);
    a.name.resize(len);
    r.bytes(a.name.data(), len);
    const std::uint32_t ndim = r.u32();
    if (ndim > 8) throw FormatError("implausible rank in " + path);
    a.dims.resize(ndim);
    std::size_t n = 1;
    for (auto& d : a.dims) {
      d = r.u32();
      n *= d;
    }
    if (n * 4 > r.remaining()) throw FormatError("truncated file: " + path);
    a.data.resize(n);
    r.bytes(a.data.data(), n * sizeof(float));
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes in " + path);
  return out;
}

}  // namespace shockcast
