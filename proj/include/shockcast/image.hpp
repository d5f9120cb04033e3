#pragma once

// Grayscale binary PPM (P6) output for scalar fields.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <string>
#include <utility>
#include <vector>

#include "shockcast/error.hpp"
#include "shockcast/fields.hpp"

namespace shockcast {

// Finite min and max over several fields; (0, 0) when nothing is finite.
inline std::pair<double, double> value_range(std::initializer_list<const Field2D*> fields) {
  double lo = INFINITY, hi = -INFINITY;
  for (const Field2D* f : fields)
    for (double v : f->data)
      if (std::isfinite(v)) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
  return lo <= hi ? std::pair{lo, hi} : std::pair{0.0, 0.0};
}

inline Field2D abs_difference(const Field2D& a, const Field2D& b) {
  if (a.nx != b.nx || a.ny != b.ny) throw ShapeError("abs_difference: shape mismatch");
  Field2D out(a.nx, a.ny);
  for (std::size_t c = 0; c < a.size(); ++c) out.data[c] = std::abs(a.data[c] - b.data[c]);
  return out;
}

// Gray level for v on [lo, hi]. A degenerate range maps to mid gray;
// non-finite values map to black.
inline std::uint8_t gray_level(double v, double lo, double hi) {
  if (!std::isfinite(v)) return 0;
  if (!(hi > lo)) return 128;
  const double s = std::clamp((v - lo) / (hi - lo), 0.0, 1.0);
  return static_cast<std::uint8_t>(std::lround(255.0 * s));
}

// Row 0 of the image is the top (largest y) row of the field.
inline void write_ppm(const std::string& path, const Field2D& f, double lo, double hi) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open for writing: " + path);
  out << "P6\n" << f.nx << ' ' << f.ny << "\n255\n";
  std::vector<char> row(3 * f.nx);
  for (std::size_t r = 0; r < f.ny; ++r) {
    const std::size_t j = f.ny - 1 - r;
    for (std::size_t i = 0; i < f.nx; ++i)
      std::fill_n(row.begin() + static_cast<std::ptrdiff_t>(3 * i), 3,
                  static_cast<char>(gray_level(f(i, j), lo, hi)));
    out.write(row.data(), static_cast<std::streamsize>(row.size()));
  }
  if (!out) throw FormatError("write failed: " + path);
}

}  // namespace shockcast
