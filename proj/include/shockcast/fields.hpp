#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "shockcast/error.hpp"

namespace shockcast {

// Uniform cell-centred grid. Cell (i, j) is centred at
// (x0 + (i + 1/2) dx, y0 + (j + 1/2) dy).
struct Grid2D {
  std::size_t nx = 2;
  std::size_t ny = 2;
  double dx = 1.0;
  double dy = 1.0;
  double x0 = 0.0;
  double y0 = 0.0;

  Grid2D() = default;
  Grid2D(std::size_t nx_, std::size_t ny_, double dx_, double dy_,
         double x0_ = 0.0, double y0_ = 0.0)
      : nx(nx_), ny(ny_), dx(dx_), dy(dy_), x0(x0_), y0(y0_) {
    validate();
  }

  // Square domain of side `length` split into n x n cells.
  static Grid2D square(std::size_t n, double length) {
    return Grid2D(n, n, length / static_cast<double>(n),
                  length / static_cast<double>(n));
  }

  void validate() const {
    if (nx < 2 || ny < 2) throw ArgumentError("Grid2D: nx and ny must be >= 2");
    if (!(dx > 0.0) || !(dy > 0.0))
      throw ArgumentError("Grid2D: dx and dy must be positive");
  }

  std::size_t cells() const noexcept { return nx * ny; }
  double xc(std::size_t i) const noexcept {
    return x0 + (static_cast<double>(i) + 0.5) * dx;
  }
  double yc(std::size_t j) const noexcept {
    return y0 + (static_cast<double>(j) + 0.5) * dy;
  }
  double min_spacing() const noexcept { return std::min(dx, dy); }
  double cell_area() const noexcept { return dx * dy; }

  bool operator==(const Grid2D&) const = default;
};

// Ideal gas. Defaults are dry air.
struct GasModel {
  double gamma = 1.4;
  double r_gas = 287.0;

  void validate() const {
    if (!(gamma > 1.0)) throw ArgumentError("GasModel: gamma must exceed 1");
    if (!(r_gas > 0.0)) throw ArgumentError("GasModel: r_gas must be positive");
  }
  double pressure(double rho, double temp) const noexcept {
    return rho * r_gas * temp;
  }
};

// Scalar field stored row-major with x fastest: value(i, j) = data[j*nx + i].
struct Field2D {
  std::size_t nx = 0;
  std::size_t ny = 0;
  std::vector<double> data;

  Field2D() = default;
  Field2D(std::size_t nx_, std::size_t ny_, double fill = 0.0)
      : nx(nx_), ny(ny_), data(nx_ * ny_, fill) {}
  explicit Field2D(const Grid2D& g, double fill = 0.0)
      : Field2D(g.nx, g.ny, fill) {}

  double& operator()(std::size_t i, std::size_t j) noexcept {
    return data[j * nx + i];
  }
  double operator()(std::size_t i, std::size_t j) const noexcept {
    return data[j * nx + i];
  }
  std::size_t size() const noexcept { return data.size(); }
  std::span<const double> values() const noexcept { return data; }

  double max() const { return *std::max_element(data.begin(), data.end()); }
  double min() const { return *std::min_element(data.begin(), data.end()); }
  double sum() const {
    double s = 0.0;
    for (double v : data) s += v;
    return s;
  }

  bool operator==(const Field2D&) const = default;
};

inline constexpr std::size_t kNumFlowFields = 4;
inline constexpr std::array<const char*, kNumFlowFields> kFlowFieldNames = {
    "density", "velocity_x", "velocity_y", "temperature"};

// Primitive state: density [kg/m^3], velocity [m/s], temperature [K].
struct FlowField {
  Grid2D grid;
  Field2D rho;
  Field2D u;
  Field2D v;
  Field2D temp;

  FlowField() = default;
  explicit FlowField(const Grid2D& g)
      : grid(g), rho(g), u(g), v(g), temp(g) {}

  // Fields in canonical order (density, velocity_x, velocity_y, temperature).
  std::array<const Field2D*, kNumFlowFields> fields() const {
    return {&rho, &u, &v, &temp};
  }
  std::array<Field2D*, kNumFlowFields> fields() {
    return {&rho, &u, &v, &temp};
  }
  const Field2D& field(std::size_t k) const { return *fields()[k]; }
  Field2D& field(std::size_t k) { return *fields()[k]; }

  void validate() const {
    grid.validate();
    for (const Field2D* f : fields()) {
      if (f->nx != grid.nx || f->ny != grid.ny)
        throw ShapeError("FlowField: field shape does not match grid");
    }
    for (std::size_t j = 0; j < grid.ny; ++j)
      for (std::size_t i = 0; i < grid.nx; ++i) {
        if (!(rho(i, j) > 0.0))
          throw DomainError("FlowField: non-positive density at cell (" +
                            std::to_string(i) + ", " + std::to_string(j) + ")");
        if (!(temp(i, j) > 0.0))
          throw DomainError("FlowField: non-positive temperature at cell (" +
                            std::to_string(i) + ", " + std::to_string(j) + ")");
      }
  }

  bool operator==(const FlowField&) const = default;
};

// Euler conserved variables; energy is total energy per unit volume.
struct ConservedField {
  Grid2D grid;
  Field2D mass;
  Field2D mom_x;
  Field2D mom_y;
  Field2D energy;

  ConservedField() = default;
  explicit ConservedField(const Grid2D& g)
      : grid(g), mass(g), mom_x(g), mom_y(g), energy(g) {}
};

// a = sqrt(gamma R T), cellwise.
inline Field2D sound_speed(const FlowField& field, const GasModel& gas) {
  Field2D a(field.grid);
  const double gr = gas.gamma * gas.r_gas;
  for (std::size_t j = 0; j < field.grid.ny; ++j)
    for (std::size_t i = 0; i < field.grid.nx; ++i) {
      const double t = field.temp(i, j);
      if (!(t > 0.0))
        throw DomainError("sound_speed: non-positive temperature at cell (" +
                          std::to_string(i) + ", " + std::to_string(j) + ")");
      a(i, j) = std::sqrt(gr * t);
    }
  return a;
}

// lambda = max(|u| + a, |v| + a), cellwise.
inline Field2D local_wave_speed(const FlowField& field, const GasModel& gas) {
  Field2D lambda = sound_speed(field, gas);
  for (std::size_t k = 0; k < lambda.size(); ++k) {
    const double a = lambda.data[k];
    lambda.data[k] =
        std::max(std::abs(field.u.data[k]) + a, std::abs(field.v.data[k]) + a);
  }
  return lambda;
}

inline double max_wave_speed(const FlowField& field, const GasModel& gas) {
  return local_wave_speed(field, gas).max();
}

// Largest step satisfying dt <= C min(dx, dy) / lambda_max.
inline double cfl_timestep(const FlowField& field, const GasModel& gas,
                           double courant) {
  if (!(courant > 0.0 && courant < 1.0))
    throw ArgumentError("cfl_timestep: courant number must lie in (0, 1)");
  const double lmax = max_wave_speed(field, gas);
  if (!(lmax > 0.0)) throw InternalError("cfl_timestep: zero maximum wave speed");
  const double limit = courant * field.grid.min_spacing();
  double dt = limit / lmax;
  // Guarantee dt * lambda_max <= C h in floating point as well.
  while (dt * lmax > limit) dt = std::nextafter(dt, 0.0);
  return dt;
}

inline ConservedField primitive_to_conserved(const FlowField& field,
                                             const GasModel& gas) {
  ConservedField q(field.grid);
  for (std::size_t k = 0; k < field.rho.size(); ++k) {
    const double rho = field.rho.data[k];
    const double u = field.u.data[k];
    const double v = field.v.data[k];
    const double p = gas.pressure(rho, field.temp.data[k]);
    q.mass.data[k] = rho;
    q.mom_x.data[k] = rho * u;
    q.mom_y.data[k] = rho * v;
    q.energy.data[k] = p / (gas.gamma - 1.0) + 0.5 * rho * (u * u + v * v);
  }
  return q;
}

inline FlowField conserved_to_primitive(const ConservedField& q,
                                        const GasModel& gas) {
  FlowField f(q.grid);
  for (std::size_t j = 0; j < q.grid.ny; ++j)
    for (std::size_t i = 0; i < q.grid.nx; ++i) {
      const double rho = q.mass(i, j);
      if (!(rho > 0.0))
        throw DomainError("conserved_to_primitive: non-positive density at (" +
                          std::to_string(i) + ", " + std::to_string(j) + ")");
      const double u = q.mom_x(i, j) / rho;
      const double v = q.mom_y(i, j) / rho;
      const double eint = q.energy(i, j) - 0.5 * rho * (u * u + v * v);
      if (!(eint > 0.0))
        throw DomainError(
            "conserved_to_primitive: negative internal energy at (" +
            std::to_string(i) + ", " + std::to_string(j) + ")");
      const double p = (gas.gamma - 1.0) * eint;
      f.rho(i, j) = rho;
      f.u(i, j) = u;
      f.v(i, j) = v;
      f.temp(i, j) = p / (rho * gas.r_gas);
    }
  return f;
}

struct Gradient {
  Field2D ddx;
  Field2D ddy;
};

// Central differences in the interior, one-sided first order on the boundary.
inline Gradient gradient(const Field2D& f, const Grid2D& g) {
  if (g.nx < 2 || g.ny < 2)
    throw ArgumentError("gradient: need at least two cells per direction");
  Gradient out{Field2D(g), Field2D(g)};
  const std::size_t nx = g.nx;
  const std::size_t ny = g.ny;
  for (std::size_t j = 0; j < ny; ++j)
    for (std::size_t i = 0; i < nx; ++i) {
      if (i == 0)
        out.ddx(i, j) = (f(1, j) - f(0, j)) / g.dx;
      else if (i == nx - 1)
        out.ddx(i, j) = (f(nx - 1, j) - f(nx - 2, j)) / g.dx;
      else
        out.ddx(i, j) = (f(i + 1, j) - f(i - 1, j)) / (2.0 * g.dx);

      if (j == 0)
        out.ddy(i, j) = (f(i, 1) - f(i, 0)) / g.dy;
      else if (j == ny - 1)
        out.ddy(i, j) = (f(i, ny - 1) - f(i, ny - 2)) / g.dy;
      else
        out.ddy(i, j) = (f(i, j + 1) - f(i, j - 1)) / (2.0 * g.dy);
    }
  return out;
}

// Gradients of (density, velocity_x, velocity_y, temperature), in that order.
inline std::array<Gradient, kNumFlowFields> spatial_gradients(
    const FlowField& field) {
  return {gradient(field.rho, field.grid), gradient(field.u, field.grid),
          gradient(field.v, field.grid), gradient(field.temp, field.grid)};
}

}  // namespace shockcast
