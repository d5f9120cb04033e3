#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "shockcast/error.hpp"
#include "shockcast/fields.hpp"

namespace shockcast {

enum class BoundaryKind { symmetry, open };
enum class FluxKind { hll, hllc };
enum class Reconstruction { first_order, muscl_minmod };

struct Boundaries {
  BoundaryKind x_lo = BoundaryKind::symmetry;
  BoundaryKind x_hi = BoundaryKind::symmetry;
  BoundaryKind y_lo = BoundaryKind::symmetry;
  BoundaryKind y_hi = BoundaryKind::symmetry;

  static Boundaries all(BoundaryKind k) { return {k, k, k, k}; }
};

struct SolverConfig {
  GasModel gas;
  double courant = 0.8;
  Boundaries boundary;
  FluxKind flux = FluxKind::hllc;
  Reconstruction reconstruction = Reconstruction::muscl_minmod;
  double t_end = 5e-3;
  std::size_t max_steps = 100000;
  // Equal SSP-RK3 stages per recorded step. The unsplit update sees the sum
  // of the x and y Courant numbers, which reaches 2C on diagonal flow.
  std::size_t substeps = 2;

  void validate() const {
    gas.validate();
    if (!(courant > 0.0 && courant < 1.0))
      throw ArgumentError("SolverConfig: courant must lie in (0, 1)");
    if (!(t_end > 0.0)) throw ArgumentError("SolverConfig: t_end must be positive");
    if (max_steps == 0) throw ArgumentError("SolverConfig: max_steps must be positive");
    if (substeps == 0) throw ArgumentError("SolverConfig: substeps must be positive");
  }
};

// Snapshots on a strictly increasing time grid; dts() are exact differences.
struct Trajectory {
  std::vector<FlowField> snapshots;
  std::vector<double> times;

  std::size_t size() const noexcept { return times.size(); }

  std::vector<double> dts() const {
    std::vector<double> d;
    for (std::size_t j = 0; j + 1 < times.size(); ++j)
      d.push_back(times[j + 1] - times[j]);
    return d;
  }

  void validate() const {
    if (snapshots.size() != times.size())
      throw ArgumentError("Trajectory: snapshot/time count mismatch");
    for (std::size_t j = 0; j + 1 < times.size(); ++j)
      if (!(times[j + 1] > times[j]))
        throw ArgumentError("Trajectory: times must be strictly increasing");
  }
};

// Thrown by simulate() when max_steps runs out; carries what was computed.
class TruncationError : public Error {
 public:
  TruncationError(const std::string& what, Trajectory partial)
      : Error(what), partial_(std::move(partial)) {}
  const Trajectory& partial() const noexcept { return partial_; }

 private:
  Trajectory partial_;
};

// ---------------------------------------------------------------------------
// Point states

struct PrimState {
  double rho = 1.0;
  double u = 0.0;  // normal velocity for a sweep
  double v = 0.0;  // tangential velocity
  double p = 1.0;
};

struct ConsState {
  double mass = 0.0;
  double mom_n = 0.0;
  double mom_t = 0.0;
  double energy = 0.0;

  ConsState& operator+=(const ConsState& o) {
    mass += o.mass;
    mom_n += o.mom_n;
    mom_t += o.mom_t;
    energy += o.energy;
    return *this;
  }
};

inline ConsState to_conserved(const PrimState& w, const GasModel& gas) {
  return {w.rho, w.rho * w.u, w.rho * w.v,
          w.p / (gas.gamma - 1.0) + 0.5 * w.rho * (w.u * w.u + w.v * w.v)};
}

// Exact Euler flux in the sweep-normal direction.
inline ConsState physical_flux(const PrimState& w, const GasModel& gas) {
  const ConsState q = to_conserved(w, gas);
  return {q.mom_n, q.mom_n * w.u + w.p, q.mom_n * w.v, w.u * (q.energy + w.p)};
}

inline double minmod(double a, double b) noexcept {
  if (a * b <= 0.0) return 0.0;
  return std::abs(a) < std::abs(b) ? a : b;
}

// Values at the low (minus) and high (plus) face of every cell in a line.
struct FaceValues {
  std::vector<PrimState> minus;
  std::vector<PrimState> plus;
};

namespace detail {
inline PrimState limited_slope(const PrimState& lo, const PrimState& c,
                               const PrimState& hi) noexcept {
  return {minmod(hi.rho - c.rho, c.rho - lo.rho), minmod(hi.u - c.u, c.u - lo.u),
          minmod(hi.v - c.v, c.v - lo.v), minmod(hi.p - c.p, c.p - lo.p)};
}
inline PrimState axpy(const PrimState& c, double s, const PrimState& d) noexcept {
  return {c.rho + s * d.rho, c.u + s * d.u, c.v + s * d.v, c.p + s * d.p};
}
}  // namespace detail

// Piecewise-linear reconstruction of primitive variables along one line.
// End cells get zero slope.
inline FaceValues reconstruct(std::span<const PrimState> cells,
                              Reconstruction scheme) {
  const std::size_t n = cells.size();
  if (n < 3) throw ArgumentError("reconstruct: need at least 3 cells");
  FaceValues out{std::vector<PrimState>(cells.begin(), cells.end()),
                 std::vector<PrimState>(cells.begin(), cells.end())};
  if (scheme == Reconstruction::first_order) return out;
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const PrimState s = detail::limited_slope(cells[i - 1], cells[i], cells[i + 1]);
    out.minus[i] = detail::axpy(cells[i], -0.5, s);
    out.plus[i] = detail::axpy(cells[i], 0.5, s);
  }
  return out;
}

// HLL / HLLC interface flux with Davis wave-speed estimates. States are in
// the sweep frame (u normal, v tangential).
inline ConsState riemann_flux(const PrimState& left, const PrimState& right,
                              const GasModel& gas, FluxKind kind) {
  if (!(left.rho > 0.0 && left.p > 0.0 && right.rho > 0.0 && right.p > 0.0))
    throw DomainError("riemann_flux: non-positive density or pressure");
  const double al = std::sqrt(gas.gamma * left.p / left.rho);
  const double ar = std::sqrt(gas.gamma * right.p / right.rho);
  const double sl = std::min(left.u - al, right.u - ar);
  const double sr = std::max(left.u + al, right.u + ar);
  const ConsState fl = physical_flux(left, gas);
  const ConsState fr = physical_flux(right, gas);
  if (sl >= 0.0) return fl;
  if (sr <= 0.0) return fr;
  const ConsState ql = to_conserved(left, gas);
  const ConsState qr = to_conserved(right, gas);

  if (kind == FluxKind::hll) {
    const double inv = 1.0 / (sr - sl);
    auto mix = [&](double f_l, double f_r, double u_l, double u_r) {
      return (sr * f_l - sl * f_r + sl * sr * (u_r - u_l)) * inv;
    };
    return {mix(fl.mass, fr.mass, ql.mass, qr.mass),
            mix(fl.mom_n, fr.mom_n, ql.mom_n, qr.mom_n),
            mix(fl.mom_t, fr.mom_t, ql.mom_t, qr.mom_t),
            mix(fl.energy, fr.energy, ql.energy, qr.energy)};
  }

  const double ml = left.rho * (sl - left.u);
  const double mr = right.rho * (sr - right.u);
  const double sstar =
      (right.p - left.p + left.u * ml - right.u * mr) / (ml - mr);
  auto star_flux = [&](const PrimState& w, const ConsState& q,
                       const ConsState& f, double s) {
    const double m = w.rho * (s - w.u);
    const double fac = m / (s - sstar);
    const ConsState qs{fac, fac * sstar, fac * w.v,
                       fac * (q.energy / w.rho +
                              (sstar - w.u) * (sstar + w.p / m))};
    return ConsState{f.mass + s * (qs.mass - q.mass),
                     f.mom_n + s * (qs.mom_n - q.mom_n),
                     f.mom_t + s * (qs.mom_t - q.mom_t),
                     f.energy + s * (qs.energy - q.energy)};
  };
  if (sstar >= 0.0) return star_flux(left, ql, fl, sl);
  return star_flux(right, qr, fr, sr);
}

// ---------------------------------------------------------------------------
// Finite-volume update

namespace detail {

inline constexpr std::size_t kGhost = 2;

// Conserved state on an interior grid; storage order mass, mom_x, mom_y, E.
struct StateArrays {
  std::size_t nx = 0, ny = 0;
  std::array<std::vector<double>, 4> q;

  StateArrays() = default;
  StateArrays(std::size_t nx_, std::size_t ny_) : nx(nx_), ny(ny_) {
    for (auto& c : q) c.assign(nx * ny, 0.0);
  }
};

inline StateArrays from_field(const FlowField& f, const GasModel& gas) {
  const ConservedField c = primitive_to_conserved(f, gas);
  StateArrays s(f.grid.nx, f.grid.ny);
  s.q[0] = c.mass.data;
  s.q[1] = c.mom_x.data;
  s.q[2] = c.mom_y.data;
  s.q[3] = c.energy.data;
  return s;
}

inline FlowField to_field(const StateArrays& s, const Grid2D& grid,
                          const GasModel& gas) {
  ConservedField c(grid);
  c.mass.data = s.q[0];
  c.mom_x.data = s.q[1];
  c.mom_y.data = s.q[2];
  c.energy.data = s.q[3];
  return conserved_to_primitive(c, gas);
}

class FiniteVolume {
 public:
  FiniteVolume(const Grid2D& grid, const SolverConfig& cfg)
      : grid_(grid), cfg_(cfg), px_(grid.nx + 2 * kGhost), py_(grid.ny + 2 * kGhost),
        prim_(px_ * py_) {}

  // dq/dt = -(dF/dx + dG/dy) for the unsplit finite-volume discretisation.
  // x and y differences are formed separately and summed last, so the update
  // is bitwise mirror-symmetric under x <-> y on square cells.
  void rhs(const StateArrays& s, StateArrays& out) {
    fill_primitive(s);
    const std::size_t nx = grid_.nx, ny = grid_.ny;
    const bool muscl = cfg_.reconstruction == Reconstruction::muscl_minmod;

    // x face i sits between interior cells i-1 and i.
    fx_.resize((nx + 1) * ny);
    for (std::size_t j = 0; j < ny; ++j)
      for (std::size_t i = 0; i <= nx; ++i) {
        const std::size_t pj = j + kGhost;
        const std::size_t pl = i + kGhost - 1;
        PrimState wl = prim(pl, pj), wr = prim(pl + 1, pj);
        if (muscl) {
          wl = axpy(wl, 0.5, limited_slope(prim(pl - 1, pj), wl, wr));
          wr = axpy(wr, -0.5, limited_slope(prim(pl, pj), wr, prim(pl + 2, pj)));
        }
        fx_[j * (nx + 1) + i] = flux(wl, wr);
      }
    // y faces in the rotated frame (normal = v, tangential = u).
    fy_.resize(nx * (ny + 1));
    for (std::size_t j = 0; j <= ny; ++j)
      for (std::size_t i = 0; i < nx; ++i) {
        const std::size_t pi = i + kGhost;
        const std::size_t pb = j + kGhost - 1;
        PrimState wb = rotated(prim(pi, pb)), wt = rotated(prim(pi, pb + 1));
        if (muscl) {
          wb = axpy(wb, 0.5, limited_slope(rotated(prim(pi, pb - 1)), wb, wt));
          wt = axpy(wt, -0.5, limited_slope(rotated(prim(pi, pb)), wt,
                                            rotated(prim(pi, pb + 2))));
        }
        fy_[j * nx + i] = flux(wb, wt);
      }

    const double idx = 1.0 / grid_.dx;
    const double idy = 1.0 / grid_.dy;
    for (std::size_t j = 0; j < ny; ++j)
      for (std::size_t i = 0; i < nx; ++i) {
        const std::size_t k = j * nx + i;
        const ConsState& fl = fx_[j * (nx + 1) + i];
        const ConsState& fr = fx_[j * (nx + 1) + i + 1];
        const ConsState& gb = fy_[j * nx + i];
        const ConsState& gt = fy_[(j + 1) * nx + i];
        const double dxm = (fr.mass - fl.mass) * idx, dym = (gt.mass - gb.mass) * idy;
        const double dxu = (fr.mom_n - fl.mom_n) * idx, dyu = (gt.mom_t - gb.mom_t) * idy;
        const double dxv = (fr.mom_t - fl.mom_t) * idx, dyv = (gt.mom_n - gb.mom_n) * idy;
        const double dxe = (fr.energy - fl.energy) * idx,
                     dye = (gt.energy - gb.energy) * idy;
        out.q[0][k] = -dxm - dym;
        out.q[1][k] = -dxu - dyu;
        out.q[2][k] = -dxv - dyv;
        out.q[3][k] = -dxe - dye;
      }
  }

 private:
  PrimState& prim(std::size_t pi, std::size_t pj) { return prim_[pj * px_ + pi]; }
  static PrimState rotated(const PrimState& w) { return {w.rho, w.v, w.u, w.p}; }

  ConsState flux(const PrimState& l, const PrimState& r) const {
    return riemann_flux(l, r, cfg_.gas, cfg_.flux);
  }

  void fill_primitive(const StateArrays& s) {
    const std::size_t nx = grid_.nx, ny = grid_.ny;
    const double gm1 = cfg_.gas.gamma - 1.0;
    for (std::size_t j = 0; j < ny; ++j)
      for (std::size_t i = 0; i < nx; ++i) {
        const std::size_t k = j * nx + i;
        const double rho = s.q[0][k];
        const double u = s.q[1][k] / rho;
        const double v = s.q[2][k] / rho;
        const double p = gm1 * (s.q[3][k] - 0.5 * rho * (u * u + v * v));
        if (!(rho > 0.0) || !(p > 0.0))
          throw DomainError("finite volume: inadmissible state at cell (" +
                            std::to_string(i) + ", " + std::to_string(j) + ")");
        prim(i + kGhost, j + kGhost) = {rho, u, v, p};
      }
    // Ghost cells. x edges first over interior rows, then y edges over the
    // full padded width so corners are filled too.
    for (std::size_t j = kGhost; j < ny + kGhost; ++j)
      for (std::size_t g = 0; g < kGhost; ++g) {
        prim(kGhost - 1 - g, j) =
            ghost(prim(kGhost + g, j), prim(kGhost, j), cfg_.boundary.x_lo, false);
        prim(nx + kGhost + g, j) = ghost(prim(nx + kGhost - 1 - g, j),
                                         prim(nx + kGhost - 1, j),
                                         cfg_.boundary.x_hi, false);
      }
    for (std::size_t i = 0; i < px_; ++i)
      for (std::size_t g = 0; g < kGhost; ++g) {
        prim(i, kGhost - 1 - g) =
            ghost(prim(i, kGhost + g), prim(i, kGhost), cfg_.boundary.y_lo, true);
        prim(i, ny + kGhost + g) = ghost(prim(i, ny + kGhost - 1 - g),
                                         prim(i, ny + kGhost - 1),
                                         cfg_.boundary.y_hi, true);
      }
  }

  // Symmetry mirrors the interior with the normal velocity negated; open
  // boundaries copy the adjacent cell (zero gradient).
  static PrimState ghost(const PrimState& mirror, const PrimState& edge,
                         BoundaryKind kind, bool y_normal) {
    if (kind == BoundaryKind::open) return edge;
    PrimState w = mirror;
    if (y_normal)
      w.v = -w.v;
    else
      w.u = -w.u;
    return w;
  }

  Grid2D grid_;
  SolverConfig cfg_;
  std::size_t px_, py_;
  std::vector<PrimState> prim_;
  std::vector<ConsState> fx_;
  std::vector<ConsState> fy_;
};

}  // namespace detail

namespace detail {

struct StepPlan {
  double dt;
  double t_next;
};

// Chooses t_next so that dt = t_next - t_now is exact, t_now + dt == t_next,
// dt * lambda_max <= C h, and t_next never passes t_end.
inline StepPlan plan_step(const FlowField& field, const SolverConfig& cfg,
                          double t_now) {
  const double lmax = max_wave_speed(field, cfg.gas);
  const double limit = cfg.courant * field.grid.min_spacing();
  const double dt_cfl = cfl_timestep(field, cfg.gas, cfg.courant);
  double t_next = t_now + dt_cfl >= cfg.t_end ? cfg.t_end : t_now + dt_cfl;
  double dt = t_next - t_now;
  for (int guard = 0; guard < 64; ++guard) {
    if (dt * lmax <= limit && t_now + dt == t_next) break;
    t_next = std::nextafter(t_next, t_now);
    dt = t_next - t_now;
  }
  if (!(dt > 0.0)) throw ArgumentError("advance_one_step: already at t_end");
  return {dt, t_next};
}

}  // namespace detail

// Advances `field` by the CFL timestep, shortened so that the step never
// passes cfg.t_end, in cfg.substeps SSP-RK3 stages of equal length.
// Returns the new field and the step actually taken.
inline std::pair<FlowField, double> advance_one_step(const FlowField& field,
                                                     const SolverConfig& cfg,
                                                     double t_now = 0.0,
                                                     std::size_t step_index = 0) {
  const double dt = detail::plan_step(field, cfg, t_now).dt;
  if (cfg.substeps == 0) throw ArgumentError("advance_one_step: substeps must be positive");
  const double h = dt / static_cast<double>(cfg.substeps);

  try {
    using detail::StateArrays;
    detail::FiniteVolume fv(field.grid, cfg);
    StateArrays q0 = detail::from_field(field, cfg.gas);
    StateArrays l(field.grid.nx, field.grid.ny);
    StateArrays q1 = q0, q2 = q0;
    const std::size_t n = q0.q[0].size();

    for (std::size_t sub = 0; sub < cfg.substeps; ++sub) {
      fv.rhs(q0, l);
      for (std::size_t c = 0; c < 4; ++c)
        for (std::size_t k = 0; k < n; ++k) q1.q[c][k] = q0.q[c][k] + h * l.q[c][k];

      fv.rhs(q1, l);
      for (std::size_t c = 0; c < 4; ++c)
        for (std::size_t k = 0; k < n; ++k)
          q2.q[c][k] = 0.75 * q0.q[c][k] + 0.25 * (q1.q[c][k] + h * l.q[c][k]);

      fv.rhs(q2, l);
      for (std::size_t c = 0; c < 4; ++c)
        for (std::size_t k = 0; k < n; ++k)
          q0.q[c][k] = q0.q[c][k] / 3.0 + 2.0 / 3.0 * (q2.q[c][k] + h * l.q[c][k]);
    }

    return {detail::to_field(q0, field.grid, cfg.gas), dt};
  } catch (const DomainError& e) {
    throw BlowUpError(std::string("advance_one_step: ") + e.what(), step_index);
  }
}

// Adaptive-step integration from t = 0 to cfg.t_end, recording every step.
inline Trajectory simulate(const FlowField& init, const SolverConfig& cfg) {
  cfg.validate();
  init.validate();
  Trajectory traj;
  traj.snapshots.push_back(init);
  traj.times.push_back(0.0);
  double t = 0.0;
  std::size_t step = 0;
  while (t < cfg.t_end) {
    if (step >= cfg.max_steps)
      throw TruncationError("simulate: max_steps exceeded before t_end",
                            std::move(traj));
    auto [next, dt] = advance_one_step(traj.snapshots.back(), cfg, t, step);
    t = t + dt;
    traj.snapshots.push_back(std::move(next));
    traj.times.push_back(t);
    ++step;
  }
  return traj;
}

// ---------------------------------------------------------------------------
// Initial conditions

inline constexpr double kAmbientPressure = 101325.0;
inline constexpr double kAmbientTemperature = 300.0;

// Quarter-disc of high pressure centred on the grid origin, gas at rest and
// uniform temperature, so density jumps with pressure.
inline FlowField init_circular_blast(const Grid2D& grid, double pressure_ratio,
                                     const GasModel& gas, double r_blast,
                                     double p_ambient = kAmbientPressure,
                                     double t_ambient = kAmbientTemperature) {
  if (!(pressure_ratio > 1.0))
    throw ArgumentError("init_circular_blast: pressure_ratio must exceed 1");
  if (!(r_blast > 0.0)) throw ArgumentError("init_circular_blast: r_blast must be positive");
  grid.validate();
  gas.validate();
  FlowField f(grid);
  for (std::size_t j = 0; j < grid.ny; ++j)
    for (std::size_t i = 0; i < grid.nx; ++i) {
      const double x = grid.xc(i) - grid.x0;
      const double y = grid.yc(j) - grid.y0;
      const bool inside = x * x + y * y < r_blast * r_blast;
      const double p = inside ? pressure_ratio * p_ambient : p_ambient;
      f.temp(i, j) = t_ambient;
      f.rho(i, j) = p / (gas.r_gas * t_ambient);
    }
  return f;
}

// Sod shock tube along x: (rho, p) = (1, 1) left of the midpoint and
// (0.125, 0.1) right of it, at rest.
inline FlowField init_sod_1d(const Grid2D& grid, const GasModel& gas) {
  grid.validate();
  FlowField f(grid);
  const double mid = grid.x0 + 0.5 * grid.dx * static_cast<double>(grid.nx);
  for (std::size_t j = 0; j < grid.ny; ++j)
    for (std::size_t i = 0; i < grid.nx; ++i) {
      const bool left = grid.xc(i) < mid;
      const double rho = left ? 1.0 : 0.125;
      const double p = left ? 1.0 : 0.1;
      f.rho(i, j) = rho;
      f.temp(i, j) = p / (rho * gas.r_gas);
    }
  return f;
}

// Domain integrals of mass, x/y momentum and total energy.
inline std::array<double, 4> conserved_totals(const FlowField& f,
                                              const GasModel& gas) {
  const ConservedField c = primitive_to_conserved(f, gas);
  const double area = f.grid.cell_area();
  return {c.mass.sum() * area, c.mom_x.sum() * area, c.mom_y.sum() * area,
          c.energy.sum() * area};
}

}  // namespace shockcast
