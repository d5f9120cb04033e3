#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "shockcast/euler_solver.hpp"
#include "support/exact_riemann.hpp"

using namespace shockcast;

namespace {

const GasModel kSodGas{1.4, 1.0};

double sod_l1_error(std::size_t n, FluxKind flux = FluxKind::hllc) {
  const Grid2D grid(n, 2, 1.0 / static_cast<double>(n), 1.0 / static_cast<double>(n));
  SolverConfig cfg;
  cfg.gas = kSodGas;
  cfg.courant = 0.8;
  cfg.boundary = {BoundaryKind::open, BoundaryKind::open, BoundaryKind::symmetry,
                  BoundaryKind::symmetry};
  cfg.flux = flux;
  cfg.t_end = 0.2;
  const Trajectory traj = simulate(init_sod_1d(grid, kSodGas), cfg);
  const oracle::ExactRiemann exact({1.0, 0.0, 1.0}, {0.125, 0.0, 0.1}, 1.4);
  const FlowField& f = traj.snapshots.back();
  double err = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double xi = (grid.xc(i) - 0.5) / cfg.t_end;
    err += std::abs(f.rho(i, 0) - exact.sample(xi).rho) * grid.dx;
  }
  return err;
}

FlowField quiescent(const Grid2D& g, double rho, double t) {
  FlowField f(g);
  for (std::size_t k = 0; k < g.cells(); ++k) {
    f.rho.data[k] = rho;
    f.temp.data[k] = t;
  }
  return f;
}

}  // namespace

TEST(Minmod, LimiterDefinition) {
  EXPECT_EQ(minmod(1.0, 2.0), 1.0);
  EXPECT_EQ(minmod(-1.0, 2.0), 0.0);
  EXPECT_EQ(minmod(-3.0, -2.0), -2.0);
  EXPECT_EQ(minmod(0.0, 5.0), 0.0);
}

TEST(Reconstruct, FirstOrderReturnsCellValues) {
  std::vector<PrimState> cells = {{1, 0, 0, 1}, {2, 1, 0, 2}, {4, 2, 0, 3}};
  const FaceValues fv = reconstruct(cells, Reconstruction::first_order);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(fv.minus[i].rho, cells[i].rho);
    EXPECT_EQ(fv.plus[i].p, cells[i].p);
  }
}

TEST(Reconstruct, LinearDataIsInterpolatedExactly) {
  std::vector<PrimState> cells;
  for (int i = 0; i < 8; ++i) cells.push_back({1.0 + 0.5 * i, -2.0 + i, 3.0 - i, 2.0 + 0.25 * i});
  const FaceValues fv = reconstruct(cells, Reconstruction::muscl_minmod);
  for (std::size_t i = 1; i + 1 < cells.size(); ++i) {
    // Face between i and i+1 seen from both sides equals the midpoint value.
    EXPECT_DOUBLE_EQ(fv.plus[i].rho, 0.5 * (cells[i].rho + cells[i + 1].rho));
    EXPECT_DOUBLE_EQ(fv.minus[i].u, 0.5 * (cells[i].u + cells[i - 1].u));
    EXPECT_DOUBLE_EQ(fv.plus[i].p, 0.5 * (cells[i].p + cells[i + 1].p));
  }
}

TEST(Reconstruct, NeedsThreeCells) {
  std::vector<PrimState> cells(2);
  EXPECT_THROW(reconstruct(cells, Reconstruction::muscl_minmod), ArgumentError);
}

TEST(Reconstruct, PreservesPositivityOnRandomProfiles) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> pos(1e-3, 10.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<PrimState> cells(16);
    for (auto& c : cells) c = {pos(rng), 0.0, 0.0, pos(rng)};
    if (trial % 2 == 0)  // monotone profiles
      std::sort(cells.begin(), cells.end(),
                [](const PrimState& a, const PrimState& b) { return a.rho < b.rho; });
    const FaceValues fv = reconstruct(cells, Reconstruction::muscl_minmod);
    for (std::size_t i = 0; i < cells.size(); ++i) {
      EXPECT_GT(fv.minus[i].rho, 0.0);
      EXPECT_GT(fv.plus[i].rho, 0.0);
      EXPECT_GT(fv.minus[i].p / fv.minus[i].rho, 0.0);
      EXPECT_GT(fv.plus[i].p / fv.plus[i].rho, 0.0);
    }
  }
}

TEST(RiemannFlux, ConsistentForEqualStates) {
  const GasModel gas;
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> pos(0.1, 3.0), vel(-800.0, 800.0);
  for (int trial = 0; trial < 100; ++trial) {
    const PrimState w{pos(rng), vel(rng), vel(rng), 1e5 * pos(rng)};
    const ConsState exact = physical_flux(w, gas);
    for (FluxKind k : {FluxKind::hll, FluxKind::hllc}) {
      const ConsState f = riemann_flux(w, w, gas, k);
      EXPECT_NEAR(f.mass, exact.mass, 1e-9 * (1 + std::abs(exact.mass)));
      EXPECT_NEAR(f.mom_n, exact.mom_n, 1e-9 * (1 + std::abs(exact.mom_n)));
      EXPECT_NEAR(f.mom_t, exact.mom_t, 1e-9 * (1 + std::abs(exact.mom_t)));
      EXPECT_NEAR(f.energy, exact.energy, 1e-9 * (1 + std::abs(exact.energy)));
    }
  }
}

TEST(RiemannFlux, SodJumpTransportsMassRightward) {
  const ConsState f =
      riemann_flux({1.0, 0.0, 0.0, 1.0}, {0.125, 0.0, 0.0, 0.1}, kSodGas, FluxKind::hll);
  EXPECT_GT(f.mass, 0.0);
}

TEST(RiemannFlux, SupersonicLeftMovingTakesRightFlux) {
  const GasModel gas{1.4, 1.0};
  const PrimState l{1.0, -5.0, 0.3, 1.0}, r{0.8, -4.0, 0.1, 0.9};
  const ConsState fr = physical_flux(r, gas);
  for (FluxKind k : {FluxKind::hll, FluxKind::hllc}) {
    const ConsState f = riemann_flux(l, r, gas, k);
    EXPECT_EQ(f.mass, fr.mass);
    EXPECT_EQ(f.mom_n, fr.mom_n);
    EXPECT_EQ(f.energy, fr.energy);
  }
}

TEST(RiemannFlux, RejectsVacuumStates) {
  EXPECT_THROW(riemann_flux({1, 0, 0, -1}, {1, 0, 0, 1}, kSodGas, FluxKind::hllc),
               DomainError);
}

TEST(ExactRiemann, SodStarState) {
  const oracle::ExactRiemann exact({1.0, 0.0, 1.0}, {0.125, 0.0, 0.1}, 1.4);
  EXPECT_NEAR(exact.p_star(), 0.30313, 5e-6);
  EXPECT_NEAR(exact.u_star(), 0.92745, 5e-6);
  // Far-field samples return the initial states.
  EXPECT_DOUBLE_EQ(exact.sample(-10.0).rho, 1.0);
  EXPECT_DOUBLE_EQ(exact.sample(10.0).rho, 0.125);
}

TEST(ExactRiemann, AgreesWithHllcOnStarPressure) {
  // The HLLC middle state pressure of a converged first-order scheme
  // approaches p* in the plateau between the contact and the shock.
  const std::size_t n = 800;
  const Grid2D grid(n, 2, 1.0 / n, 1.0 / n);
  SolverConfig cfg;
  cfg.gas = kSodGas;
  cfg.boundary = {BoundaryKind::open, BoundaryKind::open, BoundaryKind::symmetry,
                  BoundaryKind::symmetry};
  cfg.t_end = 0.2;
  const FlowField f = simulate(init_sod_1d(grid, kSodGas), cfg).snapshots.back();
  // x = 0.5 + 0.2 * 1.2 lies between contact (u* t) and shock (~1.75 t).
  const std::size_t i = static_cast<std::size_t>(0.74 * n);
  const double p = f.rho(i, 0) * kSodGas.r_gas * f.temp(i, 0);
  EXPECT_NEAR(p, 0.30313, 2e-3);
}

TEST(Solver, SodAccuracyAndConvergence) {
  const double e100 = sod_l1_error(100);
  const double e200 = sod_l1_error(200);
  const double e400 = sod_l1_error(400);
  EXPECT_LT(e400, 2e-2);
  EXPECT_LT(e200, e100);
  EXPECT_LT(e400, e200);
  EXPECT_LT(sod_l1_error(400, FluxKind::hll), 2e-2);
}

TEST(Solver, QuiescentStateIsFixedPoint) {
  const Grid2D g = Grid2D::square(16, 0.25);
  SolverConfig cfg;
  const FlowField f = quiescent(g, 1.17, 300.0);
  auto [next, dt] = advance_one_step(f, cfg);
  EXPECT_EQ(next.rho.data, f.rho.data);
  EXPECT_EQ(next.u.data, f.u.data);
  EXPECT_EQ(next.v.data, f.v.data);
  for (std::size_t k = 0; k < g.cells(); ++k)
    EXPECT_NEAR(next.temp.data[k], 300.0, 1e-10);
  EXPECT_EQ(dt, cfl_timestep(f, cfg.gas, cfg.courant));
}

TEST(Solver, QuiescentRunHasConstantSteps) {
  const Grid2D g = Grid2D::square(8, 0.25);
  SolverConfig cfg;
  cfg.t_end = 1e-3;
  const Trajectory traj = simulate(quiescent(g, 1.17, 300.0), cfg);
  const auto d = traj.dts();
  ASSERT_GT(d.size(), 3u);
  for (std::size_t j = 1; j + 1 < d.size(); ++j) EXPECT_NEAR(d[j], d[0], 1e-12 * d[0]);
  EXPECT_LE(d.back(), d[0] * (1 + 1e-12));
  EXPECT_EQ(traj.times.front(), 0.0);
  EXPECT_EQ(traj.times.back(), cfg.t_end);
}

TEST(Solver, FinalStepLandsOnEndTime) {
  const Grid2D g = Grid2D::square(8, 0.25);
  SolverConfig cfg;
  const FlowField f = quiescent(g, 1.17, 300.0);
  cfg.t_end = 1e-6;  // shorter than one CFL step
  auto [next, dt] = advance_one_step(f, cfg, 0.0);
  EXPECT_EQ(dt, 1e-6);
}

TEST(Solver, MaxStepsTruncatesWithPartialTrajectory) {
  const Grid2D g = Grid2D::square(8, 0.25);
  SolverConfig cfg;
  cfg.max_steps = 3;
  try {
    simulate(quiescent(g, 1.17, 300.0), cfg);
    FAIL() << "expected TruncationError";
  } catch (const TruncationError& e) {
    EXPECT_EQ(e.partial().size(), 4u);
  }
}

TEST(Blast, InitialConditionFollowsIdealGasLaw) {
  const Grid2D g = Grid2D::square(32, 0.25);
  const GasModel gas;
  const FlowField f = init_circular_blast(g, 10.0, gas, 0.05);
  EXPECT_NEAR(f.rho(0, 0), 10.0 * f.rho(31, 31), 1e-12);
  EXPECT_NEAR(f.rho(31, 31), kAmbientPressure / (287.0 * 300.0), 1e-12);
  for (double t : f.temp.data) EXPECT_EQ(t, 300.0);
  for (double u : f.u.data) EXPECT_EQ(u, 0.0);
  EXPECT_THROW(init_circular_blast(g, 1.0, gas, 0.05), ArgumentError);

  const FlowField weak = init_circular_blast(g, 1.0 + 1e-9, gas, 0.05);
  EXPECT_NEAR(weak.rho.max() / weak.rho.min(), 1.0, 1e-8);
}

TEST(Sod, InitialMassIsPiecewiseIntegral) {
  const Grid2D g(100, 2, 0.01, 0.01);
  const FlowField f = init_sod_1d(g, kSodGas);
  double mass = 0.0;
  for (std::size_t i = 0; i < g.nx; ++i) mass += f.rho(i, 0) * g.dx;
  EXPECT_NEAR(mass, (1.0 + 0.125) / 2.0, 1e-12);
  EXPECT_DOUBLE_EQ(f.temp(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(f.temp(99, 1), 0.8);
}

TEST(Blast, ConservesMassEnergyAndRespectsCfl) {
  const Grid2D g = Grid2D::square(24, 0.25);
  SolverConfig cfg;
  cfg.t_end = 1e-3;
  const FlowField init = init_circular_blast(g, 8.0, cfg.gas, 0.05);
  const Trajectory traj = simulate(init, cfg);
  const auto start = conserved_totals(init, cfg.gas);
  const auto end = conserved_totals(traj.snapshots.back(), cfg.gas);
  EXPECT_LT(std::abs(end[0] - start[0]) / start[0], 1e-10);
  EXPECT_LT(std::abs(end[3] - start[3]) / start[3], 1e-10);
  const auto d = traj.dts();
  for (std::size_t j = 0; j < d.size(); ++j) {
    const double lam = max_wave_speed(traj.snapshots[j], cfg.gas);
    EXPECT_LE(d[j] * lam, cfg.courant * g.min_spacing());
  }
}

TEST(Blast, StaysDiagonallySymmetric) {
  const Grid2D g = Grid2D::square(24, 0.25);
  SolverConfig cfg;
  cfg.t_end = 1.5e-3;
  const Trajectory traj = simulate(init_circular_blast(g, 12.0, cfg.gas, 0.05), cfg);
  const FlowField& f = traj.snapshots.back();
  double worst = 0.0;
  for (std::size_t j = 0; j < g.ny; ++j)
    for (std::size_t i = 0; i < g.nx; ++i) {
      worst = std::max(worst, std::abs(f.rho(i, j) - f.rho(j, i)) / f.rho(i, j));
      worst = std::max(worst, std::abs(f.u(i, j) - f.v(j, i)) / 100.0);
      worst = std::max(worst, std::abs(f.temp(i, j) - f.temp(j, i)) / f.temp(i, j));
    }
  EXPECT_LT(worst, 1e-10);
}

TEST(Blast, RotatedProblemGivesRotatedSolution) {
  // A blast centred on the x-axis edge, run along x and along y.
  const Grid2D g = Grid2D::square(16, 0.25);
  SolverConfig cfg;
  cfg.t_end = 4e-4;
  FlowField a = init_circular_blast(g, 5.0, cfg.gas, 0.05);
  // Shift the high-pressure region so the problem is not diagonal-symmetric.
  for (std::size_t j = 0; j < g.ny; ++j)
    for (std::size_t i = 0; i < g.nx; ++i)
      if (i >= 6 && i < 9 && j < 2) a.rho(i, j) *= 3.0;
  FlowField b(g);
  for (std::size_t j = 0; j < g.ny; ++j)
    for (std::size_t i = 0; i < g.nx; ++i) {
      b.rho(j, i) = a.rho(i, j);
      b.temp(j, i) = a.temp(i, j);
    }
  const FlowField fa = simulate(a, cfg).snapshots.back();
  const FlowField fb = simulate(b, cfg).snapshots.back();
  for (std::size_t j = 0; j < g.ny; ++j)
    for (std::size_t i = 0; i < g.nx; ++i) {
      EXPECT_NEAR(fa.rho(i, j), fb.rho(j, i), 1e-12 * fa.rho(i, j));
      EXPECT_NEAR(fa.u(i, j), fb.v(j, i), 1e-9);
    }
}

TEST(Blast, TimestepGrowsAsShocksWeaken) {
  const Grid2D g = Grid2D::square(32, 0.25);
  SolverConfig cfg;
  cfg.t_end = 5e-3;
  const Trajectory traj = simulate(init_circular_blast(g, 20.0, cfg.gas, 0.05), cfg);
  const auto d = traj.dts();
  // The clipped final step is excluded.
  EXPECT_GT(d[d.size() - 2], d[1]);
}

TEST(Blast, FullResolutionSweepCaseSurvivesCornerExpansion) {
  // Ratio from the default 20-case sweep whose corner expansion drives the
  // single-stage update to negative pressure.
  const Grid2D g = Grid2D::square(64, 0.25);
  SolverConfig cfg;
  const double ratio = 2.0 * std::pow(10.0, 8.0 / 19.0);
  const FlowField init = init_circular_blast(g, ratio, cfg.gas, 0.05);
  const Trajectory traj = simulate(init, cfg);
  EXPECT_EQ(traj.times.back(), cfg.t_end);

  cfg.substeps = 1;
  EXPECT_THROW(simulate(init, cfg), BlowUpError);
}

TEST(SolverConfigTest, RejectsZeroSubsteps) {
  SolverConfig cfg;
  cfg.substeps = 0;
  EXPECT_THROW(cfg.validate(), ArgumentError);
}
