#pragma once

// Autoregressive inference: predict a timestep, advance the state by it,
// repeat until the stop time is crossed.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "shockcast/cfl_model.hpp"
#include "shockcast/solver_net.hpp"
#include "shockcast/training.hpp"

namespace shockcast {

using TimestepPredictor = std::function<double(const FlowField&)>;
using StateAdvancer = std::function<FlowField(const FlowField&, double dt)>;

struct RolloutResult {
  Trajectory predicted;  // snapshot 0 is the initial condition

  std::vector<double> dts() const { return predicted.dts(); }
  std::size_t steps() const { return predicted.size() - 1; }
};

// Budget used when none is given: four times the longest training trajectory.
inline std::size_t default_step_budget(std::span<const Trajectory> train) {
  std::size_t longest = 0;
  for (const auto& t : train) longest = std::max(longest, t.size());
  return 4 * longest;
}

inline RolloutResult rollout(const FlowField& u0, double t_stop, std::size_t max_steps,
                             const TimestepPredictor& next_dt, const StateAdvancer& advance) {
  if (!(t_stop > 0.0)) throw ArgumentError("rollout: t_stop must be positive");
  if (max_steps == 0) throw ArgumentError("rollout: step budget must be positive");
  RolloutResult r;
  r.predicted.snapshots.push_back(u0);
  r.predicted.times.push_back(0.0);
  double t = 0.0;
  while (t < t_stop) {
    if (r.steps() >= max_steps)
      throw RunawayError("rollout: " + std::to_string(max_steps) + " steps reached t = " +
                         std::to_string(t) + " of " + std::to_string(t_stop));
    const double dt = next_dt(r.predicted.snapshots.back());
    if (!(dt > 0.0) || !std::isfinite(dt))
      throw DomainError("rollout: predicted timestep " + std::to_string(dt) + " is not positive");
    r.predicted.snapshots.push_back(advance(r.predicted.snapshots.back(), dt));
    t += dt;
    // Summed steps can fall short of t_stop by round-off only.
    if (t < t_stop && t_stop - t <= 1e-12 * t_stop) t = t_stop;
    r.predicted.times.push_back(t);
  }
  return r;
}

// Lifts density and temperature to a small positive floor so the next
// timestep prediction sees an admissible gas state.
inline void floor_thermodynamics(FlowField& f, const NormStats& stats, double fraction = 1e-3) {
  const double rho_floor = fraction * std::abs(stats.fields.mean[0]);
  const double temp_floor = fraction * std::abs(stats.fields.mean[3]);
  for (double& v : f.rho.data) v = std::isnan(v) ? v : std::max(v, rho_floor);
  for (double& v : f.temp.data) v = std::isnan(v) ? v : std::max(v, temp_floor);
}

inline FlowField advance_with_net(const SolverNet<float>& net, const FlowField& f, double dt,
                                  const NormStats& stats) {
  ad::NoGradGuard guard;
  const auto z = normalize_state(f, stats);
  ad::Tensor<float> x({1, kNumFlowFields, f.grid.ny, f.grid.nx}, z);
  const auto y = net.forward(x, std::vector<float>{static_cast<float>(stats.normalize_dt(dt))});
  FlowField out = denormalize_state(y.values().data(), f.grid, stats);
  floor_thermodynamics(out, stats);
  return out;
}

inline RolloutResult shockcast_rollout(const CflModel<float>& cfl, const SolverNet<float>& solver,
                                       const FlowField& u0, double t_stop, const GasModel& gas,
                                       const NormStats& stats, std::size_t max_steps) {
  return rollout(
      u0, t_stop, max_steps, [&](const FlowField& f) { return predict_dt(cfl, f, gas, stats); },
      [&](const FlowField& f, double dt) { return advance_with_net(solver, f, dt, stats); });
}

// Cellwise linear interpolation of the predicted snapshots onto ref_times.
inline std::vector<FlowField> interpolate_to_grid(const Trajectory& pred,
                                                  std::span<const double> ref_times) {
  pred.validate();
  if (pred.size() == 0) throw DegenerateError("interpolate_to_grid: empty trajectory");
  const auto& t = pred.times;
  std::vector<FlowField> out;
  out.reserve(ref_times.size());
  for (double q : ref_times) {
    if (q < t.front() || q > t.back())
      throw ExtrapolationError("interpolate_to_grid: time " + std::to_string(q) +
                               " outside [" + std::to_string(t.front()) + ", " +
                               std::to_string(t.back()) + "]");
    const auto hi = static_cast<std::size_t>(std::lower_bound(t.begin(), t.end(), q) - t.begin());
    if (t[hi] == q) {
      out.push_back(pred.snapshots[hi]);
      continue;
    }
    const double w = (q - t[hi - 1]) / (t[hi] - t[hi - 1]);
    const FlowField& a = pred.snapshots[hi - 1];
    const FlowField& b = pred.snapshots[hi];
    FlowField f(a.grid);
    for (std::size_t k = 0; k < kNumFlowFields; ++k)
      for (std::size_t c = 0; c < f.grid.cells(); ++c)
        f.field(k).data[c] = (1.0 - w) * a.field(k).data[c] + w * b.field(k).data[c];
    out.push_back(std::move(f));
  }
  return out;
}

// Ground-truth timestep seen at each query time: the interval of the
// reference grid that contains it (the last interval past the end).
inline std::vector<double> resample_dt(const Trajectory& truth, std::span<const double> query) {
  if (truth.size() < 2) throw DegenerateError("resample_dt: need at least 2 snapshots");
  const auto d = truth.dts();
  std::vector<double> out;
  for (double q : query) {
    const auto it = std::upper_bound(truth.times.begin(), truth.times.end(), q);
    const auto k = static_cast<std::size_t>(std::max<std::ptrdiff_t>(it - truth.times.begin() - 1, 0));
    out.push_back(d[std::min(k, d.size() - 1)]);
  }
  return out;
}

inline void write_dt_csv(const std::string& path, const RolloutResult& r,
                         const Trajectory* truth = nullptr) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open for writing: " + path);
  out.precision(17);
  const auto d = r.dts();
  std::vector<double> starts(r.predicted.times.begin(), r.predicted.times.end() - 1);
  const auto ref = truth ? resample_dt(*truth, starts) : std::vector<double>{};
  out << "step,time,dt" << (truth ? ",true_dt" : "") << '\n';
  for (std::size_t j = 0; j < d.size(); ++j) {
    out << j << ',' << starts[j] << ',' << d[j];
    if (truth) out << ',' << ref[j];
    out << '\n';
  }
  if (!out) throw FormatError("write failed: " + path);
}

}  // namespace shockcast
