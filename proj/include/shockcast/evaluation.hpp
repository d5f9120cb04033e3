#pragma once

// Scores a trained (timestep model, solver) pair against a reference
// trajectory: one-step and unrolled errors, correlation time, mean flow, TKE
// and timestep tracking.

#include <string>
#include <vector>

#include "shockcast/metrics.hpp"
#include "shockcast/rollout.hpp"

namespace shockcast {

struct EvalOptions {
  double corr_threshold = 0.9;
  // Relative-error denominator floor per field; 0 leaves a field unclamped.
  std::array<double, kNumFlowFields> clamp{0.0, 0.0, 0.0, 0.0};
};

// Predicted trajectory cut at t_stop, the crossing snapshot replaced by its
// interpolant at t_stop.
inline Trajectory clip_to(const Trajectory& pred, double t_stop) {
  Trajectory out;
  for (std::size_t j = 0; j < pred.size() && pred.times[j] < t_stop; ++j) {
    out.snapshots.push_back(pred.snapshots[j]);
    out.times.push_back(pred.times[j]);
  }
  const double end[] = {t_stop};
  out.snapshots.push_back(interpolate_to_grid(pred, end).front());
  out.times.push_back(t_stop);
  return out;
}

struct CaseEvaluation {
  EvalReport report;
  RolloutResult rollout;
};

inline CaseEvaluation evaluate_case(const CflModel<float>& cfl, const SolverNet<float>& solver,
                                    const Trajectory& truth, const GasModel& gas,
                                    const NormStats& stats, std::size_t max_steps,
                                    const EvalOptions& opt = {}) {
  truth.validate();
  if (truth.size() < 2) throw DegenerateError("evaluate_case: need at least 2 snapshots");
  const double t_stop = truth.times.back();
  CaseEvaluation ev;
  EvalReport& rep = ev.report;

  // One step from every true state with the predicted timestep.
  {
    std::array<double, kNumFlowFields> acc{};
    for (std::size_t j = 0; j + 1 < truth.size(); ++j) {
      const FlowField& cur = truth.snapshots[j];
      const FlowField next = advance_with_net(solver, cur, predict_dt(cfl, cur, gas, stats), stats);
      for (std::size_t k = 0; k < kNumFlowFields; ++k)
        acc[k] += relative_error(next.field(k), truth.snapshots[j + 1].field(k), opt.clamp[k]);
    }
    for (std::size_t k = 0; k < kNumFlowFields; ++k)
      rep.set("one_step_error", kFlowFieldNames[k], acc[k] / static_cast<double>(truth.size() - 1));
  }

  ev.rollout = shockcast_rollout(cfl, solver, truth.snapshots.front(), t_stop, gas, stats, max_steps);
  const Trajectory& pred = ev.rollout.predicted;
  const auto on_grid = interpolate_to_grid(pred, truth.times);

  {
    std::array<double, kNumFlowFields> acc{};
    for (std::size_t j = 1; j < truth.size(); ++j)
      for (std::size_t k = 0; k < kNumFlowFields; ++k)
        acc[k] += relative_error(on_grid[j].field(k), truth.snapshots[j].field(k), opt.clamp[k]);
    for (std::size_t k = 0; k < kNumFlowFields; ++k)
      rep.set("unrolled_error", kFlowFieldNames[k], acc[k] / static_cast<double>(truth.size() - 1));
  }

  {
    auto corr = correlation_series(on_grid, truth.snapshots);
    double mean = 0.0;
    for (std::size_t k = 0; k < kNumFlowFields; ++k) {
      // Snapshot 0 is the given initial condition, not a prediction; the gas
      // starts at rest, so the velocity correlation there is undefined.
      corr[k][0] = 1.0;
      const double p = correlation_time_proportion(corr[k], truth.times, opt.corr_threshold);
      rep.set("correlation_time", kFlowFieldNames[k], p);
      mean += p;
    }
    rep.set("correlation_time", "mean", mean / static_cast<double>(kNumFlowFields));
  }

  {
    const Trajectory clipped = clip_to(pred, t_stop);
    const FlowField pm = mean_flow(clipped.snapshots, clipped.times);
    const FlowField tm = mean_flow(truth.snapshots, truth.times);
    for (std::size_t k = 0; k < kNumFlowFields; ++k)
      rep.set("mean_flow_error", kFlowFieldNames[k],
              relative_error(pm.field(k), tm.field(k), opt.clamp[k]));
    rep.set("tke_error", "velocity",
            relative_error(tke(clipped.snapshots, clipped.times), tke(truth.snapshots, truth.times)));
  }

  {
    const auto d = ev.rollout.dts();
    std::vector<double> starts(pred.times.begin(), pred.times.end() - 1);
    double r = std::numeric_limits<double>::quiet_NaN();
    try {
      r = pearson(d, resample_dt(truth, starts));
    } catch (const DomainError&) {
    }
    rep.set("dt_tracking", "dt", r);
    rep.set("rollout_steps", "dt", static_cast<double>(d.size()));
  }
  return ev;
}

}  // namespace shockcast
