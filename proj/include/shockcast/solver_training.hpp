#pragma once

#include <span>
#include <vector>

#include "json.hpp"
#include "shockcast/solver_net.hpp"
#include "shockcast/training.hpp"

namespace shockcast {

inline constexpr double kRelativeLossFloor = 1e-8;

// Z-scored states and the one-step pairs (j, j + 1) between them.
struct SolverSamples {
  struct Pair {
    std::size_t current, next;
    float dt;  // normalized
  };
  ad::Shape state_shape;
  std::vector<std::vector<float>> states;
  std::vector<Pair> pairs;
};

inline SolverSamples make_solver_samples(std::span<const Trajectory> cases,
                                         const NormStats& stats) {
  SolverSamples s;
  for (const Trajectory& tr : cases) {
    const std::size_t base = s.states.size();
    for (const FlowField& f : tr.snapshots) {
      if (s.states.empty()) s.state_shape = {kNumFlowFields, f.grid.ny, f.grid.nx};
      s.states.push_back(normalize_state(f, stats));
    }
    const auto d = tr.dts();
    for (std::size_t j = 0; j < d.size(); ++j)
      s.pairs.push_back({base + j, base + j + 1, static_cast<float>(stats.normalize_dt(d[j]))});
  }
  return s;
}

namespace detail {

struct PairBatch {
  std::vector<std::size_t> current, next;
  std::vector<float> dt;
};

inline PairBatch gather_pairs(const SolverSamples& s, std::span<const std::size_t> idx) {
  PairBatch b;
  for (auto i : idx) {
    b.current.push_back(s.pairs[i].current);
    b.next.push_back(s.pairs[i].next);
    b.dt.push_back(s.pairs[i].dt);
  }
  return b;
}

}  // namespace detail

inline TrainLog train_solver(SolverNet<float>& net, const SolverSamples& data,
                             const TrainConfig& cfg, const EpochCallback& on_epoch = {}) {
  auto loss = [&](const std::vector<std::size_t>& idx) {
    const auto b = detail::gather_pairs(data, idx);
    auto x = stack_rows<float>(data.states, b.current, data.state_shape);
    auto y = stack_rows<float>(data.states, b.next, data.state_shape);
    return ad::relative_l2_loss(net.forward(x, b.dt), y, static_cast<float>(kRelativeLossFloor));
  };
  return fit(net.params(), data.pairs.size(), cfg, loss, on_epoch);
}

// Training objective evaluated over every pair, averaged per pair.
inline double solver_one_step_loss(const SolverNet<float>& net, const SolverSamples& data,
                                   std::size_t batch = 16) {
  ad::NoGradGuard guard;
  double sum = 0.0;
  std::vector<std::size_t> all(data.pairs.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  for (std::size_t lo = 0; lo < all.size(); lo += batch) {
    const std::size_t hi = std::min(all.size(), lo + batch);
    const auto b = detail::gather_pairs(data, std::span(all).subspan(lo, hi - lo));
    auto x = stack_rows<float>(data.states, b.current, data.state_shape);
    auto y = stack_rows<float>(data.states, b.next, data.state_shape);
    auto l = ad::relative_l2_loss(net.forward(x, b.dt), y, static_cast<float>(kRelativeLossFloor));
    sum += static_cast<double>(l.item()) * static_cast<double>(hi - lo);
  }
  return sum / static_cast<double>(all.size());
}

// Same objective for the predictor that returns its input unchanged.
inline double identity_one_step_loss(const SolverSamples& data) {
  const std::size_t C = data.state_shape.at(0);
  const std::size_t hw = data.state_shape.at(1) * data.state_shape.at(2);
  double sum = 0.0;
  for (const auto& p : data.pairs) {
    const auto& a = data.states[p.current];
    const auto& b = data.states[p.next];
    double per = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
      double d2 = 0.0, t2 = 0.0;
      for (std::size_t k = c * hw; k < (c + 1) * hw; ++k) {
        const double d = static_cast<double>(a[k]) - static_cast<double>(b[k]);
        d2 += d * d;
        t2 += static_cast<double>(b[k]) * static_cast<double>(b[k]);
      }
      per += std::sqrt(d2) / std::max(std::sqrt(t2), kRelativeLossFloor);
    }
    sum += per / static_cast<double>(C);
  }
  return sum / static_cast<double>(data.pairs.size());
}

}  // namespace shockcast
