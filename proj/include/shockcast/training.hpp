#pragma once

// Mini-batch Adam loop with a cosine schedule, plus helpers for packing
// z-scored flow states into tensors.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <vector>

#include "json.hpp"
#include "shockcast/dataset.hpp"
#include "shockcast/optim.hpp"

namespace shockcast {

// Independent stream seed from a master seed (splitmix64 finalizer).
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

enum SeedStream : std::uint64_t { init_stream = 1, shuffle_stream = 2, noise_stream = 3 };

struct TrainConfig {
  std::size_t epochs = 50;
  std::size_t batch_size = 16;
  double lr = 1e-3;
  std::uint64_t seed = 0;

  void validate() const {
    if (epochs == 0 || batch_size == 0) throw ConfigError("train: epochs and batch_size >= 1");
    if (!(lr > 0.0)) throw ConfigError("train: lr must be positive");
  }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"epochs", c.epochs}, {"batch_size", c.batch_size}, {"lr", c.lr}, {"seed", c.seed}};
}
inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  TrainConfig d;
  c.epochs = j.value("epochs", d.epochs);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.lr = j.value("lr", d.lr);
  c.seed = j.value("seed", d.seed);
}

struct TrainLog {
  std::vector<double> epoch_loss;  // sample-weighted mean over each epoch
  double seconds = 0.0;
};

using EpochCallback = std::function<void(std::size_t epoch, double loss)>;

// Runs cfg.epochs passes over n samples in shuffled mini-batches.
// batch_loss(indices) must return a scalar loss averaged over the batch.
template <class T, class LossFn>
TrainLog fit(ad::ParamSet<T>& params, std::size_t n, const TrainConfig& cfg, LossFn&& batch_loss,
             const EpochCallback& on_epoch = {}) {
  cfg.validate();
  if (n == 0) throw ArgumentError("fit: no training samples");
  std::mt19937_64 shuffle_rng(derive_seed(cfg.seed, shuffle_stream));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t total = per_epoch * cfg.epochs;
  ad::Adam<T> adam;
  TrainLog log;
  const auto start = std::chrono::steady_clock::now();
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double sum = 0.0;
    for (std::size_t b = 0; b < per_epoch; ++b) {
      const std::size_t lo = b * cfg.batch_size, hi = std::min(n, lo + cfg.batch_size);
      std::vector<std::size_t> idx(order.begin() + lo, order.begin() + hi);
      params.zero_grad();
      ad::Tensor<T> loss = batch_loss(idx);
      const double value = static_cast<double>(loss.item());
      if (!std::isfinite(value)) throw DivergenceError("training loss is not finite", epoch);
      ad::backward(loss);
      adam.step(params, ad::cosine_lr(adam.steps(), total, cfg.lr));
      sum += value * static_cast<double>(idx.size());
    }
    log.epoch_loss.push_back(sum / static_cast<double>(n));
    if (on_epoch) on_epoch(epoch, log.epoch_loss.back());
  }
  log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return log;
}

// Field channels z-scored with the stats, laid out (4, ny, nx).
inline std::vector<float> normalize_state(const FlowField& f, const NormStats& s) {
  const std::size_t hw = f.grid.cells();
  std::vector<float> out(kNumFlowFields * hw);
  for (std::size_t k = 0; k < kNumFlowFields; ++k) {
    const auto& v = f.field(k).data;
    for (std::size_t p = 0; p < hw; ++p)
      out[k * hw + p] = static_cast<float>((v[p] - s.fields.mean[k]) / s.fields.std[k]);
  }
  return out;
}

template <class T>
FlowField denormalize_state(const T* z, const Grid2D& grid, const NormStats& s) {
  FlowField f(grid);
  const std::size_t hw = grid.cells();
  for (std::size_t k = 0; k < kNumFlowFields; ++k) {
    auto& v = f.field(k).data;
    for (std::size_t p = 0; p < hw; ++p)
      v[p] = static_cast<double>(z[k * hw + p]) * s.fields.std[k] + s.fields.mean[k];
  }
  return f;
}

// Stacks per-sample rows of equal length into an (N, shape...) tensor.
template <class T>
ad::Tensor<T> stack_rows(const std::vector<std::vector<float>>& rows,
                         const std::vector<std::size_t>& idx, const ad::Shape& sample_shape) {
  const std::size_t m = ad::numel(sample_shape);
  std::vector<T> v(idx.size() * m);
  for (std::size_t b = 0; b < idx.size(); ++b) {
    const auto& r = rows[idx[b]];
    if (r.size() != m) throw ShapeError("stack_rows: row size mismatch");
    std::copy(r.begin(), r.end(), v.begin() + static_cast<std::ptrdiff_t>(b * m));
  }
  ad::Shape shape{idx.size()};
  shape.insert(shape.end(), sample_shape.begin(), sample_shape.end());
  return ad::Tensor<T>(std::move(shape), std::move(v));
}

}  // namespace shockcast
