#pragma once

// Convolutional timestep predictor: flow state -> normalized coarse timestep.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "shockcast/layers.hpp"
#include "shockcast/training.hpp"

namespace shockcast {

enum class Pooling { max, mean };

NLOHMANN_JSON_SERIALIZE_ENUM(Pooling, {{Pooling::max, "max"}, {Pooling::mean, "mean"}})

struct CflNetConfig {
  bool use_gradient_features = false;
  bool use_cfl_features = false;
  Pooling pooling = Pooling::mean;
  std::size_t width = 16;
  std::size_t depth = 3;
  std::size_t norm_groups = 4;

  void validate() const {
    if (width < 8) throw ConfigError("cfl net: width must be >= 8");
    if (depth < 2) throw ConfigError("cfl net: depth must be >= 2");
    if (norm_groups == 0) throw ConfigError("cfl net: norm_groups must be positive");
  }

  // Channel stack: fields (4), then gradients (8), then CFL features (4).
  std::size_t input_channels() const {
    return kNumFlowFields + (use_gradient_features ? kGradientChannels : 0) +
           (use_cfl_features ? kCflChannels : 0);
  }

  std::string label() const {
    std::string s = use_gradient_features && use_cfl_features ? "both"
                    : use_gradient_features                  ? "grad"
                    : use_cfl_features                       ? "cfl"
                                                             : "base";
    return s + (pooling == Pooling::max ? "-max" : "-mean");
  }
};

inline void to_json(nlohmann::json& j, const CflNetConfig& c) {
  j = {{"use_gradient_features", c.use_gradient_features},
       {"use_cfl_features", c.use_cfl_features},
       {"pooling", c.pooling},
       {"width", c.width},
       {"depth", c.depth},
       {"norm_groups", c.norm_groups}};
}

inline void from_json(const nlohmann::json& j, CflNetConfig& c) {
  CflNetConfig d;
  c.use_gradient_features = j.value("use_gradient_features", d.use_gradient_features);
  c.use_cfl_features = j.value("use_cfl_features", d.use_cfl_features);
  c.pooling = j.value("pooling", d.pooling);
  c.width = j.value("width", d.width);
  c.depth = j.value("depth", d.depth);
  c.norm_groups = j.value("norm_groups", d.norm_groups);
}

// Input stack of one state, (channels, ny, nx), every channel z-scored.
inline std::vector<float> build_features(const FlowField& f, const CflNetConfig& cfg,
                                         const GasModel& gas, const NormStats& stats) {
  if (cfg.use_gradient_features && !stats.gradients)
    throw ConfigError("build_features: gradient features need gradient statistics");
  if (cfg.use_cfl_features && !stats.cfl)
    throw ConfigError("build_features: CFL features need CFL statistics");
  const std::size_t hw = f.grid.cells();
  std::vector<float> out = normalize_state(f, stats);
  out.reserve(cfg.input_channels() * hw);
  auto append = [&](const Field2D& m, double mean, double sd) {
    for (double v : m.data) out.push_back(static_cast<float>((v - mean) / sd));
  };
  if (cfg.use_gradient_features) {
    const auto g = gradient_feature_maps(f);
    for (std::size_t k = 0; k < kGradientChannels; ++k)
      append(g[k], stats.gradients->mean[k], stats.gradients->std[k]);
  }
  if (cfg.use_cfl_features) {
    const auto c = cfl_feature_maps(f, gas);
    for (std::size_t k = 0; k < kCflChannels; ++k)
      append(c[k], stats.cfl->mean[k], stats.cfl->std[k]);
  }
  return out;
}

template <class T>
class CflModel {
 public:
  using Tensor = ad::Tensor<T>;

  CflModel(const CflNetConfig& cfg, std::uint64_t seed) : cfg_(cfg), rng_(seed) {
    cfg_.validate();
    nn::Builder<T> b(params_, rng_);
    std::size_t in = cfg_.input_channels();
    for (std::size_t s = 0; s < cfg_.depth; ++s) {
      const std::size_t out = cfg_.width << s;
      stages_.push_back(b.conv("stage" + std::to_string(s), in, out, 3));
      in = out;
    }
    readout_ = b.linear("readout", in, 1);
  }

  CflModel(const CflModel&) = delete;
  CflModel& operator=(const CflModel&) = delete;
  CflModel(CflModel&&) = default;

  const CflNetConfig& config() const { return cfg_; }
  ad::ParamSet<T>& params() { return params_; }
  const ad::ParamSet<T>& params() const { return params_; }

  // x (N, channels, H, W) -> (N, 1) normalized timestep.
  Tensor forward(const Tensor& x) const {
    if (x.rank() != 4 || x.dim(1) != cfg_.input_channels())
      throw ShapeError("cfl model: expected (N, " + std::to_string(cfg_.input_channels()) +
                       ", H, W), got " + ad::shape_str(x.shape()));
    const std::size_t f = std::size_t{1} << cfg_.depth;
    if (x.dim(2) % f || x.dim(3) % f)
      throw ShapeError("cfl model: spatial size must be divisible by " + std::to_string(f));
    Tensor h = x;
    const bool max = cfg_.pooling == Pooling::max;
    for (const auto& conv : stages_) {
      h = ad::gelu(ad::group_norm(conv(h), nn::group_count(conv.bias.numel(), cfg_.norm_groups)));
      h = max ? ad::max_pool2d(h) : ad::avg_pool2d(h);
    }
    return readout_(max ? ad::global_max_pool(h) : ad::global_avg_pool(h));
  }

 private:
  CflNetConfig cfg_;
  std::mt19937_64 rng_;
  ad::ParamSet<T> params_;
  std::vector<nn::Conv<T>> stages_;
  nn::Linear<T> readout_;
};

// Seconds from the raw model output, clamped to the training range.
inline double predict_dt_from_output(double raw, const NormStats& stats) {
  return std::clamp(stats.denormalize_dt(raw), stats.dt_min, stats.dt_max);
}

inline double predict_dt(const CflModel<float>& model, const FlowField& f, const GasModel& gas,
                         const NormStats& stats) {
  ad::NoGradGuard guard;
  const auto feats = build_features(f, model.config(), gas, stats);
  ad::Tensor<float> x({1, model.config().input_channels(), f.grid.ny, f.grid.nx}, feats);
  return predict_dt_from_output(static_cast<double>(model.forward(x).item()), stats);
}

// Inputs and normalized targets for every (state, next timestep) pair.
struct CflSamples {
  ad::Shape sample_shape;
  std::vector<std::vector<float>> inputs;
  std::vector<float> targets;
};

inline CflSamples make_cfl_samples(std::span<const Trajectory> cases, const CflNetConfig& cfg,
                                   const GasModel& gas, const NormStats& stats) {
  CflSamples s;
  for (const Trajectory& tr : cases) {
    const auto d = tr.dts();
    for (std::size_t j = 0; j < d.size(); ++j) {
      const FlowField& f = tr.snapshots[j];
      if (s.inputs.empty()) s.sample_shape = {cfg.input_channels(), f.grid.ny, f.grid.nx};
      s.inputs.push_back(build_features(f, cfg, gas, stats));
      s.targets.push_back(static_cast<float>(stats.normalize_dt(d[j])));
    }
  }
  return s;
}

struct CflTrainConfig {
  TrainConfig train{50, 64, 1e-3, 0};
  double noise = 0.01;
};

inline void to_json(nlohmann::json& j, const CflTrainConfig& c) {
  j = c.train;
  j["noise"] = c.noise;
}
inline void from_json(const nlohmann::json& j, CflTrainConfig& c) {
  CflTrainConfig d;
  c.train = d.train;
  from_json(j, c.train);
  if (!j.contains("batch_size")) c.train.batch_size = d.train.batch_size;
  c.noise = j.value("noise", d.noise);
}

// MAE on normalized timesteps with Gaussian input noise.
inline TrainLog train_cfl(CflModel<float>& model, const CflSamples& data, const CflTrainConfig& cfg,
                          const EpochCallback& on_epoch = {}) {
  if (cfg.noise < 0.0) throw ConfigError("train_cfl: noise must be >= 0");
  std::mt19937_64 noise_rng(derive_seed(cfg.train.seed, noise_stream));
  std::normal_distribution<float> eta(0.0f, static_cast<float>(cfg.noise));
  auto loss = [&](const std::vector<std::size_t>& idx) {
    ad::Tensor<float> x = stack_rows<float>(data.inputs, idx, data.sample_shape);
    if (cfg.noise > 0.0)
      for (auto& v : x.values()) v += eta(noise_rng);
    std::vector<float> t;
    for (auto i : idx) t.push_back(data.targets[i]);
    return ad::mae_loss(model.forward(x), ad::Tensor<float>({idx.size(), 1}, t));
  };
  return fit(model.params(), data.inputs.size(), cfg.train, loss, on_epoch);
}

// Normalized predictions for every sample, batched.
inline std::vector<float> cfl_outputs(const CflModel<float>& model, const CflSamples& data,
                                      std::size_t batch = 64) {
  ad::NoGradGuard guard;
  std::vector<float> out;
  for (std::size_t lo = 0; lo < data.inputs.size(); lo += batch) {
    std::vector<std::size_t> idx;
    for (std::size_t i = lo; i < std::min(lo + batch, data.inputs.size()); ++i) idx.push_back(i);
    auto y = model.forward(stack_rows<float>(data.inputs, idx, data.sample_shape));
    out.insert(out.end(), y.values().begin(), y.values().end());
  }
  return out;
}

// Mean |prediction - target| in normalized units.
inline double cfl_mae(const CflModel<float>& model, const CflSamples& data) {
  const auto y = cfl_outputs(model, data);
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i)
    s += std::abs(static_cast<double>(y[i]) - static_cast<double>(data.targets[i]));
  return s / static_cast<double>(y.size());
}

// MAE of always predicting the training mean (normalized output 0).
inline double mean_predictor_mae(const CflSamples& data) {
  double s = 0.0;
  for (float t : data.targets) s += std::abs(static_cast<double>(t));
  return s / static_cast<double>(data.targets.size());
}

}  // namespace shockcast
