#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <initializer_list>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "shockcast/container.hpp"
#include "shockcast/error.hpp"
#include "shockcast/euler_solver.hpp"
#include "shockcast/fields.hpp"

namespace shockcast {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Coarsening

// Mean over s x s blocks of every field; the grid spacing grows by s.
inline FlowField block_average(const FlowField& f, std::size_t s) {
  if (s == 0 || f.grid.nx % s != 0 || f.grid.ny % s != 0)
    throw ArgumentError("block_average: factor must divide nx and ny");
  if (s == 1) return f;
  const Grid2D& g = f.grid;
  FlowField out(Grid2D(g.nx / s, g.ny / s, g.dx * static_cast<double>(s),
                       g.dy * static_cast<double>(s), g.x0, g.y0));
  const double inv = 1.0 / static_cast<double>(s * s);
  for (std::size_t k = 0; k < kNumFlowFields; ++k) {
    const Field2D& src = f.field(k);
    Field2D& dst = out.field(k);
    for (std::size_t J = 0; J < dst.ny; ++J)
      for (std::size_t I = 0; I < dst.nx; ++I) {
        double acc = 0.0;
        for (std::size_t b = 0; b < s; ++b)
          for (std::size_t a = 0; a < s; ++a) acc += src(I * s + a, J * s + b);
        dst(I, J) = acc * inv;
      }
  }
  return out;
}

// Indices 0, J, 2J, ... plus the last one if the stride misses it.
inline std::vector<std::size_t> strided_indices(std::size_t n, std::size_t stride) {
  if (stride == 0) throw ArgumentError("strided_indices: stride must be >= 1");
  std::vector<std::size_t> idx;
  for (std::size_t k = 0; k < n; k += stride) idx.push_back(k);
  if (n > 0 && idx.back() != n - 1) idx.push_back(n - 1);
  return idx;
}

inline Trajectory coarsen_trajectory(const Trajectory& traj, std::size_t time_stride,
                                     std::size_t space_factor) {
  traj.validate();
  if (time_stride == 0) throw ArgumentError("coarsen_trajectory: time stride must be >= 1");
  if (traj.size() < 2)
    throw DegenerateError("coarsen_trajectory: fewer than 2 snapshots");
  const auto idx = strided_indices(traj.size(), time_stride);
  if (idx.size() < 2)
    throw DegenerateError("coarsen_trajectory: fewer than 2 surviving snapshots");
  Trajectory out;
  out.snapshots.reserve(idx.size());
  for (std::size_t k : idx) {
    out.snapshots.push_back(block_average(traj.snapshots[k], space_factor));
    out.times.push_back(traj.times[k]);
  }
  return out;
}

// Number of snapshots coarsen_trajectory keeps from n fine snapshots.
inline std::size_t coarse_count(std::size_t n, std::size_t stride) {
  return (n - 1) / stride + 1 + ((n - 1) % stride != 0 ? 1 : 0);
}

// ---------------------------------------------------------------------------
// Normalization statistics

struct ChannelStats {
  std::vector<double> mean;
  std::vector<double> std;

  std::size_t size() const { return mean.size(); }
};

// Feature groups beyond the four base fields.
inline constexpr std::size_t kGradientChannels = 2 * kNumFlowFields;
inline constexpr std::size_t kCflChannels = 4;  // lambda, |u|, |v|, a

struct NormStats {
  ChannelStats fields;                 // density, velocity_x, velocity_y, temperature
  double dt_mean = 0.0;
  double dt_std = 1.0;
  double dt_min = 0.0;
  double dt_max = 0.0;
  std::optional<ChannelStats> gradients;  // d/dx, d/dy of each field, interleaved
  std::optional<ChannelStats> cfl;

  double normalize_dt(double dt) const { return (dt - dt_mean) / dt_std; }
  double denormalize_dt(double z) const { return z * dt_std + dt_mean; }
};

namespace detail {

// Two-pass mean and sample standard deviation per channel.
class MomentAccumulator {
 public:
  explicit MomentAccumulator(std::size_t channels)
      : sum_(channels, 0.0), sq_(channels, 0.0), count_(channels, 0) {}

  void add_mean(std::size_t c, std::span<const double> v) {
    for (double x : v) sum_[c] += x;
    count_[c] += v.size();
  }
  void freeze_means() {
    mean_.resize(sum_.size());
    for (std::size_t c = 0; c < sum_.size(); ++c)
      mean_[c] = sum_[c] / static_cast<double>(count_[c]);
  }
  void add_var(std::size_t c, std::span<const double> v) {
    for (double x : v) {
      const double d = x - mean_[c];
      sq_[c] += d * d;
    }
  }
  ChannelStats finish(const std::string& group) const {
    ChannelStats s;
    s.mean = mean_;
    s.std.resize(mean_.size());
    for (std::size_t c = 0; c < mean_.size(); ++c) {
      if (count_[c] < 2)
        throw ConfigError("compute_norm_stats: too few samples for " + group);
      s.std[c] = std::sqrt(sq_[c] / static_cast<double>(count_[c] - 1));
      if (!(s.std[c] > 0.0))
        throw ConfigError("compute_norm_stats: zero variance in " + group + " channel " +
                          std::to_string(c));
    }
    return s;
  }

 private:
  std::vector<double> sum_, sq_, mean_;
  std::vector<std::size_t> count_;
};

inline std::array<Field2D, kCflChannels> cfl_channels(const FlowField& f,
                                                      const GasModel& gas) {
  Field2D a = sound_speed(f, gas);
  Field2D au(f.grid), av(f.grid), lam(f.grid);
  for (std::size_t k = 0; k < a.size(); ++k) {
    au.data[k] = std::abs(f.u.data[k]);
    av.data[k] = std::abs(f.v.data[k]);
    lam.data[k] = std::max(au.data[k] + a.data[k], av.data[k] + a.data[k]);
  }
  return {std::move(lam), std::move(au), std::move(av), std::move(a)};
}

inline std::array<Field2D, kGradientChannels> gradient_channels(const FlowField& f) {
  auto g = spatial_gradients(f);
  std::array<Field2D, kGradientChannels> out;
  for (std::size_t k = 0; k < kNumFlowFields; ++k) {
    out[2 * k] = std::move(g[k].ddx);
    out[2 * k + 1] = std::move(g[k].ddy);
  }
  return out;
}

}  // namespace detail

// Physical CFL feature maps (lambda, |u|, |v|, a) of one state.
inline std::array<Field2D, kCflChannels> cfl_feature_maps(const FlowField& f,
                                                          const GasModel& gas) {
  return detail::cfl_channels(f, gas);
}

inline std::array<Field2D, kGradientChannels> gradient_feature_maps(const FlowField& f) {
  return detail::gradient_channels(f);
}

// Z-score statistics over every cell of every snapshot of the training cases.
inline NormStats compute_norm_stats(std::span<const Trajectory> train,
                                    const GasModel& gas) {
  if (train.empty()) throw ArgumentError("compute_norm_stats: no training cases");
  detail::MomentAccumulator fields(kNumFlowFields), grads(kGradientChannels),
      cfl(kCflChannels), dts(1);

  auto visit = [&](bool second_pass) {
    for (const Trajectory& tr : train) {
      const auto d = tr.dts();
      second_pass ? dts.add_var(0, d) : dts.add_mean(0, d);
      for (const FlowField& f : tr.snapshots) {
        for (std::size_t k = 0; k < kNumFlowFields; ++k)
          second_pass ? fields.add_var(k, f.field(k).values())
                      : fields.add_mean(k, f.field(k).values());
        const auto g = detail::gradient_channels(f);
        for (std::size_t k = 0; k < kGradientChannels; ++k)
          second_pass ? grads.add_var(k, g[k].values()) : grads.add_mean(k, g[k].values());
        const auto c = detail::cfl_channels(f, gas);
        for (std::size_t k = 0; k < kCflChannels; ++k)
          second_pass ? cfl.add_var(k, c[k].values()) : cfl.add_mean(k, c[k].values());
      }
    }
  };
  visit(false);
  fields.freeze_means();
  grads.freeze_means();
  cfl.freeze_means();
  dts.freeze_means();
  visit(true);

  NormStats s;
  s.fields = fields.finish("field");
  s.gradients = grads.finish("gradient");
  s.cfl = cfl.finish("cfl");
  const ChannelStats d = dts.finish("dt");
  s.dt_mean = d.mean[0];
  s.dt_std = d.std[0];
  s.dt_min = std::numeric_limits<double>::infinity();
  s.dt_max = 0.0;
  for (const Trajectory& tr : train)
    for (double v : tr.dts()) {
      s.dt_min = std::min(s.dt_min, v);
      s.dt_max = std::max(s.dt_max, v);
    }
  return s;
}

inline void to_json(json& j, const ChannelStats& s) {
  j = json{{"mean", s.mean}, {"std", s.std}};
}
inline void from_json(const json& j, ChannelStats& s) {
  j.at("mean").get_to(s.mean);
  j.at("std").get_to(s.std);
  if (s.mean.size() != s.std.size()) throw FormatError("norm stats: mean/std size mismatch");
}

inline void to_json(json& j, const NormStats& s) {
  j = json{{"fields", s.fields},
           {"dt", {{"mean", s.dt_mean}, {"std", s.dt_std}, {"min", s.dt_min}, {"max", s.dt_max}}}};
  if (s.gradients) j["gradients"] = *s.gradients;
  if (s.cfl) j["cfl"] = *s.cfl;
}
inline void from_json(const json& j, NormStats& s) {
  j.at("fields").get_to(s.fields);
  const json& d = j.at("dt");
  s.dt_mean = d.at("mean").get<double>();
  s.dt_std = d.at("std").get<double>();
  s.dt_min = d.at("min").get<double>();
  s.dt_max = d.at("max").get<double>();
  if (j.contains("gradients")) s.gradients = j.at("gradients").get<ChannelStats>();
  if (j.contains("cfl")) s.cfl = j.at("cfl").get<ChannelStats>();
  if (s.fields.size() != kNumFlowFields) throw FormatError("norm stats: expected 4 fields");
}

// ---------------------------------------------------------------------------
// Manifest

enum class Split { train, eval };

inline const char* to_string(Split s) { return s == Split::train ? "train" : "eval"; }

inline void to_json(json& j, const Grid2D& g) {
  j = json{{"nx", g.nx}, {"ny", g.ny}, {"dx", g.dx}, {"dy", g.dy}, {"x0", g.x0}, {"y0", g.y0}};
}
inline void from_json(const json& j, Grid2D& g) {
  g = Grid2D(j.at("nx").get<std::size_t>(), j.at("ny").get<std::size_t>(),
             j.at("dx").get<double>(), j.at("dy").get<double>(), j.at("x0").get<double>(),
             j.at("y0").get<double>());
}

struct CaseManifest {
  std::string case_id;
  std::string file;  // relative to the dataset directory
  double pressure_ratio = 2.0;
  double r_blast = 0.05;
  Grid2D solver_grid;
  Grid2D grid;  // stored (coarse) grid
  std::size_t coarsen_time = 1;
  std::size_t coarsen_space = 1;
  Split split = Split::train;
  std::size_t n_snapshots = 0;
  std::size_t fine_steps = 0;
  double t_end = 0.0;

  // Byte offsets inside the case file.
  std::size_t times_offset() const { return kSnapshotHeaderBytes; }
  std::size_t snapshots_offset() const { return kSnapshotHeaderBytes + 8 * n_snapshots; }
  std::size_t snapshot_bytes() const { return kNumFlowFields * grid.nx * grid.ny * 4; }

  void validate() const {
    if (coarsen_time < 1) throw FormatError("CaseManifest: coarsen_time must be >= 1");
    if (coarsen_space < 1 || solver_grid.nx % coarsen_space != 0 ||
        solver_grid.ny % coarsen_space != 0)
      throw FormatError("CaseManifest: coarsen_space must divide the solver grid");
    if (grid.nx * coarsen_space != solver_grid.nx || grid.ny * coarsen_space != solver_grid.ny)
      throw FormatError("CaseManifest: stored grid inconsistent with coarsen_space");
  }
};

inline void to_json(json& j, const CaseManifest& c) {
  j = json{{"case_id", c.case_id},
           {"file", c.file},
           {"pressure_ratio", c.pressure_ratio},
           {"r_blast", c.r_blast},
           {"solver_grid", c.solver_grid},
           {"grid", c.grid},
           {"coarsen_time", c.coarsen_time},
           {"coarsen_space", c.coarsen_space},
           {"split", to_string(c.split)},
           {"n_snapshots", c.n_snapshots},
           {"fine_steps", c.fine_steps},
           {"t_end", c.t_end},
           {"offsets",
            {{"times", c.times_offset()},
             {"snapshots", c.snapshots_offset()},
             {"snapshot_bytes", c.snapshot_bytes()}}}};
}

inline void from_json(const json& j, CaseManifest& c) {
  j.at("case_id").get_to(c.case_id);
  j.at("file").get_to(c.file);
  j.at("pressure_ratio").get_to(c.pressure_ratio);
  j.at("r_blast").get_to(c.r_blast);
  j.at("solver_grid").get_to(c.solver_grid);
  j.at("grid").get_to(c.grid);
  j.at("coarsen_time").get_to(c.coarsen_time);
  j.at("coarsen_space").get_to(c.coarsen_space);
  const std::string split = j.at("split").get<std::string>();
  if (split == "train")
    c.split = Split::train;
  else if (split == "eval")
    c.split = Split::eval;
  else
    throw FormatError("CaseManifest: unknown split '" + split + "'");
  j.at("n_snapshots").get_to(c.n_snapshots);
  j.at("fine_steps").get_to(c.fine_steps);
  j.at("t_end").get_to(c.t_end);
  c.validate();
}

struct DatasetManifest {
  GasModel gas;
  std::vector<CaseManifest> cases;
  NormStats stats;

  std::vector<const CaseManifest*> split(Split s) const {
    std::vector<const CaseManifest*> out;
    for (const auto& c : cases)
      if (c.split == s) out.push_back(&c);
    return out;
  }
};

inline void to_json(json& j, const DatasetManifest& m) {
  j = json{{"format", "SHKC"},
           {"version", kContainerVersion},
           {"fields", kFlowFieldNames},
           {"gas", {{"gamma", m.gas.gamma}, {"r_gas", m.gas.r_gas}}},
           {"cases", m.cases},
           {"norm_stats", m.stats}};
}

inline void from_json(const json& j, DatasetManifest& m) {
  if (j.at("format").get<std::string>() != "SHKC" ||
      j.at("version").get<std::uint32_t>() != kContainerVersion)
    throw FormatError("dataset manifest: unsupported format or version");
  m.gas.gamma = j.at("gas").at("gamma").get<double>();
  m.gas.r_gas = j.at("gas").at("r_gas").get<double>();
  j.at("cases").get_to(m.cases);
  j.at("norm_stats").get_to(m.stats);
}

// ---------------------------------------------------------------------------
// Case files

inline SnapshotBlock to_block(const Trajectory& traj) {
  traj.validate();
  if (traj.size() == 0) throw DegenerateError("to_block: empty trajectory");
  const Grid2D& g = traj.snapshots.front().grid;
  SnapshotBlock b;
  b.nx = static_cast<std::uint32_t>(g.nx);
  b.ny = static_cast<std::uint32_t>(g.ny);
  b.n_fields = static_cast<std::uint32_t>(kNumFlowFields);
  b.times = traj.times;
  b.data.reserve(traj.size() * b.snapshot_stride());
  for (const FlowField& f : traj.snapshots) {
    if (f.grid.nx != g.nx || f.grid.ny != g.ny)
      throw ShapeError("to_block: snapshots differ in shape");
    for (const Field2D* fld : f.fields())
      for (double v : fld->data) b.data.push_back(static_cast<float>(v));
  }
  return b;
}

inline Trajectory from_block(const SnapshotBlock& b, const Grid2D& grid) {
  if (b.nx != grid.nx || b.ny != grid.ny)
    throw FormatError("case file shape " + std::to_string(b.nx) + "x" + std::to_string(b.ny) +
                      " does not match manifest grid");
  if (b.n_fields != kNumFlowFields) throw FormatError("case file: expected 4 fields");
  Trajectory traj;
  traj.times = b.times;
  const std::size_t cells = grid.cells();
  for (std::size_t n = 0; n < b.n_snapshots(); ++n) {
    FlowField f(grid);
    const float* src = b.data.data() + n * b.snapshot_stride();
    for (std::size_t k = 0; k < kNumFlowFields; ++k)
      for (std::size_t c = 0; c < cells; ++c) f.field(k).data[c] = src[k * cells + c];
    traj.snapshots.push_back(std::move(f));
  }
  return traj;
}

inline void write_case(const std::string& path, const Trajectory& traj) {
  write_snapshot_block(path, to_block(traj));
}

inline Trajectory read_case(const std::string& path, const CaseManifest& manifest) {
  const SnapshotBlock b = read_snapshot_block(path);
  if (manifest.n_snapshots != 0 && b.n_snapshots() != manifest.n_snapshots)
    throw FormatError("case file " + path + ": snapshot count does not match manifest");
  return from_block(b, manifest.grid);
}

// ---------------------------------------------------------------------------
// Case sweep

struct DatasetConfig {
  std::size_t n_cases = 20;
  std::size_t n_eval = 2;
  double ratio_min = 2.0;
  double ratio_max = 20.0;
  std::size_t solver_cells = 64;
  double length = 0.25;
  double r_blast_fraction = 0.2;
  std::size_t coarsen_space = 2;
  std::size_t time_stride = 8;  // shared by every case
  std::size_t min_snapshots = 60;
  std::size_t max_snapshots = 120;
  SolverConfig solver;

  void validate() const {
    solver.validate();
    if (n_cases < 2) throw ConfigError("dataset: need at least 2 cases");
    if (n_eval < 1 || n_eval >= n_cases) throw ConfigError("dataset: need 1 <= n_eval < n_cases");
    if (!(ratio_min > 1.0 && ratio_max >= ratio_min))
      throw ConfigError("dataset: pressure ratios must satisfy 1 < min <= max");
    if (coarsen_space == 0 || solver_cells % coarsen_space != 0)
      throw ConfigError("dataset: coarsen_space must divide solver_cells");
    if (time_stride == 0) throw ConfigError("dataset: time_stride must be positive");
    if (min_snapshots < 2 || min_snapshots > max_snapshots)
      throw ConfigError("dataset: need 2 <= min_snapshots <= max_snapshots");
    if (!(length > 0.0) || !(r_blast_fraction > 0.0))
      throw ConfigError("dataset: length and r_blast_fraction must be positive");
  }
};

namespace detail {

// Rejects keys a config section does not define.
inline void check_keys(const json& j, std::initializer_list<const char*> allowed,
                       const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* k : allowed) known = known || item.key() == k;
    if (!known) throw ConfigError(where + ": unknown key '" + item.key() + "'");
  }
}

}  // namespace detail

NLOHMANN_JSON_SERIALIZE_ENUM(BoundaryKind, {{BoundaryKind::symmetry, "symmetry"},
                                            {BoundaryKind::open, "open"}})
NLOHMANN_JSON_SERIALIZE_ENUM(FluxKind, {{FluxKind::hll, "hll"}, {FluxKind::hllc, "hllc"}})
NLOHMANN_JSON_SERIALIZE_ENUM(Reconstruction, {{Reconstruction::first_order, "first_order"},
                                              {Reconstruction::muscl_minmod, "muscl_minmod"}})

inline void to_json(json& j, const SolverConfig& c) {
  j = json{{"gamma", c.gas.gamma},
           {"r_gas", c.gas.r_gas},
           {"courant", c.courant},
           {"boundary", {c.boundary.x_lo, c.boundary.x_hi, c.boundary.y_lo, c.boundary.y_hi}},
           {"flux", c.flux},
           {"reconstruction", c.reconstruction},
           {"t_end", c.t_end},
           {"max_steps", c.max_steps},
           {"substeps", c.substeps}};
}

inline void from_json(const json& j, SolverConfig& c) {
  detail::check_keys(j, {"gamma", "r_gas", "courant", "boundary", "flux", "reconstruction",
                         "t_end", "max_steps", "substeps"},
                     "solver");
  const SolverConfig d;
  c.gas.gamma = j.value("gamma", d.gas.gamma);
  c.gas.r_gas = j.value("r_gas", d.gas.r_gas);
  c.courant = j.value("courant", d.courant);
  c.boundary = d.boundary;
  if (j.contains("boundary")) {
    const auto b = j.at("boundary").get<std::vector<BoundaryKind>>();
    if (b.size() != 4) throw ConfigError("solver: boundary needs 4 entries (x_lo, x_hi, y_lo, y_hi)");
    c.boundary = {b[0], b[1], b[2], b[3]};
  }
  c.flux = j.value("flux", d.flux);
  c.reconstruction = j.value("reconstruction", d.reconstruction);
  c.t_end = j.value("t_end", d.t_end);
  c.max_steps = j.value("max_steps", d.max_steps);
  c.substeps = j.value("substeps", d.substeps);
}

inline void to_json(json& j, const DatasetConfig& c) {
  j = json{{"n_cases", c.n_cases},
           {"n_eval", c.n_eval},
           {"ratio_min", c.ratio_min},
           {"ratio_max", c.ratio_max},
           {"solver_cells", c.solver_cells},
           {"length", c.length},
           {"r_blast_fraction", c.r_blast_fraction},
           {"coarsen_space", c.coarsen_space},
           {"time_stride", c.time_stride},
           {"min_snapshots", c.min_snapshots},
           {"max_snapshots", c.max_snapshots},
           {"solver", c.solver}};
}

inline void from_json(const json& j, DatasetConfig& c) {
  detail::check_keys(j, {"n_cases", "n_eval", "ratio_min", "ratio_max", "solver_cells", "length",
                         "r_blast_fraction", "coarsen_space", "time_stride", "min_snapshots",
                         "max_snapshots", "solver"},
                     "dataset");
  const DatasetConfig d;
  c.n_cases = j.value("n_cases", d.n_cases);
  c.n_eval = j.value("n_eval", d.n_eval);
  c.ratio_min = j.value("ratio_min", d.ratio_min);
  c.ratio_max = j.value("ratio_max", d.ratio_max);
  c.solver_cells = j.value("solver_cells", d.solver_cells);
  c.length = j.value("length", d.length);
  c.r_blast_fraction = j.value("r_blast_fraction", d.r_blast_fraction);
  c.coarsen_space = j.value("coarsen_space", d.coarsen_space);
  c.time_stride = j.value("time_stride", d.time_stride);
  c.min_snapshots = j.value("min_snapshots", d.min_snapshots);
  c.max_snapshots = j.value("max_snapshots", d.max_snapshots);
  c.solver = j.contains("solver") ? j.at("solver").get<SolverConfig>() : d.solver;
}

// Log-spaced pressure ratios, endpoints included.
inline std::vector<double> pressure_ratio_sweep(const DatasetConfig& cfg) {
  std::vector<double> r(cfg.n_cases);
  const double lo = std::log(cfg.ratio_min);
  const double hi = std::log(cfg.ratio_max);
  for (std::size_t k = 0; k < cfg.n_cases; ++k) {
    const double f = static_cast<double>(k) / static_cast<double>(cfg.n_cases - 1);
    r[k] = std::exp(lo + f * (hi - lo));
  }
  r.front() = cfg.ratio_min;
  r.back() = cfg.ratio_max;
  return r;
}

// Evenly spread eval cases; the sweep endpoints stay in training.
inline std::vector<Split> assign_splits(std::size_t n_cases, std::size_t n_eval) {
  if (n_eval == 0 || n_eval >= n_cases) throw ConfigError("assign_splits: bad n_eval");
  std::vector<Split> s(n_cases, Split::train);
  for (std::size_t k = 0; k < n_eval; ++k) {
    const auto idx = static_cast<std::size_t>(
        (static_cast<double>(k) + 0.5) * static_cast<double>(n_cases) /
        static_cast<double>(n_eval));
    s[std::min(idx, n_cases - 1)] = Split::eval;
  }
  return s;
}

inline std::string case_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "case_%03zu", index);
  return buf;
}

struct GeneratedCase {
  CaseManifest manifest;
  Trajectory coarse;
};

inline GeneratedCase generate_case(const DatasetConfig& cfg, std::size_t index,
                                   double pressure_ratio, Split split) {
  const Grid2D grid = Grid2D::square(cfg.solver_cells, cfg.length);
  const double r_blast = cfg.r_blast_fraction * cfg.length;
  const FlowField init = init_circular_blast(grid, pressure_ratio, cfg.solver.gas, r_blast);
  Trajectory fine = simulate(init, cfg.solver);
  const std::size_t J = cfg.time_stride;
  const std::size_t n = coarse_count(fine.size(), J);
  if (n < cfg.min_snapshots || n > cfg.max_snapshots)
    throw DegenerateError(case_name(index) + ": stride " + std::to_string(J) + " keeps " +
                          std::to_string(n) + " snapshots, outside " +
                          std::to_string(cfg.min_snapshots) + ".." +
                          std::to_string(cfg.max_snapshots));

  GeneratedCase out;
  out.coarse = coarsen_trajectory(fine, J, cfg.coarsen_space);
  CaseManifest& m = out.manifest;
  m.case_id = case_name(index);
  m.file = m.case_id + ".shkc";
  m.pressure_ratio = pressure_ratio;
  m.r_blast = r_blast;
  m.solver_grid = grid;
  m.grid = out.coarse.snapshots.front().grid;
  m.coarsen_time = J;
  m.coarsen_space = cfg.coarsen_space;
  m.split = split;
  m.n_snapshots = out.coarse.size();
  m.fine_steps = fine.size() - 1;
  m.t_end = fine.times.back();
  return out;
}

}  // namespace shockcast
