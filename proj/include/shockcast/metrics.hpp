#pragma once

// Evaluation metrics: Pearson correlation, correlation time, time-averaged
// mean flow, turbulence kinetic energy and relative errors.

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "shockcast/fields.hpp"

namespace shockcast {

inline double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("pearson: size mismatch");
  if (a.size() < 2) throw DomainError("pearson: need at least 2 samples");
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    ma += a[k];
    mb += b[k];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double da = a[k] - ma, db = b[k] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (!(saa > 0.0) || !(sbb > 0.0)) throw DomainError("pearson: zero variance");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

inline double pearson(const Field2D& a, const Field2D& b) {
  if (a.nx != b.nx || a.ny != b.ny) throw ShapeError("pearson: field shape mismatch");
  return pearson(a.values(), b.values());
}

// Pearson per field at each snapshot; NaN where the correlation is undefined.
inline std::array<std::vector<double>, kNumFlowFields> correlation_series(
    std::span<const FlowField> pred, std::span<const FlowField> truth) {
  if (pred.size() != truth.size()) throw ShapeError("correlation_series: length mismatch");
  std::array<std::vector<double>, kNumFlowFields> out;
  for (std::size_t j = 0; j < pred.size(); ++j)
    for (std::size_t k = 0; k < kNumFlowFields; ++k) {
      double r = std::numeric_limits<double>::quiet_NaN();
      try {
        r = pearson(pred[j].field(k), truth[j].field(k));
      } catch (const DomainError&) {
      }
      out[k].push_back(r);
    }
  return out;
}

// End of the initial run of correlations >= threshold, as a fraction of the
// last time. NaN counts as below threshold; a run that never starts gives 0.
inline double correlation_time_proportion(std::span<const double> corr,
                                          std::span<const double> times,
                                          double threshold = 0.9) {
  if (corr.size() != times.size() || times.empty())
    throw ShapeError("correlation_time_proportion: length mismatch");
  if (!(times.back() > 0.0))
    throw ArgumentError("correlation_time_proportion: final time must be positive");
  double reached = 0.0;
  for (std::size_t j = 0; j < corr.size(); ++j) {
    if (!(corr[j] >= threshold)) break;
    reached = times[j];
  }
  return reached / times.back();
}

namespace detail {

inline void check_time_grid(std::size_t n_snapshots, std::span<const double> times) {
  if (n_snapshots != times.size()) throw ShapeError("time integral: snapshot/time mismatch");
  if (n_snapshots < 2) throw DegenerateError("time integral: need at least 2 snapshots");
  for (std::size_t j = 0; j + 1 < times.size(); ++j)
    if (!(times[j + 1] > times[j]))
      throw ArgumentError("time integral: times must be strictly increasing");
}

// Cellwise trapezoid integral of f(j) over the time grid.
template <class Sample>
Field2D trapezoid(std::size_t nx, std::size_t ny, std::span<const double> times, Sample&& f) {
  Field2D acc(nx, ny);
  for (std::size_t j = 0; j + 1 < times.size(); ++j) {
    const double w = 0.5 * (times[j + 1] - times[j]);
    const Field2D a = f(j), b = f(j + 1);
    for (std::size_t c = 0; c < acc.size(); ++c) acc.data[c] += w * (a.data[c] + b.data[c]);
  }
  return acc;
}

}  // namespace detail

inline Field2D trapezoid(std::span<const Field2D> snapshots, std::span<const double> times) {
  detail::check_time_grid(snapshots.size(), times);
  return detail::trapezoid(snapshots[0].nx, snapshots[0].ny, times,
                           [&](std::size_t j) { return snapshots[j]; });
}

// Time average of every field.
inline FlowField mean_flow(std::span<const FlowField> snapshots, std::span<const double> times) {
  detail::check_time_grid(snapshots.size(), times);
  const double span = times.back() - times.front();
  FlowField out(snapshots[0].grid);
  for (std::size_t k = 0; k < kNumFlowFields; ++k) {
    Field2D s = detail::trapezoid(out.grid.nx, out.grid.ny, times,
                                  [&](std::size_t j) { return snapshots[j].field(k); });
    for (double& v : s.data) v /= span;
    out.field(k) = std::move(s);
  }
  return out;
}

// Half the time-averaged variance of the velocity fluctuations, per cell.
inline Field2D tke(std::span<const FlowField> snapshots, std::span<const double> times) {
  const FlowField mean = mean_flow(snapshots, times);
  const double span = times.back() - times.front();
  Field2D out = detail::trapezoid(mean.grid.nx, mean.grid.ny, times, [&](std::size_t j) {
    Field2D e(mean.grid);
    for (std::size_t c = 0; c < e.size(); ++c) {
      const double du = snapshots[j].u.data[c] - mean.u.data[c];
      const double dv = snapshots[j].v.data[c] - mean.v.data[c];
      e.data[c] = du * du + dv * dv;
    }
    return e;
  });
  for (double& v : out.data) v /= 2.0 * span;
  return out;
}

// ||pred - truth|| / max(||truth||, clamp); clamp 0 disables the floor.
inline double relative_error(std::span<const double> pred, std::span<const double> truth,
                             double clamp = 0.0) {
  if (pred.size() != truth.size()) throw ShapeError("relative_error: size mismatch");
  double d2 = 0.0, t2 = 0.0;
  for (std::size_t k = 0; k < pred.size(); ++k) {
    const double d = pred[k] - truth[k];
    d2 += d * d;
    t2 += truth[k] * truth[k];
  }
  return std::sqrt(d2) / std::max(std::sqrt(t2), clamp);
}

inline double relative_error(const Field2D& pred, const Field2D& truth, double clamp = 0.0) {
  if (pred.nx != truth.nx || pred.ny != truth.ny)
    throw ShapeError("relative_error: field shape mismatch");
  return relative_error(pred.values(), truth.values(), clamp);
}

// ---------------------------------------------------------------------------
// Reports

// Metric values of one evaluated rollout, keyed by (metric, field).
struct EvalReport {
  std::map<std::pair<std::string, std::string>, double> values;

  void set(const std::string& metric, const std::string& field, double v) {
    values[{metric, field}] = v;
  }
  double get(const std::string& metric, const std::string& field) const {
    auto it = values.find({metric, field});
    if (it == values.end()) throw ArgumentError("EvalReport: no " + metric + "/" + field);
    return it->second;
  }
};

inline void write_report_csv(const std::string& path, const EvalReport& r) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open for writing: " + path);
  out << "field,metric,value\n";
  out.precision(17);
  for (const auto& [key, v] : r.values) out << key.second << ',' << key.first << ',' << v << '\n';
  if (!out) throw FormatError("write failed: " + path);
}

struct SummaryStat {
  double mean = 0.0;
  double se = 0.0;  // sample std / sqrt(n); 0 for a single report
  std::size_t n = 0;
};

inline SummaryStat summarize(std::span<const double> v) {
  SummaryStat s;
  s.n = v.size();
  if (v.empty()) return s;
  for (double x : v) s.mean += x;
  s.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.se = std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
  }
  return s;
}

// Mean and standard error of every (metric, field) across reports.
inline std::map<std::pair<std::string, std::string>, SummaryStat> aggregate(
    std::span<const EvalReport> reports) {
  std::map<std::pair<std::string, std::string>, std::vector<double>> pooled;
  for (const auto& r : reports)
    for (const auto& [key, v] : r.values) pooled[key].push_back(v);
  std::map<std::pair<std::string, std::string>, SummaryStat> out;
  for (const auto& [key, v] : pooled) out[key] = summarize(v);
  return out;
}

inline void write_summary_csv(
    const std::string& path,
    const std::map<std::pair<std::string, std::string>, SummaryStat>& summary) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open for writing: " + path);
  out << "field,metric,mean,se,two_se,n\n";
  out.precision(17);
  for (const auto& [key, s] : summary)
    out << key.second << ',' << key.first << ',' << s.mean << ',' << s.se << ',' << 2.0 * s.se
        << ',' << s.n << '\n';
  if (!out) throw FormatError("write failed: " + path);
}

inline nlohmann::json summary_json(
    const std::map<std::pair<std::string, std::string>, SummaryStat>& summary) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [key, s] : summary)
    j[key.first][key.second] = {{"mean", s.mean}, {"se", s.se}, {"two_se", 2.0 * s.se}, {"n", s.n}};
  return j;
}

}  // namespace shockcast
