#pragma once

// Batch commands over on-disk artifacts: dataset directories, model run
// directories, rollout and evaluation outputs. Every command writes the
// resolved run config next to its outputs.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "shockcast/evaluation.hpp"
#include "shockcast/image.hpp"
#include "shockcast/solver_training.hpp"

namespace shockcast {

namespace fs = std::filesystem;

struct ModelPair {
  std::string cfl;     // train-cfl run directory
  std::string solver;  // train-solver run directory
};

struct PlotConfig {
  std::string rollout;  // rollout run directory
  std::vector<double> fractions{0.25, 0.5, 1.0};
};

struct RunConfig {
  std::uint64_t seed = 0;
  DatasetConfig dataset;
  std::string data;  // dataset directory read by the downstream commands
  CflNetConfig cfl;
  CflTrainConfig cfl_train;
  SolverNetConfig solver;
  TrainConfig solver_train;
  std::vector<ModelPair> models;
  EvalOptions eval;
  std::size_t max_steps = 0;  // 0: four times the longest training case
  PlotConfig plot;
};

inline void to_json(json& j, const RunConfig& c) {
  json models = json::array();
  for (const auto& m : c.models) models.push_back({{"cfl", m.cfl}, {"solver", m.solver}});
  j = json{{"seed", c.seed},
           {"dataset", c.dataset},
           {"data", c.data},
           {"cfl", {{"model", c.cfl}, {"train", c.cfl_train}}},
           {"solver", {{"model", c.solver}, {"train", c.solver_train}}},
           {"models", models},
           {"evaluation",
            {{"corr_threshold", c.eval.corr_threshold},
             {"clamp", c.eval.clamp},
             {"max_steps", c.max_steps}}},
           {"plot", {{"rollout", c.plot.rollout}, {"fractions", c.plot.fractions}}}};
}

inline void from_json(const json& j, RunConfig& c) {
  detail::check_keys(j, {"seed", "dataset", "data", "cfl", "solver", "models", "evaluation", "plot"},
                     "config");
  c = RunConfig{};
  c.seed = j.value("seed", c.seed);
  if (j.contains("dataset")) j.at("dataset").get_to(c.dataset);
  c.data = j.value("data", c.data);
  if (j.contains("cfl")) {
    const json& s = j.at("cfl");
    detail::check_keys(s, {"model", "train"}, "cfl");
    if (s.contains("model")) s.at("model").get_to(c.cfl);
    if (s.contains("train")) s.at("train").get_to(c.cfl_train);
  }
  if (j.contains("solver")) {
    const json& s = j.at("solver");
    detail::check_keys(s, {"model", "train"}, "solver");
    if (s.contains("model")) s.at("model").get_to(c.solver);
    if (s.contains("train")) s.at("train").get_to(c.solver_train);
  }
  if (j.contains("models"))
    for (const json& m : j.at("models")) {
      detail::check_keys(m, {"cfl", "solver"}, "models");
      c.models.push_back({m.at("cfl").get<std::string>(), m.at("solver").get<std::string>()});
    }
  if (j.contains("evaluation")) {
    const json& e = j.at("evaluation");
    detail::check_keys(e, {"corr_threshold", "clamp", "max_steps"}, "evaluation");
    c.eval.corr_threshold = e.value("corr_threshold", c.eval.corr_threshold);
    if (e.contains("clamp")) e.at("clamp").get_to(c.eval.clamp);
    c.max_steps = e.value("max_steps", c.max_steps);
  }
  if (j.contains("plot")) {
    const json& p = j.at("plot");
    detail::check_keys(p, {"rollout", "fractions"}, "plot");
    c.plot.rollout = p.value("rollout", c.plot.rollout);
    if (p.contains("fractions")) p.at("fractions").get_to(c.plot.fractions);
  }
  // One master seed drives both training streams.
  c.cfl_train.train.seed = c.seed;
  c.solver_train.seed = c.seed;
}

// ---------------------------------------------------------------------------
// Files

inline void require_file(const fs::path& p) {
  if (!fs::is_regular_file(p)) throw FormatError("missing file: " + p.string());
}

inline json read_json(const fs::path& p) {
  require_file(p);
  std::ifstream in(p);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError(p.string() + ": " + e.what());
  }
}

inline void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
  if (!out) throw FormatError("write failed: " + p.string());
}

inline void write_json(const fs::path& p, const json& j) { write_text(p, j.dump(2) + "\n"); }

inline RunConfig load_run_config(const fs::path& p, std::optional<std::uint64_t> seed) {
  json j = read_json(p);
  if (seed) j["seed"] = *seed;
  try {
    return j.get<RunConfig>();
  } catch (const json::exception& e) {
    throw ConfigError(p.string() + ": " + e.what());
  }
}

inline fs::path prepare_out(const fs::path& out, const RunConfig& cfg) {
  if (out.empty()) throw ConfigError("an output directory is required");
  fs::create_directories(out);
  write_json(out / "config.json", cfg);
  return out;
}

// ---------------------------------------------------------------------------
// Parallelism

// Worker cap from SHOCKCAST_THREADS, else the hardware thread count.
inline std::size_t worker_threads() {
  if (const char* env = std::getenv("SHOCKCAST_THREADS")) {
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || n < 1)
      throw ConfigError("SHOCKCAST_THREADS must be a positive integer");
    return static_cast<std::size_t>(n);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

// Runs job(i) for i < n on up to `threads` workers. The first failure by index
// is rethrown after all workers stop.
template <class Job>
void parallel_for(std::size_t n, std::size_t threads, Job&& job) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i; (i = next++) < n;) {
      try {
        job(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t k = std::min(std::max<std::size_t>(threads, 1), n);
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < k; ++t) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// ---------------------------------------------------------------------------
// Dataset

struct LoadedDataset {
  DatasetManifest manifest;
  std::vector<Trajectory> train, eval;
  std::vector<const CaseManifest*> eval_cases;
};

inline DatasetManifest generate_dataset(const DatasetConfig& cfg, const fs::path& out,
                                        std::size_t threads, std::ostream* log = nullptr) {
  cfg.validate();
  fs::create_directories(out);
  const auto ratios = pressure_ratio_sweep(cfg);
  const auto splits = assign_splits(cfg.n_cases, cfg.n_eval);
  std::vector<CaseManifest> cases(cfg.n_cases);
  std::vector<Trajectory> stored(cfg.n_cases);
  std::mutex log_mutex;
  parallel_for(cfg.n_cases, threads, [&](std::size_t i) {
    GeneratedCase g = generate_case(cfg, i, ratios[i], splits[i]);
    write_case((out / g.manifest.file).string(), g.coarse);
    // Stats see exactly what training will read back.
    stored[i] = from_block(to_block(g.coarse), g.manifest.grid);
    cases[i] = g.manifest;
    if (log) {
      std::lock_guard lock(log_mutex);
      *log << g.manifest.case_id << ": ratio " << ratios[i] << ", " << g.manifest.fine_steps
           << " solver steps, " << g.manifest.n_snapshots << " snapshots\n";
    }
  });
  std::vector<Trajectory> train;
  for (std::size_t i = 0; i < cfg.n_cases; ++i)
    if (splits[i] == Split::train) train.push_back(std::move(stored[i]));
  DatasetManifest m{cfg.solver.gas, std::move(cases), compute_norm_stats(train, cfg.solver.gas)};
  write_json(out / "manifest.json", m);
  return m;
}

inline LoadedDataset load_dataset(const fs::path& dir) {
  if (dir.empty()) throw ConfigError("config: 'data' must name a dataset directory");
  LoadedDataset d;
  try {
    d.manifest = read_json(dir / "manifest.json").get<DatasetManifest>();
  } catch (const json::exception& e) {
    throw FormatError("dataset manifest: " + std::string(e.what()));
  }
  for (const CaseManifest& c : d.manifest.cases) {
    require_file(dir / c.file);
    Trajectory t = read_case((dir / c.file).string(), c);
    if (c.split == Split::train) {
      d.train.push_back(std::move(t));
    } else {
      d.eval.push_back(std::move(t));
      d.eval_cases.push_back(&c);
    }
  }
  if (d.train.empty() || d.eval.empty())
    throw FormatError("dataset: needs both train and eval cases");
  return d;
}

// ---------------------------------------------------------------------------
// Training

inline json loss_history(const TrainLog& log) { return log.epoch_loss; }

inline json train_cfl_run(const RunConfig& cfg, const fs::path& out, std::ostream* log = nullptr) {
  const LoadedDataset data = load_dataset(cfg.data);
  const GasModel& gas = data.manifest.gas;
  const NormStats& stats = data.manifest.stats;
  CflModel<float> model(cfg.cfl, derive_seed(cfg.seed, init_stream));
  const CflSamples train = make_cfl_samples(data.train, cfg.cfl, gas, stats);
  const CflSamples eval = make_cfl_samples(data.eval, cfg.cfl, gas, stats);
  const TrainLog tl = train_cfl(model, train, cfg.cfl_train, [&](std::size_t e, double l) {
    if (log) *log << "epoch " << e << " loss " << l << '\n' << std::flush;
  });
  model.params().save((out / "model.shkp").string());
  json meta{{"kind", "cfl"},
            {"seed", cfg.seed},
            {"model", cfg.cfl},
            {"train", cfg.cfl_train},
            {"epoch_loss", loss_history(tl)},
            {"train_mae", cfl_mae(model, train)},
            {"eval_mae", cfl_mae(model, eval)},
            {"baseline_eval_mae", mean_predictor_mae(eval)}};
  write_json(out / "metadata.json", meta);
  return meta;
}

inline json train_solver_run(const RunConfig& cfg, const fs::path& out,
                             std::ostream* log = nullptr) {
  const LoadedDataset data = load_dataset(cfg.data);
  const NormStats& stats = data.manifest.stats;
  SolverNet<float> net(cfg.solver, derive_seed(cfg.seed, init_stream));
  const SolverSamples train = make_solver_samples(data.train, stats);
  const SolverSamples eval = make_solver_samples(data.eval, stats);
  const TrainLog tl = train_solver(net, train, cfg.solver_train, [&](std::size_t e, double l) {
    if (log) *log << "epoch " << e << " loss " << l << '\n' << std::flush;
  });
  net.params().save((out / "model.shkp").string());
  json meta{{"kind", "solver"},
            {"seed", cfg.seed},
            {"model", cfg.solver},
            {"train", cfg.solver_train},
            {"epoch_loss", loss_history(tl)},
            {"eval_one_step_loss", solver_one_step_loss(net, eval)},
            {"identity_one_step_loss", identity_one_step_loss(eval)}};
  write_json(out / "metadata.json", meta);
  return meta;
}

inline json read_run_metadata(const fs::path& dir, const std::string& kind) {
  const json meta = read_json(dir / "metadata.json");
  if (meta.value("kind", std::string{}) != kind)
    throw FormatError(dir.string() + ": not a " + kind + " run");
  require_file(dir / "model.shkp");
  return meta;
}

inline CflModel<float> load_cfl_run(const fs::path& dir) {
  const json meta = read_run_metadata(dir, "cfl");
  CflModel<float> m(meta.at("model").get<CflNetConfig>(), 0);
  m.params().load((dir / "model.shkp").string());
  return m;
}

inline SolverNet<float> load_solver_run(const fs::path& dir) {
  const json meta = read_run_metadata(dir, "solver");
  SolverNet<float> n(meta.at("model").get<SolverNetConfig>(), 0);
  n.params().load((dir / "model.shkp").string());
  return n;
}

inline std::size_t step_budget(const RunConfig& cfg, const LoadedDataset& data) {
  return cfg.max_steps ? cfg.max_steps : default_step_budget(data.train);
}

// ---------------------------------------------------------------------------
// Rollout, evaluation, plots

inline void rollout_run(const RunConfig& cfg, const fs::path& out, std::ostream* log = nullptr) {
  if (cfg.models.size() != 1) throw ConfigError("rollout: 'models' must hold exactly one pair");
  const LoadedDataset data = load_dataset(cfg.data);
  const auto cfl = load_cfl_run(cfg.models[0].cfl);
  const auto solver = load_solver_run(cfg.models[0].solver);
  json cases = json::array();
  for (std::size_t i = 0; i < data.eval.size(); ++i) {
    const Trajectory& truth = data.eval[i];
    const std::string id = data.eval_cases[i]->case_id;
    const auto r = shockcast_rollout(cfl, solver, truth.snapshots.front(), truth.times.back(),
                                     data.manifest.gas, data.manifest.stats, step_budget(cfg, data));
    write_case((out / (id + ".shkc")).string(), r.predicted);
    write_dt_csv((out / (id + "_dt.csv")).string(), r, &truth);
    cases.push_back({{"case_id", id},
                     {"file", id + ".shkc"},
                     {"steps", r.steps()},
                     {"t_stop", truth.times.back()},
                     {"grid", truth.snapshots.front().grid}});
    if (log) *log << id << ": " << r.steps() << " steps\n";
  }
  write_json(out / "rollout.json", {{"cases", cases}});
}

struct EvaluationSummary {
  std::vector<EvalReport> reports;  // pair-major, then eval case
  std::map<std::pair<std::string, std::string>, SummaryStat> summary;
};

inline EvaluationSummary evaluate_run(const RunConfig& cfg, const fs::path& out,
                                      std::ostream* log = nullptr) {
  if (cfg.models.empty()) throw ConfigError("evaluate: 'models' is empty");
  const LoadedDataset data = load_dataset(cfg.data);
  EvaluationSummary s;
  for (std::size_t p = 0; p < cfg.models.size(); ++p) {
    const auto cfl = load_cfl_run(cfg.models[p].cfl);
    const auto solver = load_solver_run(cfg.models[p].solver);
    for (std::size_t i = 0; i < data.eval.size(); ++i) {
      const std::string id = data.eval_cases[i]->case_id;
      auto ev = evaluate_case(cfl, solver, data.eval[i], data.manifest.gas, data.manifest.stats,
                              step_budget(cfg, data), cfg.eval);
      write_report_csv((out / ("report_" + std::to_string(p) + "_" + id + ".csv")).string(),
                       ev.report);
      if (log)
        *log << "pair " << p << ' ' << id << ": correlation_time "
             << ev.report.get("correlation_time", "mean") << ", dt_tracking "
             << ev.report.get("dt_tracking", "dt") << '\n';
      s.reports.push_back(std::move(ev.report));
    }
  }
  s.summary = aggregate(s.reports);
  write_summary_csv((out / "summary.csv").string(), s.summary);
  write_json(out / "summary.json", summary_json(s.summary));
  return s;
}

inline void plot_run(const RunConfig& cfg, const fs::path& out, std::ostream* log = nullptr) {
  if (cfg.plot.rollout.empty()) throw ConfigError("plot: 'plot.rollout' is required");
  const LoadedDataset data = load_dataset(cfg.data);
  const fs::path dir = cfg.plot.rollout;
  const json index = read_json(dir / "rollout.json");
  for (const json& c : index.at("cases")) {
    const std::string id = c.at("case_id").get<std::string>();
    std::size_t i = 0;
    while (i < data.eval.size() && data.eval_cases[i]->case_id != id) ++i;
    if (i == data.eval.size()) throw FormatError("plot: " + id + " is not an eval case");
    const Trajectory& truth = data.eval[i];
    const fs::path file = dir / c.at("file").get<std::string>();
    require_file(file);
    CaseManifest shape = *data.eval_cases[i];
    shape.n_snapshots = c.at("steps").get<std::size_t>() + 1;
    const Trajectory pred = read_case(file.string(), shape);
    for (double f : cfg.plot.fractions) {
      if (!(f >= 0.0 && f <= 1.0)) throw ConfigError("plot: fractions must lie in [0, 1]");
      const auto j = static_cast<std::size_t>(
          std::lround(f * static_cast<double>(truth.size() - 1)));
      const double at[] = {truth.times[j]};
      const FlowField p = interpolate_to_grid(pred, at).front();
      const FlowField& t = truth.snapshots[j];
      for (std::size_t k = 0; k < kNumFlowFields; ++k) {
        const std::string stem = id + "_" + kFlowFieldNames[k] + "_" + std::to_string(j);
        const auto [lo, hi] = value_range({&t.field(k), &p.field(k)});
        write_ppm((out / (stem + "_truth.ppm")).string(), t.field(k), lo, hi);
        write_ppm((out / (stem + "_pred.ppm")).string(), p.field(k), lo, hi);
        const Field2D r = abs_difference(p.field(k), t.field(k));
        const auto [rlo, rhi] = value_range({&r});
        write_ppm((out / (stem + "_residual.ppm")).string(), r, 0.0, std::max(rhi, rlo));
      }
    }
    RolloutResult rr{pred};
    write_dt_csv((out / (id + "_dt.csv")).string(), rr, &truth);
    if (log) *log << id << ": " << cfg.plot.fractions.size() << " frames\n";
  }
}

}  // namespace shockcast
