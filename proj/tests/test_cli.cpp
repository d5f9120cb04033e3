#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>
#include <string>

#include "shockcast/pipeline.hpp"

using namespace shockcast;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "shockcast_cli_test";

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// Runs the CLI and returns its exit status.
int cli(const std::string& args, const std::string& env = "") {
  const std::string cmd =
      env + " " + std::string(SHOCKCAST_CLI) + " " + args + " > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::map<std::string, std::string> directory_contents(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file()) out[e.path().filename().string()] = slurp(e.path());
  return out;
}

json tiny_config(const fs::path& base, std::size_t cases) {
  json j = json::parse(R"({
    "dataset": {"n_cases": 4, "n_eval": 1, "solver_cells": 16, "time_stride": 3,
                "min_snapshots": 2, "max_snapshots": 500, "solver": {"t_end": 1.2e-3}},
    "cfl": {"model": {"width": 8, "depth": 2, "norm_groups": 2}, "train": {"epochs": 2}},
    "solver": {"model": {"width": 4, "levels": 2, "embed_pairs": 2, "embed_dim": 4,
                         "norm_groups": 2},
               "train": {"epochs": 2}}
  })");
  j["dataset"]["n_cases"] = cases;
  j["data"] = (base / "data").string();
  j["plot"] = {{"rollout", (base / "roll").string()}};
  return j;
}

fs::path write_config(const fs::path& dir, const json& j, const std::string& name = "run.json") {
  fs::create_directories(dir);
  write_json(dir / name, j);
  return dir / name;
}

class CliPipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    fs::remove_all(kRoot);
    base_ = kRoot / "pipeline";
    json cfg = tiny_config(base_, 4);
    for (int s = 0; s < 3; ++s)
      cfg["models"].push_back({{"cfl", (base_ / ("cfl_" + std::to_string(s))).string()},
                               {"solver", (base_ / ("sol_" + std::to_string(s))).string()}});
    config_ = write_config(base_, cfg);
    json one = cfg;
    one["models"] = json::array({cfg["models"][0]});
    single_ = write_config(base_, one, "single.json");
    ASSERT_EQ(cli("generate --config " + config_.string() + " --out " + (base_ / "data").string()), 0);
    for (int s = 0; s < 3; ++s) {
      const std::string seed = " --seed " + std::to_string(s);
      ASSERT_EQ(cli("train-cfl --config " + config_.string() + seed + " --out " +
                    (base_ / ("cfl_" + std::to_string(s))).string()),
                0);
      ASSERT_EQ(cli("train-solver --config " + config_.string() + seed + " --out " +
                    (base_ / ("sol_" + std::to_string(s))).string()),
                0);
    }
    ASSERT_EQ(cli("rollout --config " + single_.string() + " --out " + (base_ / "roll").string()), 0);
    ASSERT_EQ(cli("evaluate --config " + config_.string() + " --out " + (base_ / "eval").string()), 0);
  }
  static void TearDownTestSuite() { fs::remove_all(kRoot); }

  // Reruns `command` into a fresh directory and compares every file byte for byte.
  static void expect_rerun_identical(const std::string& command, const fs::path& config,
                                     const std::string& first, const std::string& seed = "") {
    const fs::path again = kRoot / ("again_" + first);
    ASSERT_EQ(cli(command + " --config " + config.string() + seed + " --out " + again.string()), 0);
    const auto a = directory_contents(base_ / first);
    const auto b = directory_contents(again);
    ASSERT_FALSE(a.empty());
    ASSERT_EQ(a.size(), b.size());
    for (const auto& [name, bytes] : a) {
      ASSERT_TRUE(b.count(name)) << name;
      EXPECT_TRUE(bytes == b.at(name)) << command << ": " << name << " differs";
    }
  }

  static inline fs::path base_, config_, single_;
};

}  // namespace

TEST_F(CliPipeline, EveryRunDirectoryHoldsResolvedConfig) {
  for (const char* d : {"data", "cfl_0", "sol_2", "roll", "eval"}) {
    const json j = read_json(base_ / d / "config.json");
    EXPECT_NO_THROW(j.get<RunConfig>()) << d;
  }
  EXPECT_EQ(read_json(base_ / "cfl_1" / "config.json").at("seed"), 1);
  EXPECT_EQ(read_json(base_ / "cfl_1" / "config.json").at("cfl").at("train").at("seed"), 1);
}

TEST_F(CliPipeline, CheckpointsAndMetadataPerRun) {
  for (int s = 0; s < 3; ++s) {
    const auto c = base_ / ("cfl_" + std::to_string(s));
    EXPECT_EQ(slurp(c / "model.shkp").substr(0, 4), "SHKP");
    EXPECT_EQ(read_json(c / "metadata.json").at("kind"), "cfl");
    EXPECT_EQ(read_json(base_ / ("sol_" + std::to_string(s)) / "metadata.json").at("kind"), "solver");
  }
  EXPECT_NE(slurp(base_ / "cfl_0" / "model.shkp"), slurp(base_ / "cfl_1" / "model.shkp"));
}

TEST_F(CliPipeline, RolloutWritesTrajectoryAndTimestepCsv) {
  const json index = read_json(base_ / "roll" / "rollout.json");
  ASSERT_EQ(index.at("cases").size(), 1u);
  const std::string id = index["cases"][0]["case_id"];
  EXPECT_EQ(slurp(base_ / "roll" / (id + ".shkc")).substr(0, 4), "SHKC");
  std::istringstream csv(slurp(base_ / "roll" / (id + "_dt.csv")));
  std::string header;
  std::getline(csv, header);
  EXPECT_EQ(header, "step,time,dt,true_dt");
  std::size_t rows = 0;
  for (std::string line; std::getline(csv, line);) ++rows;
  EXPECT_EQ(rows, index["cases"][0]["steps"].get<std::size_t>());
}

TEST_F(CliPipeline, EvaluateAggregatesThreeSeedsWithTwoStandardErrors) {
  std::istringstream csv(slurp(base_ / "eval" / "summary.csv"));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "field,metric,mean,se,two_se,n");
  const json summary = read_json(base_ / "eval" / "summary.json");
  std::size_t checked = 0;
  for (const auto& [field, metrics] : summary.items())
    for (const auto& [metric, stat] : metrics.items()) {
      EXPECT_EQ(stat.at("n"), 3) << field << '/' << metric;
      if (stat.at("se").is_number()) {
        EXPECT_DOUBLE_EQ(stat.at("two_se").get<double>(), 2.0 * stat.at("se").get<double>());
      }
      ++checked;
    }
  EXPECT_GT(checked, 10u);
  for (int p = 0; p < 3; ++p)
    EXPECT_TRUE(fs::exists(base_ / "eval" / ("report_" + std::to_string(p) + "_case_002.csv")));
}

TEST_F(CliPipeline, PlotWritesImagesAndTimestepCsv) {
  ASSERT_EQ(cli("plot --config " + single_.string() + " --out " + (base_ / "plots").string()), 0);
  std::size_t ppm = 0, csv = 0;
  for (const auto& e : fs::directory_iterator(base_ / "plots")) {
    const auto ext = e.path().extension();
    if (ext == ".ppm") {
      ++ppm;
      EXPECT_EQ(slurp(e.path()).substr(0, 3), "P6\n");
    }
    csv += ext == ".csv";
  }
  EXPECT_EQ(ppm, 3u * kNumFlowFields * 3u);  // truth, prediction, residual
  EXPECT_EQ(csv, 1u);
}

TEST_F(CliPipeline, RerunsAreBitIdentical) {
  expect_rerun_identical("generate", config_, "data");
  expect_rerun_identical("train-cfl", config_, "cfl_1", " --seed 1");
  expect_rerun_identical("train-solver", config_, "sol_2", " --seed 2");
  expect_rerun_identical("rollout", single_, "roll");
  expect_rerun_identical("evaluate", config_, "eval");
}

TEST(Cli, GenerateTwentyCasesWritesTwentyContainersAndOneManifest) {
  const fs::path base = kRoot / "twenty";
  const auto config = write_config(base, tiny_config(base, 20));
  ASSERT_EQ(cli("generate --config " + config.string() + " --out " + (base / "data").string()), 0);
  std::size_t shkc = 0, manifests = 0;
  for (const auto& e : fs::directory_iterator(base / "data")) {
    if (e.path().extension() == ".shkc") {
      ++shkc;
      EXPECT_EQ(slurp(e.path()).substr(0, 4), "SHKC");
    }
    manifests += e.path().filename() == "manifest.json";
  }
  EXPECT_EQ(shkc, 20u);
  EXPECT_EQ(manifests, 1u);
  EXPECT_EQ(read_json(base / "data" / "manifest.json").at("cases").size(), 20u);
}

TEST(Cli, ThreadCapDoesNotChangeOutputs) {
  const fs::path base = kRoot / "threads";
  const auto config = write_config(base, tiny_config(base, 6));
  ASSERT_EQ(cli("generate --config " + config.string() + " --out " + (base / "t1").string(),
                "SHOCKCAST_THREADS=1"),
            0);
  ASSERT_EQ(cli("generate --config " + config.string() + " --out " + (base / "t3").string(),
                "SHOCKCAST_THREADS=3"),
            0);
  EXPECT_EQ(directory_contents(base / "t1"), directory_contents(base / "t3"));
  EXPECT_EQ(cli("generate --config " + config.string() + " --out " + (base / "t0").string(),
                "SHOCKCAST_THREADS=zero"),
            2);
}

TEST(Cli, FailuresMapToTypedExitCodes) {
  const fs::path base = kRoot / "errors";
  json cfg = tiny_config(base, 4);
  const auto good = write_config(base, cfg);
  // Dataset directory never generated.
  EXPECT_EQ(cli("train-cfl --config " + good.string() + " --out " + (base / "x").string()), 3);
  cfg["dataset"]["n_casse"] = 4;
  const auto typo = write_config(base, cfg, "typo.json");
  EXPECT_EQ(cli("generate --config " + typo.string() + " --out " + (base / "y").string()), 2);
  cfg = tiny_config(base, 4);
  cfg["dataset"]["n_cases"] = "many";
  const auto wrong_type = write_config(base, cfg, "type.json");
  EXPECT_EQ(cli("generate --config " + wrong_type.string() + " --out " + (base / "z").string()), 2);
  write_text(base / "broken.json", "{\"seed\": ");
  EXPECT_EQ(cli("generate --config " + (base / "broken.json").string() + " --out " +
                (base / "w").string()),
            3);
  cfg = tiny_config(base, 4);
  cfg["models"] = json::array({{{"cfl", (base / "none").string()}, {"solver", (base / "none").string()}}});
  EXPECT_EQ(cli("evaluate --config " + write_config(base, cfg, "m.json").string() + " --out " +
                (base / "v").string()),
            3);
  EXPECT_NE(cli("generate --out " + (base / "u").string()), 0);
  EXPECT_NE(cli("generate --config " + good.string() + " --seed -4 --out " + (base / "u").string()), 0);
  EXPECT_NE(cli("bogus --config " + good.string() + " --out " + (base / "u").string()), 0);
}

TEST(Ppm, ConstantFieldIsUniformGray) {
  const fs::path p = fs::temp_directory_path() / "shockcast_constant.ppm";
  Field2D f(5, 3, 2.5);
  const auto [lo, hi] = value_range({&f});
  write_ppm(p.string(), f, lo, hi);
  const std::string bytes = slurp(p);
  const std::string header = "P6\n5 3\n255\n";
  ASSERT_EQ(bytes.size(), header.size() + 3 * 15);
  EXPECT_EQ(bytes.substr(0, header.size()), header);
  for (std::size_t i = header.size(); i < bytes.size(); ++i)
    EXPECT_EQ(static_cast<unsigned char>(bytes[i]), 128u);
  fs::remove(p);
}

TEST(Ppm, TopRowIsLargestY) {
  const fs::path p = fs::temp_directory_path() / "shockcast_ramp.ppm";
  Field2D f(2, 2);
  f(0, 1) = 1.0;  // top-left
  write_ppm(p.string(), f, 0.0, 1.0);
  const std::string px = slurp(p).substr(std::string("P6\n2 2\n255\n").size());
  EXPECT_EQ(static_cast<unsigned char>(px[0]), 255u);
  EXPECT_EQ(static_cast<unsigned char>(px[3]), 0u);
  EXPECT_EQ(static_cast<unsigned char>(px[6]), 0u);
  fs::remove(p);
}

TEST(RunConfigJson, RoundTripsAndRejectsUnknownKeys) {
  RunConfig c;
  c.seed = 9;
  c.dataset.n_cases = 7;
  c.dataset.solver.flux = FluxKind::hll;
  c.dataset.solver.boundary.x_hi = BoundaryKind::open;
  c.solver.trunk = Trunk::ffno_lite;
  c.solver.conditioning = Conditioning::moe;
  c.models.push_back({"a", "b"});
  c.eval.clamp[2] = 1.0;
  c.cfl_train.train.seed = c.solver_train.seed = 9;
  const json j = c;
  const RunConfig d = j.get<RunConfig>();
  EXPECT_EQ(json(d), j);
  json reseeded = j;
  reseeded["seed"] = 4;
  EXPECT_EQ(reseeded.get<RunConfig>().solver_train.seed, 4u);
  json bad = j;
  bad["solver"]["extra"] = 1;
  EXPECT_THROW(bad.get<RunConfig>(), ConfigError);
}
