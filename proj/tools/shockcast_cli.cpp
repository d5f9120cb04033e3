// shockcast: dataset generation, training, rollout, evaluation and plots.
//
//   shockcast generate     --config run.json --out data/
//   shockcast train-cfl    --config run.json --seed 1 --out runs/cfl_s1
//   shockcast train-solver --config run.json --seed 1 --out runs/unet_s1
//   shockcast rollout      --config run.json --out runs/rollout_s1
//   shockcast evaluate     --config run.json --out runs/eval
//   shockcast plot         --config run.json --out runs/plots

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "shockcast/pipeline.hpp"

namespace {

using namespace shockcast;

enum ExitCode : int {
  exit_ok = 0,
  exit_failure = 1,
  exit_config = 2,
  exit_input = 3,
  exit_numerics = 4,
  exit_internal = 5,
};

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, Options& o) {
  cmd->add_option("--config", o.config, "run config (JSON)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "master seed, overrides the config");
  cmd->add_option("--out", o.out, "output directory")->required();
}

int run(const std::string& command, const Options& o) {
  const RunConfig cfg = load_run_config(o.config, o.seed);
  const fs::path out = prepare_out(o.out, cfg);
  if (command == "generate") {
    const auto m = generate_dataset(cfg.dataset, out, worker_threads(), &std::cout);
    std::cout << m.cases.size() << " cases written to " << out.string() << '\n';
  } else if (command == "train-cfl") {
    const json meta = train_cfl_run(cfg, out, &std::cout);
    std::cout << "eval MAE " << meta.at("eval_mae").get<double>() << " (train-mean baseline "
              << meta.at("baseline_eval_mae").get<double>() << ")\n";
  } else if (command == "train-solver") {
    const json meta = train_solver_run(cfg, out, &std::cout);
    std::cout << "eval one-step loss " << meta.at("eval_one_step_loss").get<double>()
              << " (identity " << meta.at("identity_one_step_loss").get<double>() << ")\n";
  } else if (command == "rollout") {
    rollout_run(cfg, out, &std::cout);
  } else if (command == "evaluate") {
    evaluate_run(cfg, out, &std::cout);
  } else if (command == "plot") {
    plot_run(cfg, out, &std::cout);
  }
  return exit_ok;
}

int report(const char* kind, const std::exception& e, int code) {
  std::cerr << "shockcast: " << kind << ": " << e.what() << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neural surrogate pipeline for blast-wave flows"};
  app.require_subcommand(1, 1);
  Options opts;
  for (const char* name : {"generate", "train-cfl", "train-solver", "rollout", "evaluate", "plot"})
    add_common(app.add_subcommand(name), opts);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  const std::string command = app.get_subcommands().front()->get_name();
  try {
    return run(command, opts);
  } catch (const ConfigError& e) {
    return report("config error", e, exit_config);
  } catch (const FormatError& e) {
    return report("input error", e, exit_input);
  } catch (const BlowUpError& e) {
    return report("solver blow-up", e, exit_numerics);
  } catch (const DivergenceError& e) {
    return report("training diverged", e, exit_numerics);
  } catch (const RunawayError& e) {
    return report("runaway rollout", e, exit_numerics);
  } catch (const InternalError& e) {
    return report("internal error", e, exit_internal);
  } catch (const Error& e) {
    return report("error", e, exit_failure);
  } catch (const std::exception& e) {
    return report("unexpected failure", e, exit_failure);
  }
}
