#include <CLI11.hpp>

#include "cli/commands.hpp"

namespace cli {

namespace {

struct ExperimentFlags {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> set;

  Overrides overrides() const { return {set, seed}; }
};

void add_experiment_flags(CLI::App* cmd, ExperimentFlags& f) {
  cmd->add_option("--config", f.config, "JSON experiment config")->required();
  cmd->add_option("--out", f.out, "Output directory (created if missing)")->required();
  cmd->add_option("--seed", f.seed, "Base seed; overrides SORD_SEED and the config");
  cmd->add_option("--set", f.set, "Config override key=value, dotted keys for sections (repeatable)")
      ->allow_extra_args(false);
}

/// Runs the parse, mapping usage errors to status 1 and --help to 0.
int parse(CLI::App& app, int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : exit_validation;
  }
  return -1;
}

}  // namespace

int run_sord_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Resource discovery simulator over a small-world overlay"};
  app.require_subcommand(1);

  ExperimentFlags sweep_flags;
  auto* sweep = app.add_subcommand("sweep", "Success rate vs. load for each protocol variant (figure2.csv)");
  add_experiment_flags(sweep, sweep_flags);

  ExperimentFlags run_flags;
  bool trace = false;
  auto* run = app.add_subcommand("run", "One simulation run (run.csv, load_bins.csv)");
  add_experiment_flags(run, run_flags);
  run->add_flag("--trace", trace, "Also write every event to trace.jsonl");

  std::size_t n = 0;
  std::size_t k_near = 0;
  std::size_t n_far = 1;
  std::optional<std::uint64_t> topo_seed;
  auto* topo = app.add_subcommand("topo-stats", "Print clustering,avg_path,diameter of one overlay");
  topo->add_option("--n", n, "Node count")->required();
  topo->add_option("--k-near", k_near, "Ring neighbours per node (even)")->required();
  topo->add_option("--n-far", n_far, "Random far links per node")->capture_default_str();
  topo->add_option("--seed", topo_seed, "Seed; overrides SORD_SEED (default 1)");

  app.footer("Environment: SORD_SEED sets the seed unless --seed is given.");

  if (int code = parse(app, argc, argv, out, err); code >= 0) return code;

  if (*sweep) return cmd_sord_sweep(sweep_flags.config, sweep_flags.out, sweep_flags.overrides(), out, err);
  if (*run) return cmd_sord_run(run_flags.config, run_flags.out, run_flags.overrides(), trace, out, err);

  std::uint64_t seed = 1;
  try {
    if (topo_seed) {
      seed = *topo_seed;
    } else if (auto s = env_seed()) {
      seed = *s;
    }
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return exit_validation;
  }
  return cmd_topology_stats(n, k_near, n_far, seed, out, err);
}

int run_i3_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Nearest-neighbour process anomaly detector with XML immunisation"};
  app.require_subcommand(1);

  ExperimentFlags pipe_flags;
  auto* pipeline = app.add_subcommand(
      "pipeline", "Train, export immunisation.xml, evaluate the imported model (figure4.csv)");
  add_experiment_flags(pipeline, pipe_flags);

  std::string xml;
  std::string trace;
  std::optional<double> prior;
  std::optional<double> threshold;
  auto* classify = app.add_subcommand("classify", "Classify one trace CSV against an immunisation document");
  classify->add_option("--immunisation", xml, "Immunisation XML")->required();
  classify->add_option("--trace", trace, "Trace CSV with header t,cpu,mem,net")->required();
  classify->add_option("--prior", prior, "Prior probability of normal (default: from the document)");
  classify->add_option("--threshold", threshold, "Distance threshold (default: from the document)");

  app.footer("Environment: SORD_SEED sets the seed unless --seed is given.");

  if (int code = parse(app, argc, argv, out, err); code >= 0) return code;

  if (*pipeline) return cmd_i3_pipeline(pipe_flags.config, pipe_flags.out, pipe_flags.overrides(), out, err);
  return cmd_i3_classify(xml, trace, prior, threshold, out, err);
}

}  // namespace cli
