// Command line driver: runs one scenario file or a parameter sweep and
// writes the timing/error table as CSV.
#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "stokesbie/scenario.hpp"

namespace {

using namespace stokesbie;

std::string read_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void emit(const std::string& out_path, const std::string& csv) {
  if (out_path.empty()) {
    std::fputs(csv.c_str(), stdout);
    return;
  }
  std::ofstream os(out_path);
  if (!os) throw std::runtime_error("cannot write " + out_path);
  os << csv;
}

std::string run_to_csv(const Scenario& s, const BenchOptions& opts) {
  if (s.action == ActionKind::Snapshots)
    return reports_to_csv(run_snapshot_batch(s, opts), true, opts.diagnostics);
  return reports_to_csv({run_scenario(s, opts)}, false, opts.diagnostics);
}

int dispatch(const std::function<int()>& body) {
  try {
    return body();
  } catch (const ConvergenceError& e) {
    std::fprintf(stderr, "solver did not converge: %s\n", e.what());
    return 2;
  } catch (const GeometryError& e) {
    std::fprintf(stderr, "geometry error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stokes boundary integral solver benchmark driver"};
  app.require_subcommand(1);

  std::string scenario_path, out_path, sweep_scenario, sweep_strategy;
  std::string param = "N";
  std::uint64_t seed = 0;
  int threads = 1;
  bool diagnostics = false;
  std::vector<double> values;

  auto* run = app.add_subcommand("run", "run one scenario file");
  run->add_option("scenario", scenario_path, "scenario JSON file")
      ->required()
      ->check(CLI::ExistingFile);
  run->add_option("--out", out_path, "CSV output path (default: stdout)");
  run->add_option("--seed", seed, "seed for randomized sketches");
  run->add_option("--threads", threads,
                  "reserved for interface stability; execution is serial");
  run->add_flag("--diagnostics", diagnostics,
                "append conditioning diagnostics as comment lines");

  auto* sweep = app.add_subcommand("sweep", "rerun a scenario over problem sizes");
  sweep->add_option("--param", param, "swept parameter; N = scalar unknowns");
  sweep->add_option("--values", values, "parameter values")->required();
  sweep->add_option("--scenario", sweep_scenario,
                    "base scenario JSON file (default: the disc preset)");
  sweep->add_option("--strategy", sweep_strategy, "override the strategy");
  sweep->add_option("--out", out_path, "CSV output path (default: stdout)");
  sweep->add_option("--seed", seed, "seed for randomized sketches");
  sweep->add_option("--threads", threads,
                    "reserved for interface stability; execution is serial");
  sweep->add_flag("--diagnostics", diagnostics,
                  "append conditioning diagnostics as comment lines");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // Fold CLI11's assorted parse-failure codes into plain failure; 2 and 3
    // stay reserved for solver and geometry errors.
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  BenchOptions opts;
  opts.seed = seed;
  opts.threads = threads;
  opts.diagnostics = diagnostics;

  if (run->parsed()) {
    return dispatch([&] {
      const Scenario s = scenario_from_json(read_file(scenario_path));
      emit(out_path, run_to_csv(s, opts));
      return 0;
    });
  }

  return dispatch([&] {
    if (param != "N")
      throw std::invalid_argument("unsupported sweep parameter '" + param +
                                  "'; only N (scalar unknowns) is available");
    Scenario base;
    if (!sweep_scenario.empty())
      base = scenario_from_json(read_file(sweep_scenario));
    if (!sweep_strategy.empty())
      base.strategy = strategy_from_name(sweep_strategy);
    if (base.action == ActionKind::Snapshots)
      throw std::invalid_argument("sweep does not support snapshot scenarios");

    std::vector<RunReport> rows;
    const std::string base_name = base.name;
    for (const double v : values) {
      Scenario s = base;
      s.n_panels = std::max(4, (int)std::lround(v / (2.0 * s.q)));
      s.name = base_name + "-N" + std::to_string((long long)std::llround(v));
      std::fprintf(stderr, "sweep N=%lld: %d panels...\n",
                   (long long)std::llround(v), s.n_panels);
      rows.push_back(run_scenario(s, opts));
    }
    emit(out_path, reports_to_csv(rows, false, diagnostics));
    return 0;
  });
}
