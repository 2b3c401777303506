// Command-line front end: run, sweep and oracle subcommands over a JSON
// experiment config. Exit codes: 0 success, 2 config error, 3 runtime error.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "ccv/experiment.hpp"

namespace {

namespace ex = ccv::experiment;

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<double> t_final;
  std::optional<std::string> output;
};

ex::ExperimentConfig load(const std::string& path, const Overrides& o) {
  auto c = ex::load_config(path);
  if (o.seed) c.seed = *o.seed;
  if (o.t_final) c.t_final = *o.t_final;
  if (o.output) c.output = *o.output;
  ex::validate(c);
  return c;
}

void add_overrides(CLI::App* cmd, std::string& path, Overrides& o) {
  cmd->add_option("config", path, "experiment config (JSON)")->required();
  cmd->add_option("--seed", o.seed, "master seed");
  cmd->add_option("--t-final", o.t_final, "simulated time per run");
  cmd->add_option("--output", o.output, "output directory");
}

void print_point(const ex::PointReport& p) {
  std::cout << "N=" << p.n << "  rejection_rate=" << ex::csv_number(p.rejection_rate) << '\n';
  for (const auto& o : p.combined) {
    std::cout << "  " << ccv::label(o.observable) << "  E_Q=" << ex::csv_number(o.eq_expectation);
    if (o.simple)
      std::cout << "  simple=" << ex::csv_number(o.simple->value) << " +- "
                << ex::csv_number(o.simple->se);
    if (o.coupled)
      std::cout << "  coupled=" << ex::csv_number(o.coupled->value) << " +- "
                << ex::csv_number(o.coupled->se);
    if (o.ratio)
      std::cout << "  e_N=" << ex::csv_number(o.ratio->e_n) << " +- "
                << ex::csv_number(o.ratio->e_n_se) << "  e_var=" << ex::csv_number(o.ratio->e_var)
                << "  e_tau=" << ex::csv_number(o.ratio->e_tau);
    std::cout << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Coupled control-variate estimators for jump processes"};
  app.require_subcommand(1);

  std::string run_path, sweep_path, oracle_path;
  Overrides run_o, sweep_o;
  auto* run = app.add_subcommand("run", "simple and/or coupled runs at one system size");
  add_overrides(run, run_path, run_o);
  auto* sweep = app.add_subcommand("sweep", "error ratios over the configured N values");
  add_overrides(sweep, sweep_path, sweep_o);
  auto* oracle = app.add_subcommand("oracle", "exact stationary values for small SSEP chains");
  oracle->add_option("config", oracle_path, "experiment config (JSON)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*run) {
      const auto c = load(run_path, run_o);
      auto [point, files] = ex::run_experiment(c);
      ex::write_outputs(c.output, files);
      print_point(point);
    } else if (*sweep) {
      const auto c = load(sweep_path, sweep_o);
      auto [points, files] = ex::run_sweep(c);
      ex::write_outputs(c.output, files);
      for (const auto& p : points) print_point(p);
    } else if (*oracle) {
      const auto c = ex::load_config(oracle_path);
      ex::write_json(std::cout, ex::oracle_report(c));
      std::cout << '\n';
    }
  } catch (const ccv::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
