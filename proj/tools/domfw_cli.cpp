// Command-line front end: run, sweep, validate, slope.
// Exit codes: 0 success, 1 configuration or input error, 2 runtime error.

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "domfw/harness.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kRuntimeError = 2;

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  bool dump_network = false;
};

domfw::ExperimentConfig load_config(const std::string& path, const Overrides& o) {
  std::string text;
  try {
    text = domfw::io::read_file(path);
  } catch (const std::exception& e) {
    throw domfw::ConfigError({{0, e.what()}});
  }
  auto cfg = domfw::parse_config(text);
  if (o.seed) cfg.problem.seed = *o.seed;
  if (o.out_dir) cfg.output.dir = *o.out_dir;
  if (o.dump_network) cfg.output.dump_network = true;
  return cfg;
}

void print_summary(const domfw::ExperimentResult& r, const std::string& dir) {
  std::cout << "final_avg_regret = " << domfw::io::format_double(r.final_avg_regret()) << '\n'
            << "lo_calls = " << r.trajectory.lo_calls << '\n'
            << "messages = " << r.trajectory.messages << '\n';
  if (auto m = r.bound_margin()) std::cout << "bound_margin = " << domfw::io::format_double(*m) << '\n';
  std::cout << "artifacts = " << dir << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distributed online multiple Frank-Wolfe experiments"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(domfw::kVersion));

  Overrides overrides;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--seed", overrides.seed, "Override the master seed");
    sub->add_option("--out-dir", overrides.out_dir, "Override the artifact directory");
    sub->add_flag("--dump-network", overrides.dump_network, "Write the per-round weight matrices");
  };

  std::string config_path;
  auto* run_cmd = app.add_subcommand("run", "Run one experiment");
  run_cmd->add_option("config", config_path, "Config file")->required();
  add_common(run_cmd);

  std::string axis;
  std::vector<std::string> values;
  auto* sweep_cmd = app.add_subcommand("sweep", "Run one experiment per axis value");
  sweep_cmd->add_option("config", config_path, "Config file")->required();
  sweep_cmd->add_option("--axis", axis, "gamma, epsilon, rho, mode, n or T")->required();
  sweep_cmd->add_option("--values", values, "Comma-separated values")->required()->delimiter(',');
  add_common(sweep_cmd);

  auto* validate_cmd = app.add_subcommand("validate", "Parse and check a config");
  validate_cmd->add_option("config", config_path, "Config file")->required();

  std::string csv_path;
  auto* slope_cmd = app.add_subcommand("slope", "Fit a log-log slope to (T, count) rows");
  slope_cmd->add_option("csv", csv_path, "CSV with T and count columns")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*validate_cmd) {
      const auto cfg = load_config(config_path, overrides);
      std::cout << domfw::to_text(cfg);
      return kOk;
    }
    if (*slope_cmd) {
      std::vector<std::pair<double, double>> pts;
      try {
        pts = domfw::read_slope_csv(domfw::io::read_file(csv_path));
        std::cout << domfw::io::format_double(domfw::fit_loglog_slope(pts)) << '\n';
      } catch (const domfw::ArgumentError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kConfigError;
      }
      return kOk;
    }
    if (*run_cmd) {
      const auto cfg = load_config(config_path, overrides);
      const auto r = domfw::run_experiment(cfg, cfg.output.dir);
      print_summary(r, cfg.output.dir);
      return kOk;
    }
    if (*sweep_cmd) {
      const auto cfg = load_config(config_path, overrides);
      const auto ax = domfw::parse_axis(axis);
      if (!ax) throw domfw::ConfigError({{0, "unknown sweep axis '" + axis + "'"}});
      for (const auto& v : values) domfw::apply_axis(cfg, *ax, v);  // reject bad values before running anything
      const auto rows = domfw::sweep(cfg, *ax, values, cfg.output.dir);
      const std::string table = domfw::write_sweep_csv(rows);
      domfw::io::write_file((std::filesystem::path(cfg.output.dir) / "sweep.csv").string(), table);
      std::cout << table;
      for (const auto& r : rows)
        if (r.status != "ok") return kRuntimeError;
      return kOk;
    }
  } catch (const domfw::ConfigError& e) {
    std::cerr << "config error:\n" << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return kOk;
}
