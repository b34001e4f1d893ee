#pragma once

// Experiment orchestration: flat `section.key = value` configs, seeded end-to-end
// runs that write CSV artifacts, parameter sweeps and log-log slope fits.

#include <Eigen/Core>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "domfw/algorithm.hpp"
#include "domfw/errors.hpp"
#include "domfw/io.hpp"
#include "domfw/network.hpp"
#include "domfw/problem.hpp"
#include "domfw/regret.hpp"
#include "domfw/rng.hpp"

namespace domfw {

inline constexpr std::string_view kVersion = "0.1.0";

struct ExperimentConfig {
  struct Problem {
    std::size_t n = 20;
    std::size_t T = 1000;
    std::size_t d = 8;
    double lambda1 = 5e-6;
    ConstraintKind constraint = ConstraintKind::UnitSimplex;
    double radius = 2.0;
    /// Master seed; role sub-seeds are derived from it.
    std::uint64_t seed = 1;
    bool redraw_features = false;
    InitMode init = InitMode::Vertex;
  } problem;
  struct Network {
    double edge_prob = 0.3;
    /// Overrides the derived network sub-seed when set.
    std::optional<std::uint64_t> seed;
  } network;
  ScheduleParams schedule;
  struct Solver {
    double tol = 1e-9;
    std::size_t ht_samples = 1000;
  } solver;
  struct Output {
    std::string dir = "out";
    bool dump_network = false;
    bool dump_stream = true;
    bool gnuplot = false;
  } output;

  ConstraintSpec constraint_spec() const {
    return problem.constraint == ConstraintKind::UnitSimplex
               ? ConstraintSpec::unit_simplex(problem.d)
               : ConstraintSpec::l1_ball(problem.d, problem.radius);
  }
  std::uint64_t stream_seed() const { return rng::derive_seed(problem.seed, "stream"); }
  std::uint64_t network_seed() const {
    return network.seed ? *network.seed : rng::derive_seed(problem.seed, "network");
  }
  std::uint64_t init_seed() const { return rng::derive_seed(problem.seed, "init"); }
  std::uint64_t ht_seed() const { return rng::derive_seed(problem.seed, "ht"); }
  /// Schedule with the baseline step filled in from T when unset.
  ScheduleParams resolved_schedule() const {
    ScheduleParams p = schedule;
    if (p.mode == ScheduleMode::Baseline && !p.baseline_alpha) p.baseline_alpha = baseline_alpha_for(problem.T);
    return p;
  }
};

struct ConfigIssue {
  std::size_t line = 0;  // 0 when not tied to a line
  std::string message;
};

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<ConfigIssue> issues)
      : std::runtime_error(render(issues)), issues_(std::move(issues)) {}
  const std::vector<ConfigIssue>& issues() const noexcept { return issues_; }

 private:
  static std::string render(const std::vector<ConfigIssue>& issues) {
    std::string out;
    for (const auto& i : issues) {
      if (!out.empty()) out += '\n';
      out += i.line ? "line " + std::to_string(i.line) + ": " + i.message : i.message;
    }
    return out;
  }
  std::vector<ConfigIssue> issues_;
};

inline std::string_view mode_name(ScheduleMode m) {
  switch (m) {
    case ScheduleMode::PerRound: return "per_round";
    case ScheduleMode::Horizon: return "horizon";
    case ScheduleMode::Fixed: return "fixed";
    case ScheduleMode::Baseline: return "baseline";
  }
  return "?";
}

inline std::optional<ScheduleMode> parse_mode(std::string_view s) {
  if (s == "per_round") return ScheduleMode::PerRound;
  if (s == "horizon") return ScheduleMode::Horizon;
  if (s == "fixed") return ScheduleMode::Fixed;
  if (s == "baseline") return ScheduleMode::Baseline;
  return std::nullopt;
}

namespace detail {

struct KeyHandler {
  std::string type;  // for messages
  std::function<bool(ExperimentConfig&, std::string_view)> apply;
};

inline bool parse_bool(std::string_view v, bool& out) {
  if (v == "true" || v == "1" || v == "yes") return out = true, true;
  if (v == "false" || v == "0" || v == "no") return out = false, true;
  return false;
}

inline std::map<std::string, KeyHandler, std::less<>> config_keys() {
  std::map<std::string, KeyHandler, std::less<>> k;
  auto size_key = [](std::function<std::size_t&(ExperimentConfig&)> ref) {
    return KeyHandler{"non-negative integer", [ref](ExperimentConfig& c, std::string_view v) {
                        return io::parse_int(v, ref(c));
                      }};
  };
  auto real_key = [](std::function<double&(ExperimentConfig&)> ref) {
    return KeyHandler{"real", [ref](ExperimentConfig& c, std::string_view v) {
                        double x;
                        if (!io::parse_double(v, x) || !std::isfinite(x)) return false;
                        ref(c) = x;
                        return true;
                      }};
  };
  auto bool_key = [](std::function<bool&(ExperimentConfig&)> ref) {
    return KeyHandler{"boolean", [ref](ExperimentConfig& c, std::string_view v) {
                        return parse_bool(v, ref(c));
                      }};
  };
  k["problem.n"] = size_key([](ExperimentConfig& c) -> std::size_t& { return c.problem.n; });
  k["problem.T"] = size_key([](ExperimentConfig& c) -> std::size_t& { return c.problem.T; });
  k["problem.d"] = size_key([](ExperimentConfig& c) -> std::size_t& { return c.problem.d; });
  k["problem.lambda1"] = real_key([](ExperimentConfig& c) -> double& { return c.problem.lambda1; });
  k["problem.radius"] = real_key([](ExperimentConfig& c) -> double& { return c.problem.radius; });
  k["problem.constraint"] = {"one of simplex, l1_ball", [](ExperimentConfig& c, std::string_view v) {
                               if (v == "simplex") c.problem.constraint = ConstraintKind::UnitSimplex;
                               else if (v == "l1_ball") c.problem.constraint = ConstraintKind::L1Ball;
                               else return false;
                               return true;
                             }};
  k["problem.seed"] = {"unsigned integer", [](ExperimentConfig& c, std::string_view v) {
                         return io::parse_int(v, c.problem.seed);
                       }};
  k["problem.redraw_features"] = bool_key([](ExperimentConfig& c) -> bool& { return c.problem.redraw_features; });
  k["problem.init"] = {"one of vertex, random", [](ExperimentConfig& c, std::string_view v) {
                         if (v == "vertex") c.problem.init = InitMode::Vertex;
                         else if (v == "random") c.problem.init = InitMode::Random;
                         else return false;
                         return true;
                       }};
  k["network.edge_prob"] = real_key([](ExperimentConfig& c) -> double& { return c.network.edge_prob; });
  k["network.seed"] = {"unsigned integer", [](ExperimentConfig& c, std::string_view v) {
                         std::uint64_t s;
                         if (!io::parse_int(v, s)) return false;
                         c.network.seed = s;
                         return true;
                       }};
  k["schedule.mode"] = {"one of per_round, horizon, fixed, baseline",
                        [](ExperimentConfig& c, std::string_view v) {
                          auto m = parse_mode(v);
                          if (!m) return false;
                          c.schedule.mode = *m;
                          return true;
                        }};
  k["schedule.epsilon"] = real_key([](ExperimentConfig& c) -> double& { return c.schedule.epsilon; });
  k["schedule.gamma"] = real_key([](ExperimentConfig& c) -> double& { return c.schedule.gamma; });
  k["schedule.rho"] = real_key([](ExperimentConfig& c) -> double& { return c.schedule.rho; });
  k["schedule.fixed_K"] = {"positive integer", [](ExperimentConfig& c, std::string_view v) {
                             std::size_t x;
                             if (!io::parse_int(v, x)) return false;
                             c.schedule.fixed_K = x;
                             return true;
                           }};
  k["schedule.baseline_alpha"] = {"real", [](ExperimentConfig& c, std::string_view v) {
                                    double x;
                                    if (!io::parse_double(v, x) || !std::isfinite(x)) return false;
                                    c.schedule.baseline_alpha = x;
                                    return true;
                                  }};
  k["solver.tol"] = real_key([](ExperimentConfig& c) -> double& { return c.solver.tol; });
  k["solver.ht_samples"] = size_key([](ExperimentConfig& c) -> std::size_t& { return c.solver.ht_samples; });
  k["output.dir"] = {"string", [](ExperimentConfig& c, std::string_view v) {
                       if (v.empty()) return false;
                       c.output.dir = std::string(v);
                       return true;
                     }};
  k["output.dump_network"] = bool_key([](ExperimentConfig& c) -> bool& { return c.output.dump_network; });
  k["output.dump_stream"] = bool_key([](ExperimentConfig& c) -> bool& { return c.output.dump_stream; });
  k["output.gnuplot"] = bool_key([](ExperimentConfig& c) -> bool& { return c.output.gnuplot; });
  return k;
}

}  // namespace detail

/// Range checks across fields. `line_of` maps a key to the line that set it (0 if defaulted).
inline std::vector<ConfigIssue> validate_config(const ExperimentConfig& c,
                                                const std::function<std::size_t(std::string_view)>& line_of =
                                                    [](std::string_view) { return std::size_t{0}; }) {
  std::vector<ConfigIssue> out;
  auto fail = [&](std::string_view key, std::string msg) {
    out.push_back({line_of(key), std::string(key) + ": " + std::move(msg)});
  };
  const auto& p = c.problem;
  if (p.n < 1) fail("problem.n", "must be >= 1");
  if (p.T < 1) fail("problem.T", "must be >= 1");
  if (p.d < 1) fail("problem.d", "must be >= 1");
  if (p.lambda1 < 0.0) fail("problem.lambda1", "must be >= 0");
  if (!(p.radius > 0.0)) fail("problem.radius", "must be > 0");
  if (c.network.edge_prob < 0.0 || c.network.edge_prob > 1.0) fail("network.edge_prob", "must lie in [0, 1]");
  const auto& s = c.schedule;
  if (!(s.epsilon > 0.0)) fail("schedule.epsilon", "must be > 0");
  if (s.mode == ScheduleMode::PerRound && !(s.gamma > 0.0 && s.gamma < 1.0))
    fail("schedule.gamma", "value " + io::format_double(s.gamma) +
                               " out of range: per_round mode requires gamma in (0, 1)");
  if (s.mode == ScheduleMode::Horizon && !(s.gamma > 0.0 && s.gamma <= 1.0))
    fail("schedule.gamma", "value " + io::format_double(s.gamma) +
                               " out of range: horizon mode requires gamma in (0, 1]");
  if (!(s.rho >= 1.0)) fail("schedule.rho", "must be >= 1");
  if (s.mode == ScheduleMode::Fixed && (!s.fixed_K || *s.fixed_K < 1))
    fail("schedule.fixed_K", "fixed mode requires fixed_K >= 1");
  if (s.baseline_alpha && !(*s.baseline_alpha > 0.0 && *s.baseline_alpha <= 1.0))
    fail("schedule.baseline_alpha", "must lie in (0, 1]");
  if (!(c.solver.tol > 0.0)) fail("solver.tol", "must be > 0");
  if (c.solver.ht_samples < 1) fail("solver.ht_samples", "must be >= 1");
  return out;
}

/// Parses `section.key = value` lines; '#' starts a comment. Collects every
/// violation (unknown key, malformed value, duplicate, range) before throwing.
inline ExperimentConfig parse_config(std::string_view text) {
  static const auto keys = detail::config_keys();
  ExperimentConfig cfg;
  std::vector<ConfigIssue> issues;
  std::map<std::string, std::size_t, std::less<>> seen;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = io::trim(line);
    if (line.empty()) {
      if (end == text.size()) break;
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      issues.push_back({line_no, "expected 'section.key = value'"});
    } else {
      const std::string key(io::trim(line.substr(0, eq)));
      const auto value = io::trim(line.substr(eq + 1));
      const auto handler = keys.find(key);
      if (handler == keys.end()) {
        issues.push_back({line_no, "unknown key '" + key + "'"});
      } else if (auto prev = seen.find(key); prev != seen.end()) {
        issues.push_back({line_no, "duplicate key '" + key + "' (lines " + std::to_string(prev->second) +
                                       " and " + std::to_string(line_no) + ")"});
      } else {
        seen.emplace(key, line_no);
        if (!handler->second.apply(cfg, value))
          issues.push_back({line_no, key + ": expected " + handler->second.type + ", got '" +
                                         std::string(value) + "'"});
      }
    }
    if (end == text.size()) break;
  }
  auto more = validate_config(cfg, [&](std::string_view k) {
    auto it = seen.find(k);
    return it == seen.end() ? std::size_t{0} : it->second;
  });
  issues.insert(issues.end(), more.begin(), more.end());
  if (!issues.empty()) throw ConfigError(std::move(issues));
  return cfg;
}

/// Canonical text form; parse_config(to_text(c)) reproduces c.
inline std::string to_text(const ExperimentConfig& c) {
  std::ostringstream o;
  const auto& p = c.problem;
  o << "problem.n = " << p.n << '\n'
    << "problem.T = " << p.T << '\n'
    << "problem.d = " << p.d << '\n'
    << "problem.lambda1 = " << io::format_double(p.lambda1) << '\n'
    << "problem.constraint = " << (p.constraint == ConstraintKind::UnitSimplex ? "simplex" : "l1_ball") << '\n'
    << "problem.radius = " << io::format_double(p.radius) << '\n'
    << "problem.seed = " << p.seed << '\n'
    << "problem.redraw_features = " << (p.redraw_features ? "true" : "false") << '\n'
    << "problem.init = " << (p.init == InitMode::Vertex ? "vertex" : "random") << '\n'
    << "network.edge_prob = " << io::format_double(c.network.edge_prob) << '\n';
  if (c.network.seed) o << "network.seed = " << *c.network.seed << '\n';
  o << "schedule.mode = " << mode_name(c.schedule.mode) << '\n'
    << "schedule.epsilon = " << io::format_double(c.schedule.epsilon) << '\n'
    << "schedule.gamma = " << io::format_double(c.schedule.gamma) << '\n'
    << "schedule.rho = " << io::format_double(c.schedule.rho) << '\n';
  if (c.schedule.fixed_K) o << "schedule.fixed_K = " << *c.schedule.fixed_K << '\n';
  if (c.schedule.baseline_alpha) o << "schedule.baseline_alpha = " << io::format_double(*c.schedule.baseline_alpha) << '\n';
  o << "solver.tol = " << io::format_double(c.solver.tol) << '\n'
    << "solver.ht_samples = " << c.solver.ht_samples << '\n'
    << "output.dir = " << c.output.dir << '\n'
    << "output.dump_network = " << (c.output.dump_network ? "true" : "false") << '\n'
    << "output.dump_stream = " << (c.output.dump_stream ? "true" : "false") << '\n'
    << "output.gnuplot = " << (c.output.gnuplot ? "true" : "false") << '\n';
  return o.str();
}

/// Stream, constraint set, network and per-round optima: everything a run
/// needs that does not depend on the inner-iteration schedule.
struct ProblemInstance {
  ConstraintSpec spec;
  LossStream stream;
  GraphSchedule schedule;
  std::vector<OptimumRecord> optima;
};

inline ProblemInstance prepare_instance(const ExperimentConfig& c) {
  const ConstraintSpec spec = c.constraint_spec();
  StreamOptions opts;
  opts.redraw_features = c.problem.redraw_features;
  LossStream stream = generate_stream(c.problem.n, c.problem.T, c.problem.d, c.problem.lambda1, spec,
                                      c.stream_seed(), opts);
  GraphSchedule schedule = random_connected_schedule(c.problem.n, c.problem.T, c.network.edge_prob, c.network_seed());
  auto optima = solve_all_optima(stream, spec, c.solver.tol);
  return {spec, std::move(stream), std::move(schedule), std::move(optima)};
}

struct ExperimentResult {
  Trajectory trajectory;
  RegretSeries regret;
  Envelopes env;
  ProblemConstants constants;
  MixingConstants mixing;
  double spectral_sigma = 0.0;
  double ht_estimate = 0.0;
  double ht_upper = 0.0;
  /// Empty when the schedule falls outside the bound's hypotheses (K_1 < 2).
  std::optional<TheoremBound> bound;
  InnerLoopCheck inner;

  double final_avg_regret() const { return env.avg.back(); }
  /// bound - max_j R_j(T); positive when the inequality holds.
  std::optional<double> bound_margin() const {
    if (!bound) return std::nullopt;
    return bound->value - regret.final_max();
  }
};

inline ExperimentResult simulate(const ExperimentConfig& c, const ProblemInstance& inst) {
  ExperimentResult r;
  const ScheduleParams params = c.resolved_schedule();
  Initialization init{c.problem.init, c.init_seed()};
  r.trajectory = run(inst.stream, inst.spec, inst.schedule, params, init);
  r.regret = regret_series(r.trajectory, inst.optima, inst.stream);
  r.env = envelopes(r.regret);
  r.constants = problem_constants(inst.stream, inst.spec);
  r.mixing = mixing_constants(inst.schedule);
  r.ht_estimate = estimate_HT(inst.stream, inst.spec, c.solver.ht_samples, c.ht_seed());
  r.ht_upper = HT_upper_bound(inst.stream, inst.spec);
  r.inner = check_inner_convergence(r.trajectory, inst.optima, r.constants, c.problem.n);
  if (params.mode != ScheduleMode::Baseline && r.trajectory.K.front() >= 2) {
    r.bound = theorem_bound(r.constants, r.mixing, params, inst.stream, inst.spec, r.trajectory.K,
                            r.trajectory.decisions.front());
  }
  return r;
}

inline std::string bound_report(const ExperimentConfig& c, const ExperimentResult& r,
                                double spectral = std::numeric_limits<double>::quiet_NaN()) {
  std::ostringstream o;
  auto f = [](double v) { return io::format_double(v); };
  o << "schedule_mode = " << mode_name(c.schedule.mode) << '\n';
  if (c.schedule.mode == ScheduleMode::Baseline)
    o << "note = single-iteration baseline with fixed step (degenerate comparator)\n";
  o << "M = " << f(r.constants.M) << '\n'
    << "L_X = " << f(r.constants.L_X) << '\n'
    << "G_X = " << f(r.constants.G_X) << '\n'
    << "zeta = " << f((1.0 - r.mixing.sigma1) * 4.0 * double(c.problem.n) * double(c.problem.n)) << '\n'
    << "sigma1 = " << f(r.mixing.sigma1) << '\n'
    << "Gamma1 = " << f(r.mixing.gamma1) << '\n';
  if (!std::isnan(spectral)) o << "spectral_sigma = " << f(spectral) << '\n';
  o << "H_T_estimate = " << f(r.ht_estimate) << '\n'
    << "H_T_upper_bound = " << f(r.ht_upper) << '\n'
    << "lo_calls = " << r.trajectory.lo_calls << '\n'
    << "messages = " << r.trajectory.messages << '\n'
    << "edge_messages = " << r.trajectory.edge_messages << '\n'
    << "final_avg_regret = " << f(r.final_avg_regret()) << '\n'
    << "max_agent_regret = " << f(r.regret.final_max()) << '\n';
  if (r.bound) {
    const auto& b = *r.bound;
    double consistency = 0.0, tracking = 0.0;
    for (const auto& rd : r.trajectory.rounds) consistency += rd.consistency_error, tracking += rd.tracking_residual;
    o << "D1 = " << f(b.D1) << '\n'
      << "D2 = " << f(b.D2) << '\n'
      << "E1 = " << f(b.E1) << '\n'
      << "E2 = " << f(b.E2) << '\n'
      << "E3 = " << f(b.E3) << '\n'
      << "sum_inv_K = " << f(b.sum_inv_K) << '\n'
      << "bound = " << f(b.value) << '\n'
      << "bound_margin = " << f(*r.bound_margin()) << '\n'
      << "bound_holds = " << (*r.bound_margin() > 0.0 ? "true" : "false") << '\n'
      << "consistency_observed = " << f(consistency) << '\n'
      << "consistency_bound = " << f(b.consistency_bound) << '\n'
      << "tracking_observed = " << f(tracking) << '\n'
      << "tracking_bound = " << f(b.tracking_bound) << '\n';
  } else {
    o << "bound = not applicable (requires alpha_t = 1/(rho K_t) with K_1 >= 2)\n";
  }
  o << "inner_loop_check = " << (r.inner.holds ? "holds" : "violated") << '\n'
    << "inner_loop_worst_margin = " << f(r.inner.worst_margin) << '\n';
  return o.str();
}

inline std::string gnuplot_script() {
  return "set datafile separator ','\n"
         "set key autotitle columnhead\n"
         "set xlabel 't'\n"
         "set ylabel 'Regret_j(t)/t'\n"
         "set logscale y\n"
         "plot 'envelopes.csv' using 1:2 with lines, '' using 1:3 with lines, '' using 1:4 with lines\n";
}

/// Runs one experiment and writes its artifacts into `out_dir`. On failure a
/// FAILED marker with the message is left next to any partial outputs and the
/// exception is rethrown.
inline ExperimentResult run_experiment(const ExperimentConfig& c, const std::filesystem::path& out_dir,
                                       const ProblemInstance* shared = nullptr) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  fs::remove(out_dir / "FAILED");
  const auto t0 = std::chrono::steady_clock::now();
  try {
    std::optional<ProblemInstance> own;
    if (!shared) own = prepare_instance(c);
    const ProblemInstance& inst = shared ? *shared : *own;
    if (c.output.dump_stream) io::write_file((out_dir / "stream.csv").string(), write_stream_csv(inst.stream));
    if (c.output.dump_network) io::write_file((out_dir / "network.csv").string(), write_schedule_csv(inst.schedule));
    ExperimentResult r = simulate(c, inst);
    io::write_file((out_dir / "trajectory.csv").string(), write_trajectory_csv(r.trajectory));
    io::write_file((out_dir / "diagnostics.csv").string(), write_diagnostics_csv(r.trajectory));
    io::write_file((out_dir / "monitors.csv").string(), write_monitors_csv(r.trajectory));
    io::write_file((out_dir / "regret.csv").string(), write_regret_csv(r.regret));
    io::write_file((out_dir / "envelopes.csv").string(), write_envelopes_csv(r.env));
    r.spectral_sigma = spectral_sigma(inst.schedule);
    io::write_file((out_dir / "bound_report.txt").string(), bound_report(c, r, r.spectral_sigma));
    if (c.output.gnuplot) io::write_file((out_dir / "envelopes.gp").string(), gnuplot_script());
    ExperimentConfig echo = c;
    echo.output.dir = out_dir.string();
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::ostringstream m;
    m << "# domfw " << kVersion << ", Eigen " << EIGEN_WORLD_VERSION << '.' << EIGEN_MAJOR_VERSION << '.'
      << EIGEN_MINOR_VERSION << '\n'
      << "# wall_time_seconds = " << io::format_double(secs) << '\n'
      << to_text(echo);
    io::write_file((out_dir / "manifest.txt").string(), m.str());
    return r;
  } catch (const std::exception& e) {
    io::write_file((out_dir / "FAILED").string(), std::string(e.what()) + '\n');
    throw;
  }
}

enum class SweepAxis { Gamma, Epsilon, Rho, Mode, N, T };

inline std::optional<SweepAxis> parse_axis(std::string_view s) {
  if (s == "gamma") return SweepAxis::Gamma;
  if (s == "epsilon") return SweepAxis::Epsilon;
  if (s == "rho") return SweepAxis::Rho;
  if (s == "mode") return SweepAxis::Mode;
  if (s == "n") return SweepAxis::N;
  if (s == "T") return SweepAxis::T;
  return std::nullopt;
}

/// Returns a copy of `c` with `axis` set to `value`; throws ConfigError on a bad value.
inline ExperimentConfig apply_axis(const ExperimentConfig& c, SweepAxis axis, std::string_view value) {
  ExperimentConfig out = c;
  bool ok = true;
  double real = 0.0;
  std::size_t count = 0;
  switch (axis) {
    case SweepAxis::Gamma: ok = io::parse_double(value, real), out.schedule.gamma = real; break;
    case SweepAxis::Epsilon: ok = io::parse_double(value, real), out.schedule.epsilon = real; break;
    case SweepAxis::Rho: ok = io::parse_double(value, real), out.schedule.rho = real; break;
    case SweepAxis::N: ok = io::parse_int(value, count), out.problem.n = count; break;
    case SweepAxis::T: ok = io::parse_int(value, count), out.problem.T = count; break;
    case SweepAxis::Mode: {
      auto m = parse_mode(value);
      ok = m.has_value();
      if (m) out.schedule.mode = *m;
      break;
    }
  }
  if (!ok) throw ConfigError({{0, "sweep value '" + std::string(value) + "' is not valid for this axis"}});
  auto issues = validate_config(out);
  if (!issues.empty()) throw ConfigError(std::move(issues));
  return out;
}

struct SweepRow {
  std::string value;
  double final_avg_regret = std::numeric_limits<double>::quiet_NaN();
  std::uint64_t lo_calls = 0;
  std::uint64_t messages = 0;
  std::string status = "ok";
};

/// One run per value, all sharing the master seed (and so the same stream and
/// network when the axis leaves them unchanged). Failed runs are recorded and
/// the sweep continues. Rows keep the input order.
inline std::vector<SweepRow> sweep(const ExperimentConfig& c, SweepAxis axis,
                                   const std::vector<std::string>& values, const std::filesystem::path& out_dir) {
  std::vector<SweepRow> rows;
  const bool shares_instance = axis != SweepAxis::N && axis != SweepAxis::T;
  std::optional<ProblemInstance> shared;
  for (const auto& v : values) {
    SweepRow row;
    row.value = v;
    try {
      const ExperimentConfig rc = apply_axis(c, axis, v);
      if (shares_instance && !shared) shared = prepare_instance(rc);
      const auto r = run_experiment(rc, out_dir / ("value_" + v), shares_instance ? &*shared : nullptr);
      row.final_avg_regret = r.final_avg_regret();
      row.lo_calls = r.trajectory.lo_calls;
      row.messages = r.trajectory.messages;
    } catch (const std::exception& e) {
      row.status = std::string("failed: ") + e.what();
      for (auto& ch : row.status)
        if (ch == ',' || ch == '\n') ch = ' ';
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

inline std::string write_sweep_csv(const std::vector<SweepRow>& rows) {
  io::CsvWriter w({"value", "final_avg_regret", "n_lo", "messages", "status"});
  for (const auto& r : rows)
    w.row({r.value, io::format_double(r.final_avg_regret), std::to_string(r.lo_calls), std::to_string(r.messages),
           r.status});
  return w.str();
}

/// Least-squares slope of log(count) against log(T).
inline double fit_loglog_slope(const std::vector<std::pair<double, double>>& points) {
  if (points.size() < 3) throw ArgumentError("fit_loglog_slope: need at least 3 points");
  for (std::size_t k = 0; k < points.size(); ++k) {
    if (!(points[k].first > 0.0) || !(points[k].second > 0.0))
      throw ArgumentError("fit_loglog_slope: values must be positive");
    if (k && !(points[k].first > points[k - 1].first))
      throw ArgumentError("fit_loglog_slope: T must be strictly increasing");
  }
  const double m = static_cast<double>(points.size());
  double sx = 0.0, sy = 0.0;
  for (auto [x, y] : points) sx += std::log(x), sy += std::log(y);
  const double mx = sx / m, my = sy / m;
  double sxy = 0.0, sxx = 0.0;
  for (auto [x, y] : points) {
    const double dx = std::log(x) - mx;
    sxy += dx * (std::log(y) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

/// Reads (T, count) pairs from a CSV whose first two columns hold them.
inline std::vector<std::pair<double, double>> read_slope_csv(std::string_view text) {
  const auto table = io::parse_csv(text);
  if (table.header.size() < 2) throw ArgumentError("slope CSV needs two columns");
  std::vector<std::pair<double, double>> pts;
  for (const auto& row : table.rows) {
    double x, y;
    if (!io::parse_double(row[0], x) || !io::parse_double(row[1], y))
      throw ArgumentError("slope CSV: malformed row");
    pts.emplace_back(x, y);
  }
  return pts;
}

}  // namespace domfw
