#pragma once

// Distributed online multiple Frank-Wolfe. Each round t runs K_t lockstep inner
// iterations of consensus, gradient tracking and a Frank-Wolfe step on every
// agent, then commits x_{i,t+1} = x_{i,t}^{K_t+1}.
//
// Network-wide state is stored column-per-agent: column i of a d x n matrix
// belongs to agent i, so mixing is X_hat = X A'.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "domfw/errors.hpp"
#include "domfw/network.hpp"
#include "domfw/problem.hpp"
#include "domfw/rng.hpp"

namespace domfw {

enum class ScheduleMode { PerRound, Horizon, Fixed, Baseline };

/// Inner-iteration schedule and step size.
///   PerRound: K_t = ceil(eps t^gamma) + 1     Horizon: K_t = ceil(eps T^gamma) + 1
///   Fixed:    K_t = fixed_K                   Baseline: K_t = 1, alpha = baseline_alpha
/// Non-baseline modes use alpha_t = 1/(rho K_t).
struct ScheduleParams {
  ScheduleMode mode = ScheduleMode::PerRound;
  double epsilon = 4.0;
  double gamma = 0.5;
  double rho = 4.0;
  std::optional<std::size_t> fixed_K;
  std::optional<double> baseline_alpha;
};

/// alpha = 1/(4 T^0.4), the single-iteration comparator's step.
inline double baseline_alpha_for(std::size_t T) {
  return 1.0 / (4.0 * std::pow(static_cast<double>(T), 0.4));
}

inline std::size_t inner_K(const ScheduleParams& p, std::size_t t, std::size_t T) {
  if (t < 1 || t > T) throw ArgumentError("inner_K: need 1 <= t <= T");
  switch (p.mode) {
    case ScheduleMode::PerRound:
      return static_cast<std::size_t>(std::ceil(p.epsilon * std::pow(static_cast<double>(t), p.gamma))) + 1;
    case ScheduleMode::Horizon:
      return static_cast<std::size_t>(std::ceil(p.epsilon * std::pow(static_cast<double>(T), p.gamma))) + 1;
    case ScheduleMode::Fixed:
      if (!p.fixed_K || *p.fixed_K < 1) throw ArgumentError("inner_K: fixed mode needs fixed_K >= 1");
      return *p.fixed_K;
    case ScheduleMode::Baseline:
      return 1;
  }
  throw ArgumentError("inner_K: unknown mode");
}

inline double step_size(const ScheduleParams& p, std::size_t K) {
  if (p.mode == ScheduleMode::Baseline) {
    if (!p.baseline_alpha) throw ArgumentError("step_size: baseline mode needs baseline_alpha");
    const double a = *p.baseline_alpha;
    if (!(a > 0.0 && a <= 1.0)) throw ArgumentError("step_size: baseline_alpha outside (0, 1]");
    return a;
  }
  if (K < 1) throw ArgumentError("step_size: K must be >= 1");
  if (!(p.rho >= 1.0)) throw ArgumentError("step_size: rho must be >= 1");
  return 1.0 / (p.rho * static_cast<double>(K));
}

inline std::vector<std::size_t> inner_schedule(const ScheduleParams& p, std::size_t T) {
  std::vector<std::size_t> K(T);
  for (std::size_t t = 1; t <= T; ++t) K[t - 1] = inner_K(p, t, T);
  return K;
}

/// Linear-oracle calls of a full run: n * sum_t K_t.
inline std::uint64_t count_lo_calls(const ScheduleParams& p, std::size_t n, std::size_t T) {
  std::uint64_t total = 0;
  for (std::size_t t = 1; t <= T; ++t) total += inner_K(p, t, T);
  return total * n;
}

/// One agent's view of the inner-loop variables.
struct AgentState {
  Vector x;                      // x_{i,t}^k
  Vector x_mixed;                // x_hat_{i,t}^k
  Vector grad_tracked_pre;       // tracked gradient before mixing
  Vector grad_tracked;           // tracked gradient after mixing
  std::optional<Vector> grad_prev;  // grad f_{i,t}(x_hat^{k-1}); empty at k = 1
};

/// All agents' inner-loop variables, one column per agent.
struct NetworkState {
  Matrix x;
  Matrix x_mixed;
  Matrix grad_tracked_pre;
  Matrix grad_tracked;
  Matrix grad_prev;
  bool has_grad_prev = false;

  NetworkState() = default;
  NetworkState(std::size_t d, std::size_t n)
      : x(Matrix::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(n))),
        x_mixed(x),
        grad_tracked_pre(x),
        grad_tracked(x),
        grad_prev(x) {}

  std::size_t agents() const { return static_cast<std::size_t>(x.cols()); }

  AgentState agent(std::size_t i) const {
    const auto c = static_cast<Eigen::Index>(i);
    AgentState a{x.col(c), x_mixed.col(c), grad_tracked_pre.col(c), grad_tracked.col(c), std::nullopt};
    if (has_grad_prev) a.grad_prev = grad_prev.col(c);
    return a;
  }
};

struct Counters {
  std::uint64_t lo_calls = 0;
  /// One per agent per exchange: each agent sends its state and its tracked
  /// gradient once per inner step, so 2 n K_t per round.
  std::uint64_t messages = 0;
  /// One per directed edge per exchange (point-to-point deliveries).
  std::uint64_t edge_messages = 0;
};

inline void count_exchange(const WeightMatrix& a, Counters* c) {
  if (!c) return;
  c->messages += a.size();
  c->edge_messages += a.directed_edges();
}

/// x_hat_i = sum_j A_ij x_j for every agent (columns of `xs`).
inline Matrix consensus_step(const Matrix& xs, const WeightMatrix& a, Counters* counters = nullptr) {
  if (static_cast<std::size_t>(xs.cols()) != a.size())
    throw ArgumentError("consensus_step: agent count does not match weight matrix");
  Matrix mixed = xs * a.matrix().transpose();
  count_exchange(a, counters);
  return mixed;
}

/// Gradient tracking for inner step k, given fresh = grad f_i(x_hat_i^k) per column:
///   k = 1: pre_i = fresh_i;  k > 1: pre_i = tracked_i + fresh_i - prev_i;
///   tracked_i = sum_j A_ij pre_j.  Stores fresh as prev for step k+1.
inline void tracking_step(NetworkState& st, const WeightMatrix& a, const Matrix& fresh, std::size_t k,
                          Counters* counters = nullptr) {
  if (k < 1) throw ArgumentError("tracking_step: k must be >= 1");
  if (fresh.cols() != st.x.cols() || fresh.rows() != st.x.rows())
    throw ArgumentError("tracking_step: gradient block has wrong shape");
  if (static_cast<std::size_t>(fresh.cols()) != a.size())
    throw ArgumentError("tracking_step: agent count does not match weight matrix");
  if (k == 1) {
    st.grad_tracked_pre = fresh;
  } else {
    if (!st.has_grad_prev) throw StateError("tracking_step: k > 1 without previous gradients");
    st.grad_tracked_pre = st.grad_tracked + fresh - st.grad_prev;
  }
  st.grad_tracked.noalias() = st.grad_tracked_pre * a.matrix().transpose();
  st.grad_prev = fresh;
  st.has_grad_prev = true;
  count_exchange(a, counters);
}

struct FwStep {
  Vector x_next;
  Vector v;
};

/// v = argmin_{x in X} <x, g>; x_next = x_hat + alpha (v - x_hat).
inline FwStep fw_step(VectorCRef x_mixed, VectorCRef grad_tracked, double alpha,
                      const ConstraintSpec& spec, Counters* counters = nullptr) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ArgumentError("fw_step: alpha outside [0, 1]");
  spec.check_dim(x_mixed.size(), "fw_step");
  FwStep out;
  out.v = spec.lmo(grad_tracked);
  out.x_next = x_mixed + alpha * (out.v - x_mixed);
  if (counters) ++counters->lo_calls;
  return out;
}

/// Per-round record. Residual fields are monitors of identities the
/// algorithm satisfies exactly in real arithmetic.
struct RoundDiagnostics {
  std::size_t t = 0;
  std::size_t K = 0;
  double alpha = 0.0;
  /// sum_i |x_{i,t} - x_avg,t| at round start.
  double consistency_error = 0.0;
  /// alpha_t sum_k sum_i |tracked_i^k - grad F_t(x_avg^k)/n|.
  double tracking_residual = 0.0;
  /// max_k max_coord |sum_i pre_i^k - sum_i grad f_i(x_hat_i^k)|.
  double conservation_residual = 0.0;
  /// max_coord |x_avg^{K+1} - x_avg^1 - alpha sum_l (v_avg^l - x_avg^l)|.
  double recursion_residual = 0.0;
  /// Largest constraint violation of any inner or mixed iterate.
  double feasibility_violation = 0.0;
  /// max_k max_i |x^{k+1}_i - x_hat^k_i| / (alpha M); at most 1.
  double step_ratio = 0.0;
  /// F_t at the round-start and round-end network averages.
  double f_start = 0.0;
  double f_end = 0.0;
  std::uint64_t lo_calls_cumulative = 0;
  std::uint64_t messages_cumulative = 0;
};

/// Executes round t in place: on entry `st.x` holds x_{.,t}, on exit x_{.,t+1}.
inline RoundDiagnostics run_round(NetworkState& st, const LossStream& stream,
                                  const GraphSchedule& schedule, const ScheduleParams& params,
                                  const ConstraintSpec& spec, std::size_t t, Counters& counters) {
  const std::size_t T = stream.horizon();
  const std::size_t n = stream.agents();
  const auto d = static_cast<Eigen::Index>(stream.dim());
  const WeightMatrix& a = schedule.at(t);
  if (a.size() != n) throw ArgumentError("run_round: schedule size does not match agents");

  RoundDiagnostics diag;
  diag.t = t;
  diag.K = inner_K(params, t, T);
  diag.alpha = step_size(params, diag.K);
  const double alpha = diag.alpha;
  const double M = spec.diameter();
  const double inv_n = 1.0 / static_cast<double>(n);

  const Vector x_avg_start = st.x.rowwise().mean();
  for (std::size_t i = 0; i < n; ++i)
    diag.consistency_error += (st.x.col(static_cast<Eigen::Index>(i)) - x_avg_start).norm();
  diag.f_start = global_loss(stream, t, x_avg_start);

  st.has_grad_prev = false;
  Matrix fresh(d, static_cast<Eigen::Index>(n));
  Matrix vs(d, static_cast<Eigen::Index>(n));
  Vector drift = Vector::Zero(d);
  double tracking_sum = 0.0;

  for (std::size_t k = 1; k <= diag.K; ++k) {
    const Vector x_avg = st.x.rowwise().mean();
    st.x_mixed = consensus_step(st.x, a, &counters);

    for (std::size_t i = 0; i < n; ++i) {
      const auto c = static_cast<Eigen::Index>(i);
      grad_eval_into(stream, t, i, st.x_mixed.col(c), fresh.col(c));
    }
    tracking_step(st, a, fresh, k, &counters);

    for (std::size_t i = 0; i < n; ++i) {
      const auto c = static_cast<Eigen::Index>(i);
      FwStep step = fw_step(st.x_mixed.col(c), st.grad_tracked.col(c), alpha, spec, &counters);
      vs.col(c) = step.v;
      st.x.col(c) = step.x_next;
      diag.feasibility_violation =
          std::max({diag.feasibility_violation, spec.violation(st.x_mixed.col(c)),
                    spec.violation(st.x.col(c))});
      if (alpha > 0.0)
        diag.step_ratio = std::max(diag.step_ratio,
                                   (st.x.col(c) - st.x_mixed.col(c)).norm() / (alpha * M));
    }

    const Vector avg_grad = inv_n * global_grad(stream, t, x_avg);
    for (std::size_t i = 0; i < n; ++i)
      tracking_sum += (st.grad_tracked.col(static_cast<Eigen::Index>(i)) - avg_grad).norm();
    diag.conservation_residual =
        std::max(diag.conservation_residual,
                 (st.grad_tracked_pre.rowwise().sum() - fresh.rowwise().sum()).cwiseAbs().maxCoeff());
    drift += vs.rowwise().mean() - x_avg;
  }

  const Vector x_avg_end = st.x.rowwise().mean();
  diag.tracking_residual = alpha * tracking_sum;
  diag.recursion_residual = (x_avg_end - x_avg_start - alpha * drift).cwiseAbs().maxCoeff();
  diag.f_end = global_loss(stream, t, x_avg_end);
  diag.lo_calls_cumulative = counters.lo_calls;
  diag.messages_cumulative = counters.messages;
  return diag;
}

enum class InitMode { Vertex, Random };

struct Initialization {
  InitMode mode = InitMode::Vertex;
  std::uint64_t seed = 0;
};

/// Starting decisions x_{i,1}, one column per agent.
inline Matrix initial_decisions(const ConstraintSpec& spec, std::size_t n, const Initialization& init) {
  Matrix x(static_cast<Eigen::Index>(spec.dim()), static_cast<Eigen::Index>(n));
  if (init.mode == InitMode::Vertex) {
    x.colwise() = spec.initial_vertex();
    return x;
  }
  for (std::size_t i = 0; i < n; ++i) {
    rng::Rng r(rng::mix(init.seed, i));
    x.col(static_cast<Eigen::Index>(i)) = spec.sample(r);
  }
  return x;
}

struct Trajectory {
  /// decisions[t-1] holds x_{.,t} (d x n) for t = 1..T+1.
  std::vector<Matrix> decisions;
  std::vector<std::size_t> K;
  std::uint64_t lo_calls = 0;
  std::uint64_t messages = 0;
  std::uint64_t edge_messages = 0;
  std::vector<RoundDiagnostics> rounds;

  std::size_t horizon() const { return rounds.size(); }
  /// Committed decision of agent j at round t (1-based), t in [1, T+1].
  Vector decision(std::size_t j, std::size_t t) const {
    if (t < 1 || t > decisions.size()) throw ArgumentError("trajectory: round out of range");
    if (j >= static_cast<std::size_t>(decisions[t - 1].cols()))
      throw ArgumentError("trajectory: agent out of range");
    return decisions[t - 1].col(static_cast<Eigen::Index>(j));
  }
};

/// Runs every round 1..T. Any failure is rethrown as RoundError naming the round.
inline Trajectory run(const LossStream& stream, const ConstraintSpec& spec, const GraphSchedule& schedule,
                      const ScheduleParams& params, const Initialization& init = {}) {
  const std::size_t n = stream.agents();
  const std::size_t T = stream.horizon();
  spec.check_dim(static_cast<Eigen::Index>(stream.dim()), "run");
  if (schedule.agents() != n) throw ArgumentError("run: schedule and stream disagree on n");
  if (schedule.horizon() < T) throw ArgumentError("run: schedule shorter than stream");

  Trajectory traj;
  traj.decisions.reserve(T + 1);
  traj.rounds.reserve(T);
  NetworkState st(stream.dim(), n);
  st.x = initial_decisions(spec, n, init);
  traj.decisions.push_back(st.x);
  Counters counters;
  for (std::size_t t = 1; t <= T; ++t) {
    try {
      traj.rounds.push_back(run_round(st, stream, schedule, params, spec, t, counters));
    } catch (const std::exception& e) {
      throw RoundError(t, e.what());
    }
    traj.K.push_back(traj.rounds.back().K);
    traj.decisions.push_back(st.x);
  }
  traj.lo_calls = counters.lo_calls;
  traj.messages = counters.messages;
  traj.edge_messages = counters.edge_messages;
  return traj;
}

/// t,agent,x_1..x_d for t = 1..T+1.
inline std::string write_trajectory_csv(const Trajectory& traj) {
  const auto d = traj.decisions.front().rows();
  std::vector<std::string> header{"t", "agent"};
  for (Eigen::Index j = 1; j <= d; ++j) header.push_back("x_" + std::to_string(j));
  io::CsvWriter w(header);
  for (std::size_t t = 1; t <= traj.decisions.size(); ++t) {
    const Matrix& x = traj.decisions[t - 1];
    for (Eigen::Index i = 0; i < x.cols(); ++i) {
      std::vector<std::string> row{std::to_string(t), std::to_string(i)};
      for (Eigen::Index j = 0; j < d; ++j) row.push_back(io::format_double(x(j, i)));
      w.row(row);
    }
  }
  return w.str();
}

inline std::string write_diagnostics_csv(const Trajectory& traj) {
  io::CsvWriter w({"t", "K_t", "alpha_t", "consistency_error", "tracking_residual",
                   "lo_calls_cumulative", "messages_cumulative"});
  for (const auto& r : traj.rounds)
    w.row({std::to_string(r.t), std::to_string(r.K), io::format_double(r.alpha),
           io::format_double(r.consistency_error), io::format_double(r.tracking_residual),
           std::to_string(r.lo_calls_cumulative), std::to_string(r.messages_cumulative)});
  return w.str();
}

/// Invariant monitors per round.
inline std::string write_monitors_csv(const Trajectory& traj) {
  io::CsvWriter w({"t", "conservation_residual", "recursion_residual", "feasibility_violation",
                   "step_ratio", "f_start", "f_end"});
  for (const auto& r : traj.rounds)
    w.row({std::to_string(r.t), io::format_double(r.conservation_residual),
           io::format_double(r.recursion_residual), io::format_double(r.feasibility_violation),
           io::format_double(r.step_ratio), io::format_double(r.f_start), io::format_double(r.f_end)});
  return w.str();
}

}  // namespace domfw
