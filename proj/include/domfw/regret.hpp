#pragma once

// Per-round optima, dynamic regret
//   R_j(T) = sum_t F_t(x_{j,t}) - sum_t F_t(x_t*),
// the (avg, sup, inf) envelopes of R_j(t)/t, and the closed-form regret bound
// E1 + E2 H_T + E3 sum_t 1/K_t together with its two supporting lemma bounds.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "domfw/algorithm.hpp"
#include "domfw/errors.hpp"
#include "domfw/io.hpp"
#include "domfw/network.hpp"
#include "domfw/problem.hpp"

namespace domfw {

namespace detail {

/// Euclidean projection onto {x >= 0, sum x = z} by the sorted-threshold rule.
inline Vector project_simplex(VectorCRef y, double z) {
  Vector u = y;
  std::sort(u.data(), u.data() + u.size(), std::greater<>());
  double cumsum = 0.0;
  double theta = 0.0;
  for (Eigen::Index j = 0; j < u.size(); ++j) {
    cumsum += u[j];
    const double candidate = (cumsum - z) / static_cast<double>(j + 1);
    if (u[j] - candidate > 0.0) theta = candidate;
  }
  return (y.array() - theta).max(0.0).matrix();
}

}  // namespace detail

/// Euclidean projection onto X. Used only by the cross-check solver.
inline Vector project(const ConstraintSpec& spec, VectorCRef y) {
  spec.check_dim(y.size(), "project");
  require_finite(y, "project");
  if (spec.kind() == ConstraintKind::UnitSimplex) return detail::project_simplex(y, 1.0);
  if (y.lpNorm<1>() <= spec.radius()) return y;
  const Vector w = detail::project_simplex(y.cwiseAbs(), spec.radius());
  Vector x(y.size());
  for (Eigen::Index j = 0; j < y.size(); ++j) x[j] = y[j] < 0.0 ? -w[j] : w[j];
  return x;
}

struct OptimumRecord {
  std::size_t t = 0;
  Vector x_star;
  double f_star = 0.0;
  /// max_v <x_star - v, grad F_t(x_star)>, an upper bound on suboptimality.
  double gap = 0.0;
  std::size_t iterations = 0;
};

inline double fw_gap(const ConstraintSpec& spec, VectorCRef x, VectorCRef g) {
  return g.dot(x - spec.lmo(g));
}

/// Minimizes F_t over X by fully corrective Frank-Wolfe: each LMO vertex joins
/// an active set after an exact line-search step, then F_t is minimized exactly
/// over the convex hull of the active vertices (KKT solve plus ratio test).
/// Stops once the Frank-Wolfe gap is <= tol.
inline OptimumRecord solve_round_optimum(const LossStream& stream, std::size_t t,
                                         const ConstraintSpec& spec, double tol = 1e-9,
                                         std::size_t max_iterations = 100'000) {
  if (!(tol > 0.0)) throw ArgumentError("solve_round_optimum: tol must be > 0");
  spec.check_dim(static_cast<Eigen::Index>(stream.dim()), "solve_round_optimum");
  const RoundQuadratic q = round_quadratic(stream, t);
  const std::size_t nv = spec.vertex_count();
  std::vector<Vector> verts;
  verts.reserve(nv);
  for (std::size_t k = 0; k < nv; ++k) verts.push_back(spec.vertex(k));

  std::size_t start = 0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < nv; ++k) {
    const double f = q.value(verts[k]);
    if (f < best) best = f, start = k;
  }
  std::vector<std::size_t> active{start};
  std::vector<double> w(nv, 0.0);
  w[start] = 1.0;
  Vector x = verts[start];

  auto rebuild = [&] {
    x.setZero();
    for (std::size_t k : active) x += w[k] * verts[k];
  };
  auto prune = [&] {
    std::vector<std::size_t> kept;
    double total = 0.0;
    for (std::size_t k : active) {
      if (w[k] > 1e-15) kept.push_back(k), total += w[k];
      else w[k] = 0.0;
    }
    for (std::size_t k : kept) w[k] /= total;
    active = std::move(kept);
  };

  // Exact minimizer of F_t over the convex hull of the active set.
  auto correct = [&] {
    for (std::size_t pass = 0; pass < 2 * nv + 2 && active.size() > 1; ++pass) {
      const auto m = static_cast<Eigen::Index>(active.size());
      Matrix V(static_cast<Eigen::Index>(stream.dim()), m);
      for (Eigen::Index c = 0; c < m; ++c) V.col(c) = verts[active[static_cast<std::size_t>(c)]];
      Matrix kkt = Matrix::Zero(m + 1, m + 1);
      kkt.topLeftCorner(m, m) = V.transpose() * q.hessian * V;
      kkt.block(0, m, m, 1).setOnes();
      kkt.block(m, 0, 1, m).setOnes();
      Vector rhs(m + 1);
      rhs.head(m) = V.transpose() * q.linear;
      rhs(m) = 1.0;
      const Vector sol = kkt.completeOrthogonalDecomposition().solve(rhs);
      const Vector u = sol.head(m);
      if (!u.allFinite()) return;
      double tau = 1.0;
      for (Eigen::Index c = 0; c < m; ++c) {
        const double wk = w[active[static_cast<std::size_t>(c)]];
        if (u(c) < 0.0) tau = std::min(tau, wk / (wk - u(c)));
      }
      Vector cur(m);
      for (Eigen::Index c = 0; c < m; ++c) cur(c) = w[active[static_cast<std::size_t>(c)]];
      Vector cand = cur + tau * (u - cur);
      Vector x_cand = V * cand;
      if (q.value(x_cand) > q.value(V * cur)) return;  // numerical safeguard
      for (Eigen::Index c = 0; c < m; ++c) w[active[static_cast<std::size_t>(c)]] = std::max(cand(c), 0.0);
      prune();
      rebuild();
      if (tau >= 1.0) return;
    }
  };

  OptimumRecord rec;
  rec.t = t;
  double gap = std::numeric_limits<double>::infinity();
  std::size_t it = 0;
  for (;; ++it) {
    const Vector g = q.gradient(x);
    const std::size_t s = spec.lmo_index(g);
    gap = g.dot(x - verts[s]);
    if (gap <= tol) break;
    if (it >= max_iterations)
      throw SolverError("solve_round_optimum: iteration cap reached at round " + std::to_string(t) +
                            " with gap " + io::format_double(gap),
                        gap);

    const Vector dir = verts[s] - x;
    const double curvature = dir.dot(q.hessian * dir);
    double step = curvature > 0.0 ? gap / curvature : 1.0;
    step = std::clamp(step, 0.0, 1.0);
    for (std::size_t k : active) w[k] *= (1.0 - step);
    if (std::find(active.begin(), active.end(), s) == active.end()) active.push_back(s);
    w[s] += step;
    prune();
    rebuild();
    correct();
  }
  rec.x_star = x;
  rec.f_star = global_loss(stream, t, x);
  rec.gap = gap;
  rec.iterations = it;
  return rec;
}

/// Independent cross-check: accelerated projected gradient with adaptive
/// restart, step 1/L where L = sum_i |a_i|^2 + 2 n lambda1 bounds the Hessian.
inline OptimumRecord solve_round_optimum_projected(const LossStream& stream, std::size_t t,
                                                   const ConstraintSpec& spec,
                                                   std::size_t max_iterations = 200'000) {
  spec.check_dim(static_cast<Eigen::Index>(stream.dim()), "solve_round_optimum_projected");
  double L = 2.0 * stream.lambda1() * static_cast<double>(stream.agents());
  for (std::size_t i = 0; i < stream.agents(); ++i) L += stream.feature(i, t).squaredNorm();
  if (!(L > 0.0)) L = 1.0;

  Vector x = project(spec, Vector::Zero(static_cast<Eigen::Index>(stream.dim())));
  Vector y = x;
  double momentum = 1.0;
  std::size_t it = 0;
  for (; it < max_iterations; ++it) {
    const Vector x_next = project(spec, y - global_grad(stream, t, y) / L);
    const double next_momentum = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * momentum * momentum));
    const Vector delta = x_next - x;
    if ((y - x_next).dot(delta) > 0.0) {
      y = x_next;
      momentum = 1.0;
    } else {
      y = x_next + ((momentum - 1.0) / next_momentum) * delta;
      momentum = next_momentum;
    }
    x = x_next;
    if (delta.lpNorm<Eigen::Infinity>() <= 1e-15) break;
  }
  OptimumRecord rec;
  rec.t = t;
  rec.x_star = x;
  rec.f_star = global_loss(stream, t, x);
  rec.gap = fw_gap(spec, x, global_grad(stream, t, x));
  rec.iterations = it;
  return rec;
}

inline std::vector<OptimumRecord> solve_all_optima(const LossStream& stream, const ConstraintSpec& spec,
                                                   double tol = 1e-9) {
  std::vector<OptimumRecord> out;
  out.reserve(stream.horizon());
  for (std::size_t t = 1; t <= stream.horizon(); ++t)
    out.push_back(solve_round_optimum(stream, t, spec, tol));
  return out;
}

namespace detail {

inline void check_optima(const std::vector<OptimumRecord>& optima, std::size_t T) {
  if (optima.size() < T) throw ArgumentError("regret: optima missing for round " + std::to_string(optima.size() + 1));
  for (std::size_t t = 1; t <= T; ++t)
    if (optima[t - 1].t != t) throw ArgumentError("regret: optimum for round " + std::to_string(t) + " missing");
}

}  // namespace detail

/// Cumulative dynamic regret of agent j, R_j(t) for t = 1..T, evaluated at the
/// committed round-start decisions x_{j,t}.
inline std::vector<double> dynamic_regret(const Trajectory& traj, const std::vector<OptimumRecord>& optima,
                                          const LossStream& stream, std::size_t j) {
  const std::size_t T = std::min(traj.horizon(), stream.horizon());
  detail::check_optima(optima, T);
  std::vector<double> cumulative(T);
  double total = 0.0;
  for (std::size_t t = 1; t <= T; ++t) {
    total += global_loss(stream, t, traj.decision(j, t)) - optima[t - 1].f_star;
    cumulative[t - 1] = total;
  }
  return cumulative;
}

/// R_j(t) for every agent: row j, column t-1.
struct RegretSeries {
  Matrix cumulative;
  /// Smallest per-round increment F_t(x_{j,t}) - F_t(x_t*) seen.
  double min_increment = std::numeric_limits<double>::infinity();

  std::size_t agents() const { return static_cast<std::size_t>(cumulative.rows()); }
  std::size_t horizon() const { return static_cast<std::size_t>(cumulative.cols()); }
  double average(std::size_t j, std::size_t t) const {
    return cumulative(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(t - 1)) / static_cast<double>(t);
  }
  double final_max() const { return cumulative.col(cumulative.cols() - 1).maxCoeff(); }
};

inline RegretSeries regret_series(const Trajectory& traj, const std::vector<OptimumRecord>& optima,
                                  const LossStream& stream) {
  const std::size_t T = std::min(traj.horizon(), stream.horizon());
  const std::size_t n = stream.agents();
  RegretSeries out;
  out.cumulative.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(T));
  detail::check_optima(optima, T);
  for (std::size_t j = 0; j < n; ++j) {
    double total = 0.0;
    for (std::size_t t = 1; t <= T; ++t) {
      const double inc = global_loss(stream, t, traj.decision(j, t)) - optima[t - 1].f_star;
      out.min_increment = std::min(out.min_increment, inc);
      total += inc;
      out.cumulative(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(t - 1)) = total;
    }
  }
  return out;
}

/// Pointwise mean, max and min of R_j(t)/t over agents.
struct Envelopes {
  std::vector<double> avg;
  std::vector<double> sup;
  std::vector<double> inf;
};

inline Envelopes envelopes(const std::vector<std::vector<double>>& cumulative) {
  if (cumulative.empty()) throw ArgumentError("envelopes: need at least one series");
  const std::size_t T = cumulative.front().size();
  for (const auto& s : cumulative)
    if (s.size() != T) throw ArgumentError("envelopes: series lengths differ");
  Envelopes e;
  e.avg.resize(T);
  e.sup.resize(T);
  e.inf.resize(T);
  for (std::size_t t = 1; t <= T; ++t) {
    double sum = 0.0;
    double hi = -std::numeric_limits<double>::infinity();
    double lo = std::numeric_limits<double>::infinity();
    for (const auto& s : cumulative) {
      const double v = s[t - 1] / static_cast<double>(t);
      sum += v;
      hi = std::max(hi, v);
      lo = std::min(lo, v);
    }
    e.avg[t - 1] = sum / static_cast<double>(cumulative.size());
    e.sup[t - 1] = hi;
    e.inf[t - 1] = lo;
  }
  return e;
}

inline Envelopes envelopes(const RegretSeries& series) {
  std::vector<std::vector<double>> rows(series.agents());
  for (std::size_t j = 0; j < series.agents(); ++j) {
    const auto r = series.cumulative.row(static_cast<Eigen::Index>(j));
    rows[j].resize(series.horizon());
    for (std::size_t t = 0; t < series.horizon(); ++t) rows[j][t] = r(static_cast<Eigen::Index>(t));
  }
  return envelopes(rows);
}

/// Closed-form regret bound terms and the two lemma bounds that feed it.
struct TheoremBound {
  double D1 = 0.0;
  double D2 = 0.0;
  double E1 = 0.0;
  double E2 = 0.0;
  double E3 = 0.0;
  double HT = 0.0;
  double sum_inv_K = 0.0;
  double value = 0.0;
  /// Bound on sum_t sum_i |x_{i,t} - x_avg,t|.
  double consistency_bound = 0.0;
  /// Bound on sum_t sum_k sum_i alpha_t |tracked_i^k - grad F_t(x_avg^k)/n|.
  double tracking_bound = 0.0;
};

/// E2 = 2n / (1 - e^{-1/rho}).
inline double regret_E2(std::size_t n, double rho) {
  if (!(rho >= 1.0)) throw ArgumentError("regret_E2: rho must be >= 1");
  return 2.0 * static_cast<double>(n) / (-std::expm1(-1.0 / rho));
}

/// Evaluates E1 + E2 H_T + E3 sum_t 1/K_t with alpha_t = 1/(rho K_t), using
/// the analytic upper bound for H_T. `x_init` holds x_{i,1} column-per-agent.
inline TheoremBound theorem_bound(const ProblemConstants& pc, const MixingConstants& mc,
                                  const ScheduleParams& params, const LossStream& stream,
                                  const ConstraintSpec& spec, std::span<const std::size_t> K,
                                  const Matrix& x_init) {
  if (!(params.rho >= 1.0)) throw ArgumentError("theorem_bound: rho must be >= 1");
  if (K.empty() || K.front() < 2) throw ArgumentError("theorem_bound: needs K_1 >= 2");
  const double n = static_cast<double>(stream.agents());
  if (x_init.cols() != static_cast<Eigen::Index>(stream.agents()))
    throw ArgumentError("theorem_bound: x_init must have one column per agent");

  const double rho = params.rho;
  const double M = pc.M, L = pc.L_X, G = pc.G_X;
  const double sigma = mc.sigma1, Gamma = mc.gamma1;
  const double one_minus_sigma = 1.0 - sigma;
  const double one_minus_sigma_K1 = 1.0 - std::pow(sigma, static_cast<double>(K.front()));
  const double contraction = -std::expm1(-1.0 / rho);  // 1 - e^{-1/rho}

  const Vector x_avg = x_init.rowwise().mean();
  double norm_sum = 0.0, spread = 0.0;
  for (Eigen::Index i = 0; i < x_init.cols(); ++i) {
    norm_sum += x_init.col(i).norm();
    spread += (x_init.col(i) - x_avg).norm();
  }

  double sum_alpha = 0.0, sum_alpha2K = 0.0, sum_inv_K = 0.0;
  for (std::size_t k : K) {
    const double kk = static_cast<double>(k);
    sum_inv_K += 1.0 / kk;
    sum_alpha += 1.0 / (rho * kk);
    sum_alpha2K += 1.0 / (rho * rho * kk);
  }

  const double g_ratio = n * Gamma / one_minus_sigma;  // n Gamma1 / (1 - sigma1)
  TheoremBound b;
  b.D1 = (2.0 * n * Gamma * G / one_minus_sigma + G) * (n * M + g_ratio * (norm_sum + n * M)) +
         n * n * Gamma * L / one_minus_sigma;
  b.D2 = (2.0 * n * n * Gamma * G * M / one_minus_sigma) * (g_ratio + 3.0) + 2.0 * n * M * G;
  b.E1 = n * n * L * Gamma / one_minus_sigma_K1 * norm_sum + n * L * spread + n * L * M / contraction;
  b.E2 = regret_E2(stream.agents(), rho);
  const double consistency_coeff =
      n * n * M * Gamma / (sigma * one_minus_sigma * one_minus_sigma_K1) + 2.0 * n * M;
  b.E3 = 2.0 * M * (b.D1 / rho + b.D2 / (rho * rho)) / contraction +
         n * G * M * M / (2.0 * rho) / contraction +
         (n * n * L * M / rho) * (n * Gamma / (sigma * one_minus_sigma * one_minus_sigma_K1) + 2.0);
  b.HT = HT_upper_bound(stream, spec);
  b.sum_inv_K = sum_inv_K;
  b.value = b.E1 + b.E2 * b.HT + b.E3 * sum_inv_K;
  b.consistency_bound = n * Gamma / one_minus_sigma_K1 * norm_sum + spread + consistency_coeff * sum_alpha;
  b.tracking_bound = b.D1 * sum_alpha + b.D2 * sum_alpha2K;
  return b;
}

/// Per-round inner-loop certificate at k = K_t:
///   F_t(x_avg,t+1) - F_t* <= (1-alpha)^K (F_t(x_avg,t) - F_t*) + 2M tracking + n alpha G M^2 / 2.
struct InnerLoopCheck {
  bool holds = true;
  double worst_margin = std::numeric_limits<double>::infinity();
  std::size_t violations = 0;
};

inline InnerLoopCheck check_inner_convergence(const Trajectory& traj, const std::vector<OptimumRecord>& optima,
                                              const ProblemConstants& pc, std::size_t n) {
  detail::check_optima(optima, traj.horizon());
  InnerLoopCheck out;
  for (const auto& r : traj.rounds) {
    const double fstar = optima[r.t - 1].f_star;
    const double rhs = std::pow(1.0 - r.alpha, static_cast<double>(r.K)) * (r.f_start - fstar) +
                       2.0 * pc.M * r.tracking_residual +
                       static_cast<double>(n) * r.alpha * pc.G_X * pc.M * pc.M / 2.0;
    const double margin = rhs - (r.f_end - fstar);
    out.worst_margin = std::min(out.worst_margin, margin);
    if (margin < 0.0) {
      out.holds = false;
      ++out.violations;
    }
  }
  return out;
}

inline std::string write_regret_csv(const RegretSeries& s) {
  io::CsvWriter w({"t", "agent", "cumulative_regret", "average_regret"});
  for (std::size_t t = 1; t <= s.horizon(); ++t)
    for (std::size_t j = 0; j < s.agents(); ++j)
      w.row({std::to_string(t), std::to_string(j),
             io::format_double(s.cumulative(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(t - 1))),
             io::format_double(s.average(j, t))});
  return w.str();
}

inline std::string write_envelopes_csv(const Envelopes& e) {
  io::CsvWriter w({"t", "avg", "sup", "inf"});
  for (std::size_t t = 1; t <= e.avg.size(); ++t)
    w.row({std::to_string(t), io::format_double(e.avg[t - 1]), io::format_double(e.sup[t - 1]),
           io::format_double(e.inf[t - 1])});
  return w.str();
}

}  // namespace domfw
