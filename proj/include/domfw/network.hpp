#pragma once

// Time-varying communication graphs with doubly stochastic weights, products of
// per-round weight powers, and the geometric mixing certificates
//   |[Phi^K(t,s)]_ij - 1/n| <= Gamma1 sigma1^(sum_{p=s}^t K_p - 1).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <queue>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "domfw/errors.hpp"
#include "domfw/io.hpp"
#include "domfw/rng.hpp"

namespace domfw {

using Edge = std::pair<std::size_t, std::size_t>;

/// An n x n mixing matrix and the smallest positive entry it contains.
/// Construction does not validate; see validate().
class WeightMatrix {
 public:
  explicit WeightMatrix(Eigen::MatrixXd a) : a_(std::move(a)) {
    if (a_.rows() != a_.cols() || a_.rows() == 0)
      throw ArgumentError("weight matrix must be square and non-empty");
    zeta_ = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < a_.cols(); ++j) {
      for (Eigen::Index i = 0; i < a_.rows(); ++i) {
        const double w = a_(i, j);
        if (w > 0.0) zeta_ = std::min(zeta_, w);
        if (w != 0.0 && i != j) ++directed_edges_;
      }
    }
    if (!std::isfinite(zeta_)) zeta_ = 0.0;
  }

  const Eigen::MatrixXd& matrix() const noexcept { return a_; }
  std::size_t size() const noexcept { return static_cast<std::size_t>(a_.rows()); }
  double zeta() const noexcept { return zeta_; }
  /// Off-diagonal nonzeros: one transmission each per exchange.
  std::size_t directed_edges() const noexcept { return directed_edges_; }

 private:
  Eigen::MatrixXd a_;
  double zeta_ = 0.0;
  std::size_t directed_edges_ = 0;
};

struct CheckResult {
  bool pass = true;
  double max_violation = 0.0;
};

struct ValidationReport {
  CheckResult row_sums;
  CheckResult column_sums;
  CheckResult nonnegative;
  CheckResult positive_diagonal;
  CheckResult strongly_connected;

  bool ok() const {
    return row_sums.pass && column_sums.pass && nonnegative.pass && positive_diagonal.pass &&
           strongly_connected.pass;
  }
};

namespace detail {

/// Every node reachable from node 0 along the support, forwards and backwards.
inline bool support_strongly_connected(const Eigen::MatrixXd& a) {
  const auto n = a.rows();
  auto reach_all = [&](bool forward) {
    std::vector<char> seen(static_cast<std::size_t>(n), 0);
    std::queue<Eigen::Index> q;
    q.push(0);
    seen[0] = 1;
    Eigen::Index count = 1;
    while (!q.empty()) {
      const auto u = q.front();
      q.pop();
      for (Eigen::Index v = 0; v < n; ++v) {
        const double w = forward ? a(v, u) : a(u, v);
        if (w != 0.0 && !seen[static_cast<std::size_t>(v)]) {
          seen[static_cast<std::size_t>(v)] = 1;
          ++count;
          q.push(v);
        }
      }
    }
    return count == n;
  };
  return reach_all(true) && reach_all(false);
}

}  // namespace detail

/// Checks double stochasticity, nonnegativity, self-loops and strong
/// connectivity of the support. Reports every check, never throws for a
/// square input.
inline ValidationReport validate(const Eigen::MatrixXd& a, double tol = 1e-12) {
  if (a.rows() != a.cols() || a.rows() == 0) throw ArgumentError("validate: matrix must be square");
  ValidationReport r;
  const double row_dev = (a.rowwise().sum().array() - 1.0).abs().maxCoeff();
  const double col_dev = (a.colwise().sum().array() - 1.0).abs().maxCoeff();
  r.row_sums = {row_dev <= tol, row_dev};
  r.column_sums = {col_dev <= tol, col_dev};
  const double neg = std::max(0.0, -a.minCoeff());
  r.nonnegative = {neg == 0.0, neg};
  const double diag_min = a.diagonal().minCoeff();
  r.positive_diagonal = {diag_min > 0.0, std::max(0.0, -diag_min)};
  const bool conn = detail::support_strongly_connected(a);
  r.strongly_connected = {conn, conn ? 0.0 : 1.0};
  return r;
}

inline ValidationReport validate(const WeightMatrix& w, double tol = 1e-12) {
  return validate(w.matrix(), tol);
}

/// Metropolis-Hastings weights on an undirected graph:
/// A_ij = 1/(1 + max(deg_i, deg_j)) on edges, diagonal absorbs the remainder.
inline WeightMatrix metropolis_weights(const std::vector<Edge>& edges, std::size_t n) {
  if (n < 1) throw ArgumentError("metropolis_weights: n must be >= 1");
  std::set<Edge> unique;
  for (auto [u, v] : edges) {
    if (u >= n || v >= n) throw ArgumentError("metropolis_weights: edge endpoint out of range");
    if (u == v) continue;
    unique.insert({std::min(u, v), std::max(u, v)});
  }
  std::vector<std::size_t> degree(n, 0);
  for (auto [u, v] : unique) {
    ++degree[u];
    ++degree[v];
  }
  const auto nn = static_cast<Eigen::Index>(n);
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(nn, nn);
  for (auto [u, v] : unique) {
    const double w = 1.0 / (1.0 + static_cast<double>(std::max(degree[u], degree[v])));
    a(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(v)) = w;
    a(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(u)) = w;
  }
  for (Eigen::Index i = 0; i < nn; ++i) {
    double off = 0.0;
    for (Eigen::Index j = 0; j < nn; ++j)
      if (j != i) off += a(i, j);
    a(i, i) = 1.0 - off;
  }
  if (!detail::support_strongly_connected(a))
    throw ConstructionError("metropolis_weights: graph is not connected");
  return WeightMatrix(std::move(a));
}

/// Per-round weight matrices A_1..A_T with a zeta valid for every round.
class GraphSchedule {
 public:
  explicit GraphSchedule(std::vector<WeightMatrix> rounds) : rounds_(std::move(rounds)) {
    if (rounds_.empty()) throw ArgumentError("schedule needs at least one round");
    n_ = rounds_.front().size();
    zeta_ = std::numeric_limits<double>::infinity();
    for (const auto& w : rounds_) {
      if (w.size() != n_) throw ArgumentError("schedule rounds differ in size");
      zeta_ = std::min(zeta_, w.zeta());
    }
  }

  static GraphSchedule from_matrices(const std::vector<Eigen::MatrixXd>& mats) {
    std::vector<WeightMatrix> rounds;
    rounds.reserve(mats.size());
    for (const auto& m : mats) rounds.emplace_back(m);
    return GraphSchedule(std::move(rounds));
  }

  std::size_t agents() const noexcept { return n_; }
  std::size_t horizon() const noexcept { return rounds_.size(); }
  /// Minimum positive weight across the whole schedule.
  double zeta() const noexcept { return zeta_; }

  const WeightMatrix& at(std::size_t t) const {
    if (t < 1 || t > rounds_.size())
      throw ArgumentError("schedule round " + std::to_string(t) + " outside [1, " +
                          std::to_string(rounds_.size()) + "]");
    return rounds_[t - 1];
  }

 private:
  std::vector<WeightMatrix> rounds_;
  std::size_t n_ = 0;
  double zeta_ = 0.0;
};

/// One round of random_connected_schedule; a pure function of (n, p, seed, t).
inline WeightMatrix random_connected_round(std::size_t n, double edge_prob, std::uint64_t seed,
                                           std::size_t t) {
  rng::Rng r(rng::mix(seed, t));
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (r.uniform() < edge_prob) edges.emplace_back(i, j);
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  r.shuffle(perm);
  for (std::size_t k = 0; k + 1 < n; ++k) edges.emplace_back(perm[k], perm[k + 1]);
  if (n > 2) edges.emplace_back(perm[n - 1], perm[0]);
  return metropolis_weights(edges, n);
}

/// Erdos-Renyi edges at rate p unioned with a random Hamiltonian cycle each
/// round, so every round is connected; Metropolis weights. n = 1 yields [1].
inline GraphSchedule random_connected_schedule(std::size_t n, std::size_t horizon, double edge_prob,
                                               std::uint64_t seed) {
  if (n < 1 || horizon < 1) throw ArgumentError("random_connected_schedule: n, T must be >= 1");
  if (!(edge_prob >= 0.0 && edge_prob <= 1.0))
    throw ArgumentError("random_connected_schedule: edge probability outside [0, 1]");
  std::vector<WeightMatrix> rounds;
  rounds.reserve(horizon);
  for (std::size_t t = 1; t <= horizon; ++t)
    rounds.push_back(random_connected_round(n, edge_prob, seed, t));
  return GraphSchedule(std::move(rounds));
}

/// sigma1 = 1 - zeta/(4 n^2), Gamma1 = 1/sigma1.
struct MixingConstants {
  double sigma1 = 0.0;
  double gamma1 = 0.0;

  static MixingConstants from(double zeta, std::size_t n) {
    if (!(zeta > 0.0) || n < 1) throw ArgumentError("mixing constants need zeta > 0 and n >= 1");
    const double nn = static_cast<double>(n);
    MixingConstants m;
    m.sigma1 = 1.0 - zeta / (4.0 * nn * nn);
    m.gamma1 = 1.0 / m.sigma1;
    return m;
  }

  /// Gamma1 * sigma1^exponent.
  double bound(double exponent) const { return gamma1 * std::pow(sigma1, exponent); }
};

inline MixingConstants mixing_constants(const GraphSchedule& s) {
  return MixingConstants::from(s.zeta(), s.agents());
}

/// Worst per-round contraction max_t |A_t - 11'/n|_2, the spectral alternative
/// to sigma1 (reported alongside it, never used in the certificates).
inline double spectral_sigma(const GraphSchedule& s) {
  const auto n = static_cast<Eigen::Index>(s.agents());
  const Eigen::MatrixXd avg = Eigen::MatrixXd::Constant(n, n, 1.0 / static_cast<double>(n));
  double worst = 0.0;
  for (std::size_t t = 1; t <= s.horizon(); ++t) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(s.at(t).matrix() - avg);
    worst = std::max(worst, svd.singularValues()(0));
  }
  return worst;
}

namespace detail {

inline void check_window(const GraphSchedule& s, std::span<const std::size_t> K, std::size_t t,
                         std::size_t from) {
  if (t > s.horizon() || t > K.size())
    throw ArgumentError("transition_product: round " + std::to_string(t) + " beyond schedule");
  if (from < 1 || from > t + 1)
    throw ArgumentError("transition_product: need 1 <= s <= t + 1");
  for (std::size_t p = from; p <= t; ++p)
    if (K[p - 1] < 1) throw ArgumentError("transition_product: K_p must be >= 1");
}

}  // namespace detail

/// Phi^K(t,s) = A_t^{K_t} A_{t-1}^{K_{t-1}} ... A_s^{K_s}, with Phi^K(t,t+1) = I.
/// `K[p-1]` is the inner count of round p. Multiplied left to right.
inline Eigen::MatrixXd transition_product(const GraphSchedule& sched, std::span<const std::size_t> K,
                                          std::size_t t, std::size_t s) {
  detail::check_window(sched, K, t, s);
  const auto n = static_cast<Eigen::Index>(sched.agents());
  Eigen::MatrixXd phi = Eigen::MatrixXd::Identity(n, n);
  for (std::size_t p = t; p >= s && p >= 1; --p) {
    const auto& a = sched.at(p).matrix();
    for (std::size_t k = 0; k < K[p - 1]; ++k) phi = phi * a;
    if (p == 1) break;
  }
  return phi;
}

struct MixingCheck {
  bool holds = true;
  /// min over entries of (bound - |Phi_ij - 1/n|); positive when the bound holds.
  double worst_margin = std::numeric_limits<double>::infinity();
  double max_deviation = 0.0;
  double bound = 0.0;
  /// Same certificate for the shifted products Phi^K(t,s+1) A_s^{K_s - l}.
  bool shifted_holds = true;
  double shifted_worst_margin = std::numeric_limits<double>::infinity();
};

/// Evaluates both sides of the geometric mixing certificate entrywise for
/// Phi^K(t,s), and for Phi^K(t,s+1) A_s^{K_s-l} with 1 <= l <= K_s - 1.
inline MixingCheck check_mixing(const GraphSchedule& sched, std::span<const std::size_t> K,
                                std::size_t t, std::size_t s, const MixingConstants& mc) {
  detail::check_window(sched, K, t, s);
  if (s > t) throw ArgumentError("check_mixing: need s <= t");
  const auto n = static_cast<Eigen::Index>(sched.agents());
  const double inv_n = 1.0 / static_cast<double>(n);

  double tail = 0.0;  // sum_{p=s+1}^t K_p
  for (std::size_t p = s + 1; p <= t; ++p) tail += static_cast<double>(K[p - 1]);
  const double total = tail + static_cast<double>(K[s - 1]);

  MixingCheck out;
  const Eigen::MatrixXd prefix = transition_product(sched, K, t, s + 1);
  const auto& a_s = sched.at(s).matrix();
  Eigen::MatrixXd shifted = prefix;
  // m = K_s - l factors of A_s appended; exponent sum K - l - 1 = tail + m - 1.
  for (std::size_t m = 1; m < K[s - 1]; ++m) {
    shifted = shifted * a_s;
    const double dev = (shifted.array() - inv_n).abs().maxCoeff();
    const double margin = mc.bound(tail + static_cast<double>(m) - 1.0) - dev;
    out.shifted_worst_margin = std::min(out.shifted_worst_margin, margin);
    if (margin < 0.0) out.shifted_holds = false;
  }
  const Eigen::MatrixXd phi = shifted * a_s;
  out.max_deviation = (phi.array() - inv_n).abs().maxCoeff();
  out.bound = mc.bound(total - 1.0);
  out.worst_margin = out.bound - out.max_deviation;
  out.holds = out.worst_margin >= 0.0;
  return out;
}

inline MixingCheck check_mixing(const GraphSchedule& sched, std::span<const std::size_t> K,
                                std::size_t t, std::size_t s) {
  return check_mixing(sched, K, t, s, mixing_constants(sched));
}

/// max_ij |[Phi^K(t,1)]_ij - 1/n| for t = 1..t_max, and whether it never increases.
struct ContractionProfile {
  std::vector<double> deviation;
  bool nonincreasing = true;
};

inline ContractionProfile contraction_profile(const GraphSchedule& sched,
                                              std::span<const std::size_t> K, std::size_t t_max) {
  detail::check_window(sched, K, t_max, 1);
  const auto n = static_cast<Eigen::Index>(sched.agents());
  const double inv_n = 1.0 / static_cast<double>(n);
  ContractionProfile out;
  Eigen::MatrixXd phi = Eigen::MatrixXd::Identity(n, n);
  for (std::size_t t = 1; t <= t_max; ++t) {
    Eigen::MatrixXd step = Eigen::MatrixXd::Identity(n, n);
    for (std::size_t k = 0; k < K[t - 1]; ++k) step = step * sched.at(t).matrix();
    phi = step * phi;
    const double dev = (phi.array() - inv_n).abs().maxCoeff();
    if (!out.deviation.empty() && dev > out.deviation.back() + 1e-15) out.nonincreasing = false;
    out.deviation.push_back(dev);
  }
  return out;
}

/// One row per nonzero weight: round,i,j,weight.
inline std::string write_schedule_csv(const GraphSchedule& s) {
  io::CsvWriter w({"round", "i", "j", "weight"});
  for (std::size_t t = 1; t <= s.horizon(); ++t) {
    const auto& a = s.at(t).matrix();
    for (Eigen::Index i = 0; i < a.rows(); ++i)
      for (Eigen::Index j = 0; j < a.cols(); ++j)
        if (a(i, j) != 0.0)
          w.row({std::to_string(t), std::to_string(i), std::to_string(j), io::format_double(a(i, j))});
  }
  return w.str();
}

}  // namespace domfw
