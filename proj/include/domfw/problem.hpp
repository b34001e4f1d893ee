#pragma once

// Constraint sets with linear minimization oracles, the streaming ridge-regression
// losses f_{i,t}(x) = 0.5 (a_i'x - b_{i,t})^2 + lambda1 |x|^2, and the problem
// constants (diameter, gradient bound, gradient-Lipschitz bound) derived from them.
//
// Index conventions: agents are 0-based (i in [0, n)), rounds are 1-based
// (t in [1, T]) because the label noise decays as 1/(4t).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "domfw/errors.hpp"
#include "domfw/io.hpp"
#include "domfw/rng.hpp"

namespace domfw {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using VectorCRef = Eigen::Ref<const Eigen::VectorXd>;

inline constexpr double kFeasibilityTol = 1e-12;

enum class ConstraintKind { UnitSimplex, L1Ball };

inline void require_finite(VectorCRef v, const char* what) {
  if (!v.allFinite()) throw ArgumentError(std::string(what) + ": non-finite entry");
}

/// A compact convex polytope: the unit simplex or an l1 ball of given radius.
///
/// Vertices are enumerated as e_0..e_{d-1} for the simplex and
/// +r e_0, -r e_0, +r e_1, -r e_1, ... for the ball.
class ConstraintSpec {
 public:
  static ConstraintSpec unit_simplex(std::size_t d) {
    return ConstraintSpec(ConstraintKind::UnitSimplex, d, 1.0);
  }
  static ConstraintSpec l1_ball(std::size_t d, double radius) {
    return ConstraintSpec(ConstraintKind::L1Ball, d, radius);
  }

  ConstraintKind kind() const noexcept { return kind_; }
  std::size_t dim() const noexcept { return dim_; }
  double radius() const noexcept { return radius_; }

  /// Euclidean diameter M.
  double diameter() const noexcept {
    return kind_ == ConstraintKind::UnitSimplex ? std::sqrt(2.0) : 2.0 * radius_;
  }

  /// R_X = max_{x in X} |x|_2.
  double max_norm() const noexcept { return kind_ == ConstraintKind::UnitSimplex ? 1.0 : radius_; }

  std::size_t vertex_count() const noexcept {
    return kind_ == ConstraintKind::UnitSimplex ? dim_ : 2 * dim_;
  }

  Vector vertex(std::size_t k) const {
    if (k >= vertex_count()) throw ArgumentError("vertex index out of range");
    Vector v = Vector::Zero(static_cast<Eigen::Index>(dim_));
    if (kind_ == ConstraintKind::UnitSimplex) {
      v[static_cast<Eigen::Index>(k)] = 1.0;
    } else {
      v[static_cast<Eigen::Index>(k / 2)] = (k % 2 == 0) ? radius_ : -radius_;
    }
    return v;
  }

  /// Index of the vertex minimizing <v, g>. Ties go to the lowest coordinate;
  /// for the ball, sign(0) counts as +1 so a zero coordinate selects -r e_j.
  std::size_t lmo_index(VectorCRef g) const {
    check_dim(g.size(), "lmo");
    require_finite(g, "lmo");
    Eigen::Index best = 0;
    if (kind_ == ConstraintKind::UnitSimplex) {
      for (Eigen::Index j = 1; j < g.size(); ++j)
        if (g[j] < g[best]) best = j;
      return static_cast<std::size_t>(best);
    }
    for (Eigen::Index j = 1; j < g.size(); ++j)
      if (std::abs(g[j]) > std::abs(g[best])) best = j;
    return 2 * static_cast<std::size_t>(best) + (g[best] >= 0.0 ? 1 : 0);
  }

  Vector lmo(VectorCRef g) const { return vertex(lmo_index(g)); }

  /// Distance-like violation measure; 0 for feasible points.
  double violation(VectorCRef x) const {
    check_dim(x.size(), "violation");
    if (kind_ == ConstraintKind::UnitSimplex) {
      return std::max({0.0, -x.minCoeff(), std::abs(x.sum() - 1.0)});
    }
    return std::max(0.0, x.lpNorm<1>() - radius_);
  }

  bool contains(VectorCRef x, double tol = kFeasibilityTol) const {
    return x.allFinite() && violation(x) <= tol;
  }

  /// Uniform sample from the set: normalized exponentials on the simplex; on the
  /// ball, a Dirichlet mixture of randomly signed vertices and the origin.
  Vector sample(rng::Rng& rng) const {
    const auto d = static_cast<Eigen::Index>(dim_);
    if (kind_ == ConstraintKind::UnitSimplex) {
      Vector w(d);
      for (Eigen::Index j = 0; j < d; ++j) w[j] = rng.exponential();
      return w / w.sum();
    }
    Vector w(d + 1);
    for (Eigen::Index j = 0; j <= d; ++j) w[j] = rng.exponential();
    w /= w.sum();
    Vector x(d);
    for (Eigen::Index j = 0; j < d; ++j) x[j] = ((rng.bits() & 1u) ? radius_ : -radius_) * w[j];
    return x;
  }

  /// Deterministic starting vertex: e_1 on the simplex, r e_1 on the ball.
  Vector initial_vertex() const { return vertex(0); }

  void check_dim(Eigen::Index size, const char* what) const {
    if (size != static_cast<Eigen::Index>(dim_))
      throw ArgumentError(std::string(what) + ": dimension " + std::to_string(size) +
                          " does not match set dimension " + std::to_string(dim_));
  }

 private:
  ConstraintSpec(ConstraintKind kind, std::size_t d, double radius)
      : kind_(kind), dim_(d), radius_(radius) {
    if (d < 1) throw ArgumentError("constraint dimension must be >= 1");
    if (!(radius > 0.0) || !std::isfinite(radius))
      throw ArgumentError("constraint radius must be positive and finite");
  }

  ConstraintKind kind_;
  std::size_t dim_;
  double radius_;
};

inline Vector lmo(const ConstraintSpec& spec, VectorCRef g) { return spec.lmo(g); }
inline double diameter(const ConstraintSpec& spec) { return spec.diameter(); }

/// The full family {f_{i,t}}: features, labels and regularization weight.
/// Immutable after construction.
class LossStream {
 public:
  /// `features` holds n vectors (fixed per agent) or n*T vectors (redrawn per
  /// round, index (t-1)*n + i). `labels` is n x T.
  LossStream(std::size_t n, std::size_t horizon, double lambda1, std::vector<Vector> features,
             Matrix labels, Vector ground_truth = {}, Matrix noise = {})
      : n_(n),
        horizon_(horizon),
        lambda1_(lambda1),
        features_(std::move(features)),
        labels_(std::move(labels)),
        ground_truth_(std::move(ground_truth)),
        noise_(std::move(noise)) {
    if (n_ < 1 || horizon_ < 1) throw ArgumentError("stream needs n >= 1 and T >= 1");
    if (!(lambda1_ >= 0.0) || !std::isfinite(lambda1_)) throw ArgumentError("lambda1 must be >= 0");
    if (features_.size() == n_) {
      per_round_ = false;
    } else if (features_.size() == n_ * horizon_) {
      per_round_ = true;
    } else {
      throw ArgumentError("feature count must be n or n*T");
    }
    dim_ = static_cast<std::size_t>(features_.front().size());
    if (dim_ < 1) throw ArgumentError("feature dimension must be >= 1");
    for (const auto& a : features_) {
      if (static_cast<std::size_t>(a.size()) != dim_) throw ArgumentError("ragged features");
      require_finite(a, "features");
    }
    if (labels_.rows() != static_cast<Eigen::Index>(n_) ||
        labels_.cols() != static_cast<Eigen::Index>(horizon_))
      throw ArgumentError("labels must be n x T");
    if (!labels_.allFinite()) throw ArgumentError("labels: non-finite entry");
  }

  std::size_t agents() const noexcept { return n_; }
  std::size_t horizon() const noexcept { return horizon_; }
  std::size_t dim() const noexcept { return dim_; }
  double lambda1() const noexcept { return lambda1_; }
  bool features_fixed() const noexcept { return !per_round_; }

  const Vector& feature(std::size_t i, std::size_t t) const {
    check_index(t, i);
    return per_round_ ? features_[(t - 1) * n_ + i] : features_[i];
  }
  double label(std::size_t i, std::size_t t) const {
    check_index(t, i);
    return labels_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t - 1));
  }
  const Matrix& labels() const noexcept { return labels_; }
  /// Empty when the stream was loaded from labels alone.
  const Vector& ground_truth() const noexcept { return ground_truth_; }
  const Matrix& noise() const noexcept { return noise_; }

  void check_index(std::size_t t, std::size_t i) const {
    if (t < 1 || t > horizon_)
      throw ArgumentError("round " + std::to_string(t) + " outside [1, " +
                          std::to_string(horizon_) + "]");
    if (i >= n_)
      throw ArgumentError("agent " + std::to_string(i) + " outside [0, " + std::to_string(n_) +
                          ")");
  }

 private:
  std::size_t n_;
  std::size_t horizon_;
  std::size_t dim_ = 0;
  double lambda1_;
  bool per_round_ = false;
  std::vector<Vector> features_;
  Matrix labels_;
  Vector ground_truth_;
  Matrix noise_;
};

struct StreamOptions {
  /// Draw a fresh feature vector a_{i,t} every round instead of one a_i per agent.
  bool redraw_features = false;
  /// Force zeta_{i,t} = 0, making every round identical.
  bool zero_noise = false;
};

/// Features uniform on [-5,5]^d, ground truth x0 uniform on X, noise
/// zeta_{i,t} uniform on [0,1), labels b_{i,t} = a'x0 + zeta/(4t).
/// Each zeta_{i,t} is a pure function of (seed, i, t).
inline LossStream generate_stream(std::size_t n, std::size_t horizon, std::size_t d,
                                  double lambda1, const ConstraintSpec& spec, std::uint64_t seed,
                                  const StreamOptions& options = {}) {
  if (n < 1 || horizon < 1 || d < 1) throw ArgumentError("generate_stream: n, T, d must be >= 1");
  if (!(lambda1 >= 0.0)) throw ArgumentError("generate_stream: lambda1 must be >= 0");
  spec.check_dim(static_cast<Eigen::Index>(d), "generate_stream");

  const auto dd = static_cast<Eigen::Index>(d);
  const std::uint64_t feature_seed = rng::derive_seed(seed, "features");
  const std::uint64_t noise_seed = rng::derive_seed(seed, "noise");

  auto draw_feature = [&](std::uint64_t key) {
    rng::Rng r(key);
    Vector a(dd);
    for (Eigen::Index j = 0; j < dd; ++j) a[j] = r.uniform(-5.0, 5.0);
    return a;
  };

  std::vector<Vector> features;
  if (options.redraw_features) {
    features.reserve(n * horizon);
    for (std::size_t t = 1; t <= horizon; ++t)
      for (std::size_t i = 0; i < n; ++i) features.push_back(draw_feature(rng::mix(feature_seed, i, t)));
  } else {
    features.reserve(n);
    for (std::size_t i = 0; i < n; ++i) features.push_back(draw_feature(rng::mix(feature_seed, i)));
  }

  rng::Rng x0_rng(rng::derive_seed(seed, "x0"));
  Vector x0 = spec.sample(x0_rng);

  const auto nn = static_cast<Eigen::Index>(n);
  const auto tt = static_cast<Eigen::Index>(horizon);
  Matrix noise(nn, tt);
  Matrix labels(nn, tt);
  for (std::size_t t = 1; t <= horizon; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      const double zeta = options.zero_noise ? 0.0 : rng::to_unit(rng::mix(noise_seed, i, t));
      const Vector& a = options.redraw_features ? features[(t - 1) * n + i] : features[i];
      const auto r = static_cast<Eigen::Index>(i);
      const auto c = static_cast<Eigen::Index>(t - 1);
      noise(r, c) = zeta;
      labels(r, c) = a.dot(x0) + zeta / (4.0 * static_cast<double>(t));
    }
  }
  return LossStream(n, horizon, lambda1, std::move(features), std::move(labels), std::move(x0),
                    std::move(noise));
}

inline double loss_eval(const LossStream& s, std::size_t t, std::size_t i, VectorCRef x) {
  const Vector& a = s.feature(i, t);
  if (x.size() != a.size()) throw ArgumentError("loss_eval: dimension mismatch");
  const double r = a.dot(x) - s.label(i, t);
  return 0.5 * r * r + s.lambda1() * x.squaredNorm();
}

/// Writes a (a'x - b) + 2 lambda1 x into `out`.
inline void grad_eval_into(const LossStream& s, std::size_t t, std::size_t i, VectorCRef x,
                           Eigen::Ref<Vector> out) {
  const Vector& a = s.feature(i, t);
  if (x.size() != a.size() || out.size() != a.size())
    throw ArgumentError("grad_eval: dimension mismatch");
  const double r = a.dot(x) - s.label(i, t);
  out = r * a + (2.0 * s.lambda1()) * x;
}

inline Vector grad_eval(const LossStream& s, std::size_t t, std::size_t i, VectorCRef x) {
  Vector g(x.size());
  grad_eval_into(s, t, i, x, g);
  return g;
}

/// F_t(x) = sum_i f_{i,t}(x), summed in agent order.
inline double global_loss(const LossStream& s, std::size_t t, VectorCRef x) {
  double total = 0.0;
  for (std::size_t i = 0; i < s.agents(); ++i) total += loss_eval(s, t, i, x);
  return total;
}

inline Vector global_grad(const LossStream& s, std::size_t t, VectorCRef x) {
  Vector total = Vector::Zero(x.size());
  Vector g(x.size());
  for (std::size_t i = 0; i < s.agents(); ++i) {
    grad_eval_into(s, t, i, x, g);
    total += g;
  }
  return total;
}

/// F_t written as 0.5 x'Qx - c'x + offset.
struct RoundQuadratic {
  Matrix hessian;
  Vector linear;
  double offset = 0.0;

  double value(VectorCRef x) const { return 0.5 * x.dot(hessian * x) - linear.dot(x) + offset; }
  Vector gradient(VectorCRef x) const { return hessian * x - linear; }
};

inline RoundQuadratic round_quadratic(const LossStream& s, std::size_t t) {
  const auto d = static_cast<Eigen::Index>(s.dim());
  RoundQuadratic q{Matrix::Zero(d, d), Vector::Zero(d), 0.0};
  for (std::size_t i = 0; i < s.agents(); ++i) {
    const Vector& a = s.feature(i, t);
    const double b = s.label(i, t);
    q.hessian.noalias() += a * a.transpose();
    q.linear += b * a;
    q.offset += 0.5 * b * b;
  }
  q.hessian.diagonal().array() += 2.0 * s.lambda1() * static_cast<double>(s.agents());
  return q;
}

/// Sampled lower estimate of the function variation
///   H_T = sum_{t<T} max_i max_{x in X} |f_{i,t+1}(x) - f_{i,t}(x)|,
/// with the inner max taken over every vertex of X plus `samples` uniform
/// feasible points drawn from `seed`. Never exceeds the true H_T.
inline double estimate_HT(const LossStream& s, const ConstraintSpec& spec, std::size_t samples,
                          std::uint64_t seed) {
  if (samples < 1) throw ArgumentError("estimate_HT: sample count must be >= 1");
  spec.check_dim(static_cast<Eigen::Index>(s.dim()), "estimate_HT");
  const std::size_t nv = spec.vertex_count();
  const auto P = static_cast<Eigen::Index>(nv + samples);
  const auto d = static_cast<Eigen::Index>(s.dim());
  Matrix points(d, P);
  for (std::size_t k = 0; k < nv; ++k) points.col(static_cast<Eigen::Index>(k)) = spec.vertex(k);
  rng::Rng r(seed);
  for (Eigen::Index k = static_cast<Eigen::Index>(nv); k < P; ++k) points.col(k) = spec.sample(r);

  // The lambda1 term is identical in consecutive rounds and cancels.
  const auto n = s.agents();
  auto projections = [&](std::size_t t) {
    Matrix proj(static_cast<Eigen::Index>(n), P);
    for (std::size_t i = 0; i < n; ++i)
      proj.row(static_cast<Eigen::Index>(i)) = s.feature(i, t).transpose() * points;
    return proj;
  };

  double total = 0.0;
  Matrix cur = projections(1);
  for (std::size_t t = 1; t < s.horizon(); ++t) {
    Matrix next = s.features_fixed() ? cur : projections(t + 1);
    double worst = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double b1 = s.label(i, t);
      const double b2 = s.label(i, t + 1);
      const auto row = static_cast<Eigen::Index>(i);
      for (Eigen::Index k = 0; k < P; ++k) {
        const double r1 = cur(row, k) - b1;
        const double r2 = next(row, k) - b2;
        worst = std::max(worst, std::abs(0.5 * r2 * r2 - 0.5 * r1 * r1));
      }
    }
    total += worst;
    cur = std::move(next);
  }
  return total;
}

/// Analytic upper bound on H_T. With fixed features,
///   f_{i,t+1}(x) - f_{i,t}(x) = (b_t - b_{t+1}) (a'x - (b_t + b_{t+1})/2),
/// bounded by |db| (|a| R_X + max(|b_t|, |b_{t+1}|)). Redrawn features fall back
/// to max(sup f_{i,t}, sup f_{i,t+1}) since both losses are nonnegative.
inline double HT_upper_bound(const LossStream& s, const ConstraintSpec& spec) {
  const double R = spec.max_norm();
  double total = 0.0;
  for (std::size_t t = 1; t < s.horizon(); ++t) {
    double worst = 0.0;
    for (std::size_t i = 0; i < s.agents(); ++i) {
      const double b1 = s.label(i, t);
      const double b2 = s.label(i, t + 1);
      double term;
      if (s.features_fixed()) {
        term = std::abs(b1 - b2) * (s.feature(i, t).norm() * R + std::max(std::abs(b1), std::abs(b2)));
      } else {
        auto sup = [&](std::size_t tt, double b) {
          const double m = s.feature(i, tt).norm() * R + std::abs(b);
          return 0.5 * m * m + s.lambda1() * R * R;
        };
        term = std::max(sup(t, b1), sup(t + 1, b2));
      }
      worst = std::max(worst, term);
    }
    total += worst;
  }
  return total;
}

/// M (diameter), L_X (gradient-norm bound over X) and G_X (gradient-Lipschitz bound).
struct ProblemConstants {
  double M = 0.0;
  double L_X = 0.0;
  double G_X = 0.0;
};

inline ProblemConstants problem_constants(const LossStream& s, const ConstraintSpec& spec) {
  spec.check_dim(static_cast<Eigen::Index>(s.dim()), "problem_constants");
  const double R = spec.max_norm();
  const double lam2 = 2.0 * s.lambda1();
  ProblemConstants c;
  c.M = spec.diameter();
  double max_sq = 0.0;
  double max_grad = 0.0;
  for (std::size_t t = 1; t <= s.horizon(); ++t) {
    for (std::size_t i = 0; i < s.agents(); ++i) {
      const double na = s.feature(i, t).norm();
      max_sq = std::max(max_sq, na * na);
      max_grad = std::max(max_grad, na * (na * R + std::abs(s.label(i, t))) + lam2 * R);
    }
  }
  c.G_X = max_sq + lam2;
  c.L_X = max_grad;
  return c;
}

/// Columnar dump: agent,t,a_1..a_d,b (rows ordered by t, then agent).
inline std::string write_stream_csv(const LossStream& s) {
  std::vector<std::string> header{"agent", "t"};
  for (std::size_t j = 1; j <= s.dim(); ++j) header.push_back("a_" + std::to_string(j));
  header.push_back("b");
  io::CsvWriter w(header);
  for (std::size_t t = 1; t <= s.horizon(); ++t) {
    for (std::size_t i = 0; i < s.agents(); ++i) {
      std::vector<std::string> row{std::to_string(i), std::to_string(t)};
      const Vector& a = s.feature(i, t);
      for (Eigen::Index j = 0; j < a.size(); ++j) row.push_back(io::format_double(a[j]));
      row.push_back(io::format_double(s.label(i, t)));
      w.row(row);
    }
  }
  return w.str();
}

/// Rebuilds a stream from its CSV dump. Features are stored per agent when
/// every round repeats them, per round otherwise.
inline LossStream read_stream_csv(std::string_view text, double lambda1) {
  const auto table = io::parse_csv(text);
  const auto c_agent = table.column("agent");
  const auto c_t = table.column("t");
  const auto c_b = table.column("b");
  std::size_t d = 0;
  while (true) {
    const std::string name = "a_" + std::to_string(d + 1);
    if (std::find(table.header.begin(), table.header.end(), name) == table.header.end()) break;
    ++d;
  }
  if (d == 0) throw ArgumentError("stream CSV has no feature columns");
  std::size_t n = 0, T = 0;
  struct Row { std::size_t i, t; Vector a; double b; };
  std::vector<Row> rows;
  rows.reserve(table.rows.size());
  for (const auto& cells : table.rows) {
    Row r{0, 0, Vector(static_cast<Eigen::Index>(d)), 0.0};
    bool ok = io::parse_int(cells[c_agent], r.i) && io::parse_int(cells[c_t], r.t) &&
              io::parse_double(cells[c_b], r.b);
    for (std::size_t j = 0; j < d; ++j)
      ok = ok && io::parse_double(cells[table.column("a_" + std::to_string(j + 1))],
                                  r.a[static_cast<Eigen::Index>(j)]);
    if (!ok || r.t < 1) throw ArgumentError("stream CSV: malformed row");
    n = std::max(n, r.i + 1);
    T = std::max(T, r.t);
    rows.push_back(std::move(r));
  }
  if (rows.size() != n * T) throw ArgumentError("stream CSV: expected n*T rows");
  std::vector<Vector> per_round(n * T);
  std::vector<bool> seen(n * T, false);
  Matrix labels(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(T));
  for (auto& r : rows) {
    const std::size_t k = (r.t - 1) * n + r.i;
    if (seen[k]) throw ArgumentError("stream CSV: duplicate (agent, t)");
    seen[k] = true;
    labels(static_cast<Eigen::Index>(r.i), static_cast<Eigen::Index>(r.t - 1)) = r.b;
    per_round[k] = std::move(r.a);
  }
  bool fixed = true;
  for (std::size_t k = n; k < n * T && fixed; ++k) fixed = per_round[k] == per_round[k % n];
  if (fixed) per_round.resize(n);
  return LossStream(n, T, lambda1, std::move(per_round), std::move(labels));
}

}  // namespace domfw
