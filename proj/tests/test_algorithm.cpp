#include <gtest/gtest.h>

#include <cmath>

#include "domfw/algorithm.hpp"

using namespace domfw;

namespace {

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index k = 0;
  for (double x : xs) v[k++] = x;
  return v;
}

ScheduleParams per_round(double eps, double gamma, double rho) {
  ScheduleParams p;
  p.epsilon = eps;
  p.gamma = gamma;
  p.rho = rho;
  return p;
}

ScheduleParams fixed(std::size_t K, double rho = 4.0) {
  ScheduleParams p;
  p.mode = ScheduleMode::Fixed;
  p.fixed_K = K;
  p.rho = rho;
  return p;
}

WeightMatrix triangle() { return metropolis_weights({{0, 1}, {1, 2}, {0, 2}}, 3); }

}  // namespace

TEST(Schedule, InnerCounts) {
  EXPECT_EQ(inner_K(per_round(4, 0.5, 4), 4, 100), 9u);
  ScheduleParams h = per_round(4, 0.5, 4);
  h.mode = ScheduleMode::Horizon;
  for (std::size_t t : {1u, 50u, 100u}) EXPECT_EQ(inner_K(h, t, 100), 41u);
  EXPECT_EQ(inner_K(per_round(2, 0.3, 3), 1, 10), 3u);
  EXPECT_EQ(inner_K(fixed(7), 3, 10), 7u);
  ScheduleParams b;
  b.mode = ScheduleMode::Baseline;
  EXPECT_EQ(inner_K(b, 5, 10), 1u);
}

TEST(Schedule, StepSizes) {
  EXPECT_DOUBLE_EQ(step_size(per_round(4, 0.5, 4), 9), 1.0 / 36.0);
  EXPECT_EQ(step_size(per_round(4, 0.5, 1), 1), 1.0);
  EXPECT_NEAR(baseline_alpha_for(1000), 0.015773933612004824, 1e-15);
  EXPECT_NEAR(baseline_alpha_for(1000), 0.01577, 5e-6);
  ScheduleParams b;
  b.mode = ScheduleMode::Baseline;
  EXPECT_THROW(step_size(b, 1), ArgumentError);
  b.baseline_alpha = 0.5;
  EXPECT_EQ(step_size(b, 1), 0.5);
  EXPECT_THROW(step_size(per_round(4, 0.5, 0.5), 2), ArgumentError);
}

TEST(Schedule, Errors) {
  EXPECT_THROW(inner_K(per_round(4, 0.5, 4), 0, 10), ArgumentError);
  EXPECT_THROW(inner_K(per_round(4, 0.5, 4), 11, 10), ArgumentError);
  ScheduleParams f;
  f.mode = ScheduleMode::Fixed;
  EXPECT_THROW(inner_K(f, 1, 10), ArgumentError);
}

TEST(Schedule, LoCallsDirectSum) {
  const auto p = per_round(1, 0.5, 4);
  std::uint64_t expected = 0;
  for (int t = 1; t <= 100; ++t) expected += static_cast<std::uint64_t>(std::ceil(std::sqrt(t))) + 1;
  EXPECT_EQ(count_lo_calls(p, 1, 100), expected);
  EXPECT_EQ(count_lo_calls(p, 7, 100), 7 * expected);
}

TEST(Consensus, IdentityLeavesStateUnchanged) {
  const Matrix xs = Matrix::Random(4, 3);
  EXPECT_EQ(consensus_step(xs, WeightMatrix(Matrix::Identity(3, 3))), xs);
}

TEST(Consensus, CompleteGraphAverages) {
  const Matrix xs = Matrix::Random(4, 5);
  const Matrix mixed = consensus_step(xs, WeightMatrix(Matrix::Constant(5, 5, 0.2)));
  for (Eigen::Index i = 0; i < 5; ++i) EXPECT_TRUE(mixed.col(i).isApprox(xs.rowwise().mean(), 1e-14));
}

TEST(Consensus, TriangleExplicitSums) {
  Matrix xs(2, 3);
  xs << 1, 0, 0.5,
        0, 1, 0.5;
  const auto w = metropolis_weights({{0, 1}, {1, 2}}, 3);  // path 0-1-2
  const Matrix& a = w.matrix();
  Counters c;
  const Matrix mixed = consensus_step(xs, w, &c);
  for (int i = 0; i < 3; ++i) {
    Vector expect = Vector::Zero(2);
    for (int j = 0; j < 3; ++j) expect += a(i, j) * xs.col(j);
    EXPECT_TRUE(mixed.col(i).isApprox(expect, 1e-15));
  }
  EXPECT_EQ(c.messages, 3u);
  EXPECT_EQ(c.edge_messages, 4u);
  EXPECT_THROW(consensus_step(Matrix::Zero(2, 2), w), ArgumentError);
}

TEST(Tracking, FirstStepUsesFreshGradient) {
  NetworkState st(2, 3);
  const Matrix fresh = Matrix::Random(2, 3);
  tracking_step(st, triangle(), fresh, 1);
  EXPECT_EQ(st.grad_tracked_pre, fresh);
  EXPECT_TRUE(st.has_grad_prev);
  EXPECT_EQ(st.agent(1).grad_prev.value(), fresh.col(1));
}

TEST(Tracking, SingleAgentTelescopes) {
  NetworkState st(3, 1);
  const WeightMatrix one(Matrix::Ones(1, 1));
  for (std::size_t k = 1; k <= 5; ++k) {
    const Matrix fresh = Matrix::Random(3, 1);
    tracking_step(st, one, fresh, k);
    EXPECT_TRUE(st.grad_tracked.isApprox(fresh, 1e-14));
  }
}

TEST(Tracking, ConservationOnTriangle) {
  NetworkState st(2, 3);
  const auto w = metropolis_weights({{0, 1}, {1, 2}}, 3);
  Matrix g1(2, 3), g2(2, 3);
  g1 << 1, 2, 3,
        -1, 0, 4;
  g2 << 0.5, -2, 1,
        2, 2, -3;
  tracking_step(st, w, g1, 1);
  EXPECT_TRUE(st.grad_tracked_pre.rowwise().sum().isApprox(g1.rowwise().sum(), 1e-15));
  tracking_step(st, w, g2, 2);
  const Vector lhs = st.grad_tracked_pre.rowwise().sum();
  const Vector rhs = g2.rowwise().sum();
  EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-14);
  // Mixing preserves the column sum as well.
  EXPECT_LT((st.grad_tracked.rowwise().sum() - rhs).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Tracking, Errors) {
  NetworkState st(2, 3);
  EXPECT_THROW(tracking_step(st, triangle(), Matrix::Zero(2, 3), 2), StateError);
  EXPECT_THROW(tracking_step(st, triangle(), Matrix::Zero(2, 3), 0), ArgumentError);
  EXPECT_THROW(tracking_step(st, triangle(), Matrix::Zero(3, 3), 1), ArgumentError);
}

TEST(FwStep, HandExamples) {
  const auto s = ConstraintSpec::unit_simplex(2);
  const auto half = fw_step(vec({1, 0}), vec({1, 0}), 0.5, s);
  EXPECT_EQ(half.v, vec({0, 1}));
  EXPECT_EQ(half.x_next, vec({0.5, 0.5}));
  EXPECT_EQ(fw_step(vec({0.3, 0.7}), vec({-1, 0}), 1.0, s).x_next, vec({1, 0}));
  EXPECT_EQ(fw_step(vec({0.3, 0.7}), vec({-1, 0}), 0.0, s).x_next, vec({0.3, 0.7}));
  EXPECT_THROW(fw_step(vec({0.3, 0.7}), vec({-1, 0}), 1.5, s), ArgumentError);
  Counters c;
  fw_step(vec({0.3, 0.7}), vec({-1, 0}), 0.1, s, &c);
  EXPECT_EQ(c.lo_calls, 1u);
}

TEST(Round, SingleAgentSingleStepIsCentralizedFw) {
  const auto spec = ConstraintSpec::unit_simplex(3);
  const auto stream = generate_stream(1, 1, 3, 0.01, spec, 4);
  const auto sched = random_connected_schedule(1, 1, 0.3, 1);
  NetworkState st(3, 1);
  st.x.col(0) = vec({0.2, 0.3, 0.5});
  const Vector x0 = st.x.col(0);
  Counters c;
  const auto d = run_round(st, stream, sched, fixed(1, 2.0), spec, 1, c);
  const Vector g = grad_eval(stream, 1, 0, x0);
  const Vector expected = x0 + 0.5 * (spec.lmo(g) - x0);
  EXPECT_TRUE(st.x.col(0).isApprox(expected, 1e-15));
  EXPECT_EQ(d.K, 1u);
  EXPECT_EQ(c.lo_calls, 1u);
}

TEST(Round, SingleAgentMatchesIndependentFwLoop) {
  const auto spec = ConstraintSpec::l1_ball(4, 2.0);
  const auto stream = generate_stream(1, 1, 4, 0.05, spec, 8);
  const auto sched = random_connected_schedule(1, 1, 0.3, 1);
  const std::size_t K = 60;
  NetworkState st(4, 1);
  st.x.col(0) = spec.initial_vertex();
  Counters c;
  const auto d = run_round(st, stream, sched, fixed(K, 1.0), spec, 1, c);

  // Plain Frank-Wolfe with the same constant step, computed directly.
  const double alpha = 1.0 / K;
  Vector x = spec.initial_vertex();
  std::vector<double> f{global_loss(stream, 1, x)};
  for (std::size_t k = 0; k < K; ++k) {
    const Vector g = grad_eval(stream, 1, 0, x);
    Eigen::Index j;
    g.cwiseAbs().maxCoeff(&j);
    Vector v = Vector::Zero(4);
    v[j] = g[j] >= 0 ? -2.0 : 2.0;
    x += alpha * (v - x);
    f.push_back(global_loss(stream, 1, x));
  }
  EXPECT_TRUE(st.x.col(0).isApprox(x, 1e-12));
  EXPECT_LT(d.f_end, d.f_start);
  EXPECT_NEAR(d.f_end, f.back(), 1e-10);
}

TEST(Run, TrivialConfigCountsOneOracleCall) {
  const auto spec = ConstraintSpec::unit_simplex(2);
  const auto stream = generate_stream(1, 1, 2, 0.0, spec, 1);
  const auto sched = random_connected_schedule(1, 1, 0.3, 1);
  const auto traj = run(stream, spec, sched, fixed(1));
  EXPECT_EQ(traj.lo_calls, 1u);
  EXPECT_EQ(traj.decisions.size(), 2u);
  EXPECT_EQ(traj.decision(0, 1), spec.initial_vertex());
  EXPECT_THROW(traj.decision(0, 3), ArgumentError);
  EXPECT_THROW(traj.decision(1, 1), ArgumentError);
}

TEST(Run, SingleAgentLoCallsMatchDirectSum) {
  const auto spec = ConstraintSpec::unit_simplex(3);
  const auto stream = generate_stream(1, 100, 3, 0.0, spec, 1);
  const auto sched = random_connected_schedule(1, 100, 0.3, 1);
  const auto traj = run(stream, spec, sched, per_round(1, 0.5, 4));
  std::uint64_t expected = 0;
  for (int t = 1; t <= 100; ++t) expected += static_cast<std::uint64_t>(std::ceil(std::sqrt(t))) + 1;
  EXPECT_EQ(traj.lo_calls, expected);
}

class RunInvariants : public ::testing::TestWithParam<ConstraintKind> {};

TEST_P(RunInvariants, HoldAtEveryRound) {
  const auto spec = GetParam() == ConstraintKind::UnitSimplex ? ConstraintSpec::unit_simplex(8)
                                                              : ConstraintSpec::l1_ball(8, 2.0);
  const std::size_t n = 8, T = 40;
  const auto stream = generate_stream(n, T, 8, 5e-6, spec, 3);
  const auto sched = random_connected_schedule(n, T, 0.3, 4);
  const auto p = per_round(4, 0.5, 4);
  const auto traj = run(stream, spec, sched, p, {InitMode::Random, 9});

  std::uint64_t sumK = 0;
  for (const auto& r : traj.rounds) {
    sumK += r.K;
    EXPECT_EQ(r.K, inner_K(p, r.t, T));
    EXPECT_LE(r.conservation_residual, 1e-9);
    EXPECT_LE(r.recursion_residual, 1e-10);
    EXPECT_LE(r.feasibility_violation, 1e-10);
    EXPECT_LE(r.step_ratio, 1.0 + 1e-12);
  }
  EXPECT_EQ(traj.lo_calls, n * sumK);
  EXPECT_EQ(traj.lo_calls, count_lo_calls(p, n, T));
  EXPECT_EQ(traj.messages, 2 * n * sumK);
  for (const auto& x : traj.decisions)
    for (Eigen::Index i = 0; i < x.cols(); ++i) EXPECT_LE(spec.violation(x.col(i)), 1e-10);
}

INSTANTIATE_TEST_SUITE_P(BothSets, RunInvariants,
                         ::testing::Values(ConstraintKind::UnitSimplex, ConstraintKind::L1Ball));

TEST(Run, Deterministic) {
  const auto spec = ConstraintSpec::unit_simplex(5);
  const auto stream = generate_stream(6, 25, 5, 1e-4, spec, 10);
  const auto sched = random_connected_schedule(6, 25, 0.3, 11);
  const auto a = run(stream, spec, sched, per_round(2, 0.5, 3));
  const auto b = run(stream, spec, sched, per_round(2, 0.5, 3));
  EXPECT_EQ(write_trajectory_csv(a), write_trajectory_csv(b));
  EXPECT_EQ(write_diagnostics_csv(a), write_diagnostics_csv(b));
}

TEST(Run, ConsensusShrinksWithIdenticalStart) {
  const auto spec = ConstraintSpec::unit_simplex(4);
  const auto stream = generate_stream(5, 10, 4, 1e-3, spec, 2);
  const auto sched = random_connected_schedule(5, 10, 0.3, 3);
  const auto traj = run(stream, spec, sched, per_round(4, 0.5, 4));
  EXPECT_EQ(traj.rounds.front().consistency_error, 0.0);
  EXPECT_EQ(traj.rounds.front().alpha, 1.0 / (4.0 * 5.0));
}

TEST(Run, FailuresNameTheRound) {
  const auto spec = ConstraintSpec::unit_simplex(2);
  const auto stream = generate_stream(2, 3, 2, 0.0, spec, 1);
  const auto sched = random_connected_schedule(2, 3, 0.3, 1);
  ScheduleParams broken;
  broken.mode = ScheduleMode::Fixed;
  try {
    run(stream, spec, sched, broken);
    FAIL() << "expected RoundError";
  } catch (const RoundError& e) {
    EXPECT_EQ(e.round(), 1u);
    EXPECT_NE(std::string(e.what()).find("round 1"), std::string::npos);
  }
  EXPECT_THROW(run(stream, spec, random_connected_schedule(3, 3, 0.3, 1), fixed(2)), ArgumentError);
  EXPECT_THROW(run(stream, spec, random_connected_schedule(2, 2, 0.3, 1), fixed(2)), ArgumentError);
  EXPECT_THROW(run(stream, ConstraintSpec::unit_simplex(3), sched, fixed(2)), ArgumentError);
}

TEST(Init, VertexAndRandomStartsAreFeasible) {
  const auto spec = ConstraintSpec::l1_ball(3, 1.5);
  const Matrix v = initial_decisions(spec, 4, {});
  for (Eigen::Index i = 0; i < 4; ++i) EXPECT_EQ(v.col(i), vec({1.5, 0, 0}));
  const Matrix r = initial_decisions(spec, 4, {InitMode::Random, 5});
  for (Eigen::Index i = 0; i < 4; ++i) EXPECT_TRUE(spec.contains(r.col(i)));
  EXPECT_NE(r.col(0), r.col(1));
  EXPECT_EQ(r, initial_decisions(spec, 4, {InitMode::Random, 5}));
}

TEST(Writers, DiagnosticsHeader) {
  const auto spec = ConstraintSpec::unit_simplex(2);
  const auto stream = generate_stream(2, 2, 2, 0.0, spec, 1);
  const auto traj = run(stream, spec, random_connected_schedule(2, 2, 0.3, 1), fixed(2));
  const auto csv = write_diagnostics_csv(traj);
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "t,K_t,alpha_t,consistency_error,tracking_residual,lo_calls_cumulative,messages_cumulative");
  const auto table = io::parse_csv(csv);
  EXPECT_EQ(table.rows.size(), 2u);
  EXPECT_EQ(table.rows[1][5], "8");
  EXPECT_EQ(io::parse_csv(write_trajectory_csv(traj)).rows.size(), 6u);
  EXPECT_EQ(io::parse_csv(write_monitors_csv(traj)).rows.size(), 2u);
}
