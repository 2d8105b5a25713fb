#include <gtest/gtest.h>

#include <random>

#include "cabra/probgen.hpp"
#include "cabra/solver.hpp"

using namespace cabra;

namespace {

Strategy small_illustrative(unsigned long long seed, int dim = 2) {
  IllustrativeOptions o;
  o.dim = dim;
  o.with_alg1 = false;
  o.with_oracle = false;
  return gen_illustrative(seed, o).strategy("cabra");
}

SolverConfig base_config(int iters) {
  SolverConfig cfg;
  cfg.alpha = 2.0;
  cfg.gamma.gamma = 0.95;
  cfg.max_iterations = iters;
  cfg.tol = 1e-300;
  cfg.record_iterates = true;
  return cfg;
}

}  // namespace

TEST(Solver, ToyIterationCounts) {
  Instance inst = gen_toy2d();
  SolverConfig cfg;
  cfg.alpha = 2.0;
  cfg.gamma.gamma = 2.0;
  cfg.tol = 1e-8;
  cfg.max_iterations = 1000;
  const auto& u = inst.strategy("unscaled");
  const auto& s = inst.strategy("scaled");
  SolveResult ru = run_cabra(u.cs, u.params, u.bank, cfg);
  SolveResult rs = run_cabra(s.cs, s.params, s.bank, cfg);
  // Sweeps counted from 1; the unscaled run is past 1e-8 after 17 sweeps.
  EXPECT_EQ(ru.converged_iteration, 17);
  EXPECT_EQ(rs.converged_iteration, 2);
  ASSERT_GE(ru.trace.size(), 2u);
  EXPECT_GT(ru.trace[15].fp_residual, 1e-8);
  // Both end at the feasible point nearest the intersection of the two lines.
  EXPECT_GE(0.05 * ru.y(0) - ru.y(1), 2.0 - 1e-6);
  EXPECT_GE(0.05 * ru.y(0) + ru.y(1), 2.0 - 1e-6);
}

TEST(Solver, ZFormMatchesVForm) {
  Strategy st = small_illustrative(3);
  SolverConfig cz = base_config(60), cv = base_config(60);
  cz.mode = Mode::Z;
  cv.mode = Mode::V;
  SolveResult rz = run_cabra(st.cs, st.params, st.bank, cz);
  SolveResult rv = run_cabra(st.cs, st.params, st.bank, cv);
  ASSERT_EQ(rz.iterates.size(), rv.iterates.size());
  for (std::size_t k = 0; k < rz.iterates.size(); ++k)
    EXPECT_LT((rz.iterates[k] - rv.iterates[k]).norm(), 1e-9) << k;
  EXPECT_LT((rz.v - rv.v).norm(), 1e-9);
}

TEST(Solver, ThreadedSweepIsIdentical) {
  Strategy st = small_illustrative(4, 3);
  SolverConfig c1 = base_config(40), c4 = base_config(40);
  c1.threads = 1;
  c4.threads = 4;
  SolveResult r1 = run_cabra(st.cs, st.params, st.bank, c1);
  SolveResult r4 = run_cabra(st.cs, st.params, st.bank, c4);
  for (std::size_t k = 0; k < r1.iterates.size(); ++k)
    EXPECT_EQ(r1.iterates[k], r4.iterates[k]);
}

TEST(Solver, ConfigValidation) {
  Strategy st = small_illustrative(0);
  SolverConfig cfg = base_config(5);
  cfg.gamma.gamma = 1.0;  // 2 - alpha/2 with alpha = 2
  EXPECT_THROW(run_cabra(st.cs, st.params, st.bank, cfg), InvalidConfig);
  cfg.gamma.gamma = 0.5;
  cfg.alpha = 4.0;
  EXPECT_THROW(run_cabra(st.cs, st.params, st.bank, cfg), InvalidConfig);
  cfg.alpha = 1.0;
  cfg.tol = 0.0;
  EXPECT_THROW(run_cabra(st.cs, st.params, st.bank, cfg), InvalidConfig);
  cfg.tol = 1e-8;
  cfg.max_iterations = 0;
  EXPECT_THROW(run_cabra(st.cs, st.params, st.bank, cfg), InvalidConfig);
  // gamma = 2 is allowed only without cocoercive operators.
  Instance toy = gen_toy2d();
  SolverConfig tc = base_config(3);
  tc.gamma.gamma = 2.0;
  EXPECT_NO_THROW(run_cabra(toy.strategies[0].cs, toy.strategies[0].params,
                            toy.strategies[0].bank, tc));
  tc.gamma.gamma = 2.01;
  EXPECT_THROW(run_cabra(toy.strategies[0].cs, toy.strategies[0].params,
                         toy.strategies[0].bank, tc),
               InvalidConfig);
}

TEST(Solver, BankMismatch) {
  Strategy st = small_illustrative(0);
  OperatorBank bad = st.bank;
  bad.B.pop_back();
  EXPECT_THROW(run_cabra(st.cs, st.params, bad, base_config(2)), ShapeMismatch);
}

TEST(Solver, V0ProjectedOntoConsensusComplement) {
  Strategy st = small_illustrative(1);
  SolverConfig cfg = base_config(3);
  cfg.v0 = Vec::Ones(st.cs.hx_size);
  SolveResult r = run_cabra(st.cs, st.params, st.bank, cfg);
  EXPECT_TRUE(r.v0_projected);
  // v stays in the complement of the consensus subspace.
  EXPECT_LT(Vec(project_consensus(st.cs, r.v).first).norm(), 1e-9);
}

TEST(Solver, WarmStartAtSolutionIsFixedPoint) {
  // Unconstrained quadratic: the warm start from the exact solution and
  // its subgradients reproduces the solution in one sweep.
  Instance inst = gen_quadratic_scaled(2, 4, 3);
  const Strategy& st = inst.strategy("scaled");
  const Vec y = *inst.y_ref;
  Vec x = select_A(st.cs, y);
  Vec w(st.cs.hx_size);
  for (int i = 0; i < st.cs.n; ++i) {
    auto op = std::dynamic_pointer_cast<AffineMonotone>(st.bank.A[i]);
    w.segment(st.cs.hx_op_off[i], st.cs.hx_op_size(i)) =
        op->H() * x.segment(st.cs.hx_op_off[i], st.cs.hx_op_size(i)) - op->h();
  }
  SolverConfig cfg;
  cfg.alpha = inst.alpha;
  cfg.gamma.gamma = inst.gamma;
  cfg.tol = 1e-9;
  cfg.max_iterations = 5;
  cfg.v0 = warm_start_v(st.cs, st.params, y, w, std::nullopt, inst.alpha);
  SolveResult r = run_cabra(st.cs, st.params, st.bank, cfg);
  EXPECT_EQ(r.converged_iteration, 1);
  EXPECT_LT((r.y - y).norm(), 1e-9);
}

TEST(Solver, TraceAndMetrics) {
  IllustrativeOptions o;
  o.dim = 2;
  o.with_alg1 = false;
  Instance inst = gen_illustrative(5, o);
  const auto& st = inst.strategy("cabra");
  SolverConfig cfg;
  cfg.alpha = inst.alpha;
  cfg.gamma.gamma = inst.gamma;
  cfg.tol = 1e-10;
  cfg.max_iterations = 4000;
  cfg.mode = Mode::Z;
  cfg.metrics = inst.metrics();
  cfg.trace_every = 10;
  cfg.record_time = true;
  SolveResult r = run_cabra(st.cs, st.params, st.bank, cfg);
  ASSERT_TRUE(r.converged);
  EXPECT_EQ(r.trace.front().iter, 1);
  EXPECT_EQ(r.trace.back().iter, r.converged_iteration);
  EXPECT_TRUE(r.trace.back().objective_gap.has_value());
  EXPECT_TRUE(r.trace.back().elapsed_s.has_value());
  EXPECT_LT(std::abs(*r.trace.back().objective_gap), 1e-6);
  EXPECT_LT((r.y - *inst.y_ref).norm(), 1e-5 * std::max(1.0, inst.y_ref->norm()));
}

TEST(Solver, HarmonicSchedule) {
  GammaSchedule g;
  g.kind = GammaSchedule::Kind::Harmonic;
  g.gamma = 1.0;
  g.gamma0 = 1.5;
  EXPECT_DOUBLE_EQ(g.at(0), 1.5);
  EXPECT_DOUBLE_EQ(g.at(1), 1.25);
}

TEST(Solver, Averagedness) {
  Strategy st = small_illustrative(8, 2);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd;
  for (auto [alpha, gamma] : {std::pair{2.0, 0.95}, {0.5, 1.75}, {0.25, 1.85}}) {
    for (int t = 0; t < 50; ++t) {
      Vec z1(st.cs.hz_size), z2(st.cs.hz_size);
      for (Index e = 0; e < z1.size(); ++e) {
        z1(e) = 2 * nd(rng);
        z2(e) = 2 * nd(rng);
      }
      Vec d = z1 - z2;
      Vec dt = operator_T(st.cs, st.params, st.bank, alpha, gamma, z1) -
               operator_T(st.cs, st.params, st.bank, alpha, gamma, z2);
      const double bound =
          d.squaredNorm() + (gamma - 2 + alpha / 2) / gamma * (d - dt).squaredNorm();
      EXPECT_LE(dt.squaredNorm(), bound + 1e-8);
    }
  }
}
