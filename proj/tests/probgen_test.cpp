#include <gtest/gtest.h>

#include "cabra/probgen.hpp"

using namespace cabra;

TEST(Probgen, Deterministic) {
  IllustrativeOptions o;
  o.dim = 3;
  o.with_alg1 = false;
  o.with_oracle = false;
  Instance a = gen_illustrative(12, o), b = gen_illustrative(12, o), c = gen_illustrative(13, o);
  auto normal = [](const Instance& inst) {
    return std::dynamic_pointer_cast<HalfspaceNormalCone>(inst.strategies[0].bank.A[0])->normal();
  };
  EXPECT_EQ(normal(a), normal(b));
  EXPECT_NE(normal(a), normal(c));
}

TEST(Probgen, RandomSpectrum) {
  Rng rng(1);
  Mat H = random_spectrum_sym(rng, 8, 0.0, 1.0);
  Vec ev = linalg::sym_eigenvalues(H);
  EXPECT_GE(ev(0), -1e-12);
  EXPECT_LE(ev(7), 1.0 + 1e-12);
  Mat Q = haar_orthogonal(rng, 6);
  EXPECT_LT(linalg::max_abs(Mat(Q.transpose() * Q - Mat::Identity(6, 6))), 1e-12);
}

TEST(Probgen, QpOracleSmall) {
  // min 0.5|y|^2 - (2,2)^T y s.t. y1 + y2 <= 1: y = (0.5, 0.5).
  Mat H = Mat::Identity(2, 2);
  Vec h = Vec::Constant(2, 2.0);
  Mat C = Mat::Ones(1, 2);
  Vec v = Vec::Ones(1);
  QpResult r = qp_oracle(H, h, C, v);
  EXPECT_NEAR(r.y(0), 0.5, 1e-12);
  EXPECT_NEAR(r.y(1), 0.5, 1e-12);
  EXPECT_EQ(r.active, std::vector<int>{0});
  // Inactive constraint: unconstrained minimizer.
  QpResult u = qp_oracle(H, h, C, Vec::Constant(1, 10.0));
  EXPECT_TRUE(u.active.empty());
  EXPECT_NEAR(u.y(0), 2.0, 1e-12);
}

TEST(Probgen, IllustrativeValidatesAndMatchesOracle) {
  IllustrativeOptions o;
  o.dim = 2;
  Instance inst = gen_illustrative(3, o);
  for (const auto& st : inst.strategies) EXPECT_TRUE(validate(st.cs, st.params).ok()) << st.name;
  ASSERT_TRUE(inst.y_ref.has_value());
  EXPECT_LT(inst.violation(*inst.y_ref), 1e-8);
  EXPECT_NEAR(inst.objective(*inst.y_ref), *inst.f_ref, 1e-10);
}

TEST(Probgen, ScaledInstancesValidate) {
  Instance hs = gen_halfspace_scaled(0, 8, 10);
  for (const auto& st : hs.strategies) EXPECT_TRUE(validate(st.cs, st.params).ok()) << st.name;
  Instance qs = gen_quadratic_scaled(0, 5, 4);
  for (const auto& st : qs.strategies) EXPECT_TRUE(validate(st.cs, st.params).ok()) << st.name;
  // Scaled diagonals follow the targets.
  const auto& sc = qs.strategy("scaled");
  auto op = std::dynamic_pointer_cast<AffineMonotone>(sc.bank.A[0]);
  EXPECT_GT(sc.params.blocks[0].Z(0, 0), 0.0);
  EXPECT_NEAR(sc.params.blocks[0].Z(0, 0), op->H()(0, 0) + std::abs(op->h()(0)), 1e-8);
}

TEST(Probgen, HalfquadUsesCutoffPerOperator) {
  HalfquadOptions o;
  o.n = 5;
  o.m = 4;
  o.p = 10;
  Instance inst = gen_halfquad(2, o);
  for (const auto& st : inst.strategies) {
    EXPECT_TRUE(validate(st.cs, st.params).ok()) << st.name;
    for (int j = 0; j < st.cs.m; ++j) EXPECT_EQ(st.cs.istar[j], j);
  }
  ASSERT_TRUE(inst.y_ref.has_value());
  EXPECT_LT(inst.violation(*inst.y_ref), 1e-8);
}

TEST(Probgen, WtaObjectiveMatchesDirectFormula) {
  WtaSpec sp;
  sp.weapons = 2;
  sp.targets = 2;
  sp.scenarios = 4;
  sp.stages = 2;
  sp.seed = 5;
  WtaProblem P = gen_wta(sp);
  const auto& w = P.data;
  EXPECT_NEAR(w.w.sum(), 1.0, 1e-12);
  Rng rng(2);
  Vec y = rand_uniform(rng, w.blocks, 0.0, 0.5);
  // Sum over (j, s) of the cocoercive potentials, rescaled by tau.
  Vec xb = select_B(P.cs, y);
  double direct = 0.0;
  for (int op = 0; op < P.cs.m; ++op)
    direct += P.bank.B[op]->value(xb.segment(P.cs.bx_op_off[op], P.cs.bx_op_size(op)));
  EXPECT_NEAR(wta_objective(w, y), direct / w.tau, 1e-12);
  EXPECT_TRUE(validate(P.cs, P.params).ok());
  for (int k = 0; k < P.cs.p; ++k) EXPECT_EQ(P.cs.nk(k), 1 + P.cs.mk(k));
}

TEST(Probgen, WtaSolverMatchesReference) {
  WtaSpec sp;
  sp.weapons = 2;
  sp.targets = 2;
  sp.scenarios = 2;
  sp.stages = 1;
  sp.seed = 1;
  WtaProblem P = gen_wta(sp);
  Vec yr = wta_reference(P.data, 1e-12);
  Instance inst = wta_as_instance(P, wta_objective(P.data, yr));
  const auto& st = inst.strategies[0];
  SolverConfig cfg;
  cfg.alpha = inst.alpha;
  cfg.gamma.gamma = inst.gamma;
  cfg.tol = 1e-10;
  cfg.max_iterations = 100000;
  SolveResult r = run_cabra(st.cs, st.params, st.bank, cfg);
  ASSERT_TRUE(r.converged);
  EXPECT_NEAR(wta_objective(P.data, r.y), wta_objective(P.data, yr), 1e-5);
  EXPECT_LT(wta_violation(P.data, r.y), 1e-6);
}

TEST(Probgen, WtaTreeBranching) {
  WtaSpec sp;
  sp.scenarios = 4;
  sp.stages = 3;
  sp.seed = 0;
  WtaInstance w = make_wta_instance(sp);
  EXPECT_EQ(w.members[0].size(), 1u);
  EXPECT_EQ(w.members[1].size(), 2u);
  EXPECT_EQ(w.members[2].size(), 4u);
  for (int s = 0; s < 4; ++s) EXPECT_EQ(w.branch_of[s][2], s);
  sp.branches = {1, 3};
  sp.stages = 2;
  EXPECT_NO_THROW(make_wta_instance(sp));
  sp.weapons = 0;
  EXPECT_THROW(make_wta_instance(sp), InvalidConfig);
}
