#include <gtest/gtest.h>

#include "cabra/decentral.hpp"
#include "cabra/families.hpp"
#include "cabra/probgen.hpp"

using namespace cabra;

namespace {

SolverConfig fixed_iterations(int iters, double alpha, double gamma) {
  SolverConfig cfg;
  cfg.alpha = alpha;
  cfg.gamma.gamma = gamma;
  cfg.max_iterations = iters;
  cfg.tol = 1e-300;
  cfg.record_iterates = true;
  return cfg;
}

}  // namespace

TEST(Decentral, MatchesCentralizedIterates) {
  IllustrativeOptions o;
  o.dim = 3;
  o.with_alg1 = false;
  o.with_oracle = false;
  Strategy st = gen_illustrative(6, o).strategy("cabra");
  SolverConfig cfg = fixed_iterations(50, 2.0, 0.95);
  SolveResult ref = run_cabra(st.cs, st.params, st.bank, cfg);
  for (auto order : {ScheduleOrder::Forward, ScheduleOrder::Reverse, ScheduleOrder::Shuffled}) {
    SimOptions so;
    so.order = order;
    so.seed = 3;
    SimResult sim = simulate(st.cs, st.params, st.bank, cfg, so);
    ASSERT_EQ(sim.x_iterates.size(), ref.iterates.size());
    for (std::size_t k = 0; k < ref.iterates.size(); ++k)
      EXPECT_LT((sim.x_iterates[k] - ref.iterates[k]).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT((sim.y - ref.y).norm(), 1e-10);
  }
}

TEST(Decentral, TwoOperatorsExchangeTwoMessages) {
  CouplingStructure cs = build_structure({{0}, {0}}, {}, {3});
  ParamSet ps = uniform_params(cs);
  OperatorBank bank;
  bank.A.push_back(std::make_shared<HalfspaceNormalCone>(Vec::Ones(3), 1.0));
  bank.A.push_back(std::make_shared<NonnegativeCone>(3));
  SimResult sim = simulate(cs, ps, bank, fixed_iterations(7, 1.0, 1.0));
  MessageSummary s = count_messages(sim.log);
  EXPECT_EQ(s.iterations, 7);
  EXPECT_EQ(s.total_messages, 14);
  for (const auto& [it, count] : s.messages_by_iter) EXPECT_EQ(count, 2) << it;
  EXPECT_EQ(s.total_scalars, 14 * 3);
  EXPECT_EQ((s.per_edge[{"A1", "A2"}]), 7 * 3);
  for (const auto& e : sim.log.entries) EXPECT_EQ(e.kind, "x-share");
}

TEST(Decentral, CocoerciveMessagesUseBShare) {
  CouplingStructure cs = build_structure({{0}, {0}}, {{0}}, {2}, std::vector<int>{0});
  ParamSet ps;
  ps.blocks.push_back(endpoint_family(2, Vec::Ones(1)));
  refresh_dinv(ps);
  OperatorBank bank;
  bank.A.push_back(std::make_shared<NonnegativeCone>(2));
  bank.A.push_back(std::make_shared<ZeroMonotone>(2));
  bank.B.push_back(std::make_shared<AffineCocoercive>(Mat::Identity(2, 2), Vec::Ones(2)));
  SolverConfig cfg = fixed_iterations(5, 1.0, 1.0);
  SimResult sim = simulate(cs, ps, bank, cfg);
  SolveResult ref = run_cabra(cs, ps, bank, cfg);
  EXPECT_LT((sim.y - ref.y).norm(), 1e-12);
  int bshare = 0;
  for (const auto& e : sim.log.entries)
    if (e.kind == "b-share") {
      ++bshare;
      EXPECT_EQ(e.sender, "B1");
      EXPECT_EQ(e.receiver, "A2");
    }
  EXPECT_EQ(bshare, 5);
}

TEST(Decentral, WtaSinglePlatformExchange) {
  WtaSpec sp;
  sp.weapons = 2;
  sp.targets = 3;
  sp.scenarios = 2;
  sp.stages = 1;
  sp.seed = 8;
  WtaProblem P = gen_wta(sp);
  SimResult sim = simulate(P.cs, P.params, P.bank, fixed_iterations(6, 1.0, 1.0));
  PlatformMap pm;
  pm.platforms = 2;
  pm.monotone_owner = P.platform_of_op;
  pm.block_owner = P.weapon_of_block;
  pm.cocoercive_replicated.assign(P.cs.m, true);
  pm.cocoercive_functional.assign(P.cs.m, true);
  PlatformSummary s = platform_summary(P.cs, sim.log, pm);
  EXPECT_EQ(s.other_inter_platform_messages, 0);
  for (const auto& [it, count] : s.exchanges_per_iter) EXPECT_EQ(count, 2) << it;
  for (const auto& e : s.exchanges) EXPECT_EQ(e.scalars, 6);
  // Without replication every x-share into a cocoercive node crosses platforms.
  pm.cocoercive_replicated.assign(P.cs.m, false);
  EXPECT_GT(platform_summary(P.cs, sim.log, pm).other_inter_platform_messages, 0);
}

TEST(Decentral, CyclicPatternDeadlocks) {
  // K reads operator 2 while Q feeds operator 1: no node can start.
  CouplingStructure cs = build_structure({{0}, {0}}, {{0}}, {1}, std::vector<int>{0});
  auto [Z, W] = uniform_family(2);
  Mat K(1, 2), Q(2, 1);
  K << 0.0, 1.0;
  Q << 1.0, 0.0;
  ParamSet ps;
  ps.blocks.push_back(derive_block(Z, W, K, Q, Vec::Ones(1)));
  refresh_dinv(ps);
  EXPECT_FALSE(validate(cs, ps).ok());
  OperatorBank bank;
  bank.A.push_back(std::make_shared<ZeroMonotone>(1));
  bank.A.push_back(std::make_shared<ZeroMonotone>(1));
  bank.B.push_back(std::make_shared<AffineCocoercive>(Mat::Identity(1, 1), Vec::Ones(1)));
  EXPECT_THROW(simulate(cs, ps, bank, fixed_iterations(2, 1.0, 0.5)), Deadlock);
  EXPECT_THROW(run_cabra(cs, ps, bank, fixed_iterations(2, 1.0, 0.5)), DependencyViolation);
}

TEST(Decentral, MessageCountingEmptyLog) {
  MessageSummary s = count_messages(MessageLog{});
  EXPECT_EQ(s.iterations, 0);
  EXPECT_EQ(s.messages_per_iter, 0.0);
}
