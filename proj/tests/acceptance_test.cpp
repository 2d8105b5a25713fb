// Acceptance suite: one PASS/FAIL line per primary criterion.
#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>

#include "cabra/cabra.hpp"

using namespace cabra;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// ---------------------------------------------------------------------------

Outcome toy_preconditioning() {
  const auto t0 = Clock::now();
  Instance inst = gen_toy2d();
  int it[2] = {-1, -1};
  const char* names[2] = {"unscaled", "scaled"};
  for (int s = 0; s < 2; ++s) {
    const Strategy& st = inst.strategy(names[s]);
    SolverConfig cfg;
    cfg.alpha = 2.0;
    cfg.gamma.gamma = 2.0;
    cfg.tol = 1e-8;
    cfg.max_iterations = 1000;
    cfg.mode = Mode::V;
    cfg.v0 = Vec::Zero(st.cs.hx_size);
    it[s] = run_cabra(st.cs, st.params, st.bank, cfg).converged_iteration;
  }
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = it[0] == 16 && it[1] == 2 && secs < 1.0;
  o.detail = "unscaled " + std::to_string(it[0]) + " (want 16), scaled " +
             std::to_string(it[1]) + " (want 2), " + fmt("%.3f s", secs);
  return o;
}

Outcome illustrative_structure_check() {
  CouplingStructure cs = illustrative_structure(1);
  // Expected values in 1-based notation.
  std::vector<int> I1, I5;
  for (int i : cs.Ik[0]) I1.push_back(i + 1);
  for (int i : cs.Ik[4]) I5.push_back(i + 1);
  std::vector<int> nk, mk;
  for (int k = 0; k < cs.p; ++k) {
    nk.push_back(cs.nk(k));
    mk.push_back(cs.mk(k));
  }
  const int j3 = 2, k5 = 4;
  const int s53 = cs.skj[j3][cs.slot_B(j3, k5)] + 1;
  Outcome o;
  o.pass = I1 == std::vector<int>{3, 4} && I5 == std::vector<int>{1, 3, 4} &&
           nk == std::vector<int>{2, 2, 2, 2, 3} &&
           mk == std::vector<int>{1, 0, 1, 2, 3} && s53 == 2;
  std::ostringstream ss;
  ss << "I_1 size " << I1.size() << ", I_5 size " << I5.size() << ", s^5_3 = " << s53;
  o.detail = ss.str();
  return o;
}

Outcome wta_matrices() {
  bool ok = true;
  std::ostringstream ss;
  for (int s : {1, 2, 5}) {
    BlockParams b = wta_family(s);
    std::vector<int> cut(s, 0);
    ValidationReport rep = validate_block(b, 1e-8, &cut);
    const int n = s + 1;
    Mat Z = Mat::Zero(n, n), W(n, n), K = Mat::Zero(s, n), Q = Mat::Zero(n, s),
        U = Mat::Zero(n, n);
    Z(0, 0) = s;
    U(0, 0) = s;
    for (int r = 1; r < n; ++r) {
      Z(0, r) = Z(r, 0) = -1.0;
      U(0, r) = U(r, 0) = -1.0;
      Z(r, r) = 1.0;
      for (int c = 1; c < n; ++c) U(r, c) = 1.0 / s;
    }
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c) W(r, c) = (r == c ? 1.0 : 0.0) - 1.0 / (1.0 + s);
    for (int t = 0; t < s; ++t) {
      K(t, 0) = 1.0;
      for (int r = 1; r < n; ++r) Q(r, t) = 1.0 / s;
    }
    const bool exact = b.Z == Z && b.W == W && b.K == K && b.Q == Q && b.U == U;
    ok = ok && rep.ok() && exact;
    ss << "s=" << s << (rep.ok() ? " valid" : " INVALID") << (exact ? "/exact " : "/MISMATCH ");
  }
  return {ok, ss.str()};
}

Outcome desk_convergence() {
  const auto t0 = Clock::now();
  IllustrativeOptions io;
  io.dim = 20;
  io.with_oracle = true;
  Instance inst = gen_illustrative(0, io);
  int incl_hit = -1;
  int settled[2] = {-1, -1};
  const char* names[2] = {"cabra", "alg1"};
  for (int s = 0; s < 2; ++s) {
    const Strategy& st = inst.strategy(names[s]);
    SolverConfig cfg;
    cfg.alpha = inst.alpha;
    cfg.gamma.gamma = inst.gamma;
    cfg.tol = 1e-12;
    cfg.max_iterations = 5000;
    cfg.mode = Mode::Z;
    cfg.metrics = inst.metrics();
    SolveResult r = run_cabra(st.cs, st.params, st.bank, cfg);
    int last_bad = 0;
    for (const auto& row : r.trace) {
      if (row.violation && *row.violation > 1e-4) last_bad = row.iter;
      if (s == 0 && incl_hit < 0 && row.inclusion_residual < 1e-6) incl_hit = row.iter;
    }
    // Iteration from which the violation stays at or below 1e-4.
    settled[s] = last_bad + 1;
    if (!r.trace.empty() && r.trace.back().violation &&
        *r.trace.back().violation > 1e-4)
      settled[s] = -1;
  }
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = incl_hit > 0 && incl_hit <= 5000 && settled[0] > 0 &&
           (settled[1] < 0 || settled[0] < settled[1]) && secs < 60.0;
  o.detail = "inclusion < 1e-6 at " + std::to_string(incl_hit) +
             ", violation <= 1e-4 from " + std::to_string(settled[0]) +
             " (CABRA) vs " + std::to_string(settled[1]) + " (baseline), " +
             fmt("%.1f s", secs);
  return o;
}

Outcome nonexpansiveness() {
  std::vector<Strategy> cases;
  {
    IllustrativeOptions io;
    io.dim = 3;
    io.with_alg1 = false;
    io.with_oracle = false;
    cases.push_back(gen_illustrative(7, io).strategy("cabra"));
  }
  {
    WtaSpec sp;
    sp.weapons = 2;
    sp.targets = 2;
    sp.scenarios = 3;
    sp.stages = 2;
    sp.seed = 3;
    WtaProblem P = gen_wta(sp);
    cases.push_back({"wta", P.cs, P.bank, P.params, Mode::Z});
  }
  cases.push_back(gen_quadratic_scaled(5, 4, 6).strategy("scaled"));

  const std::pair<double, double> settings[3] = {{2.0, 0.95}, {0.5, 1.75}, {0.25, 1.85}};
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> nd;
  double worst = 1e300;
  for (const auto& st : cases) {
    const Index nz = st.cs.hz_size;
    for (auto [alpha, gamma] : settings) {
      for (int pair = 0; pair < 200; ++pair) {
        Vec z1(nz), z2(nz);
        const double spread = pair % 2 ? 1e-2 : 3.0;
        for (Index e = 0; e < nz; ++e) {
          z1(e) = 3.0 * nd(rng);
          z2(e) = z1(e) + spread * nd(rng);
        }
        Vec t1 = operator_T(st.cs, st.params, st.bank, alpha, gamma, z1);
        Vec t2 = operator_T(st.cs, st.params, st.bank, alpha, gamma, z2);
        const Vec dz = z1 - z2, dt = t1 - t2;
        const double rhs = dz.squaredNorm() +
                           (gamma - 2.0 + alpha / 2.0) / gamma * (dz - dt).squaredNorm();
        worst = std::min(worst, rhs - dt.squaredNorm());
      }
    }
  }
  return {worst >= -1e-8, fmt("worst slack %.3e over 1800 pairs", worst)};
}

bool identities_hold(const BlockParams& b, const std::vector<int>* cut, double* factor_err) {
  ValidationReport rep = validate_block(b, 1e-8, cut);
  *factor_err = b.M.rows() == b.n() - 1
                    ? linalg::max_abs(Mat(b.M.transpose() * b.M - b.W))
                    : 1.0;
  return rep.ok() && *factor_err <= 1e-10;
}

Outcome matrix_identities() {
  int checked = 0, failed = 0;
  double worst_factor = 0.0, fe = 0.0;
  auto record = [&](bool ok) {
    ++checked;
    if (!ok) ++failed;
    worst_factor = std::max(worst_factor, fe);
  };
  for (int n = 2; n <= 7; ++n) {
    auto [Z, W] = uniform_family(n);
    record(identities_hold(derive_block(Z, W, Mat(0, n), Mat(n, 0), Vec(0)), nullptr, &fe));
  }
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> ud(0.2, 3.0);
  for (int n = 3; n <= 7; ++n) {
    Vec d(n);
    for (int r = 0; r < n; ++r) d(r) = ud(rng);
    Index top = 0;
    d.maxCoeff(&top);
    d(top) = std::min(d(top), 0.9 * (d.sum() - d(top)));
    SinkhornResult sr = sinkhorn_scale(d);
    record(identities_hold(derive_block(sr.Z, sr.Z, Mat(0, n), Mat(n, 0), Vec(0)), nullptr, &fe));
  }
  for (int s = 1; s <= 6; ++s) {
    std::vector<int> cut(s, 0);
    record(identities_hold(wta_family(s), &cut, &fe));
  }
  for (int n = 2; n <= 6; ++n)
    for (int m = 0; m <= 3; ++m) {
      Vec beta(m);
      for (int t = 0; t < m; ++t) beta(t) = ud(rng);
      std::vector<int> cut(m, n - 2);
      record(identities_hold(endpoint_family(n, beta), &cut, &fe));
    }
  std::uniform_int_distribution<int> pick_n(2, 6);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = pick_n(rng);
    const int m = std::uniform_int_distribution<int>(0, 2)(rng);
    Vec beta(m);
    for (int t = 0; t < m; ++t) beta(t) = ud(rng);
    std::vector<int> cut(m);
    for (int t = 0; t < m; ++t) cut[t] = std::uniform_int_distribution<int>(0, n - 2)(rng);
    const double c = std::uniform_real_distribution<double>(0.2, 1.0)(rng) *
                     2.0 * (1.0 - std::cos(M_PI / n));
    DesignSpec spec = DesignSpec::make(n, m, beta, c);
    spec.set_cutoffs(cut);
    DesignResult r = feasibility_solve(spec);
    record(identities_hold(to_block(spec, r.mats), &cut, &fe));
  }
  std::ostringstream ss;
  ss << failed << "/" << checked << " blocks failing, worst |M^T M - W| = "
     << fmt("%.2e", worst_factor);
  return {failed == 0, ss.str()};
}

// Assembled resolvent input of operator i minus the drive term.
Vec assembled_input(const Strategy& st, const Mat& L, const Mat& K, const Mat& Q,
                    double alpha, const Vec& x, int i) {
  Vec in = 2.0 * L * x;
  if (st.cs.m > 0) {
    Vec kx = K * x;
    Vec u(st.cs.bx_size);
    for (int j = 0; j < st.cs.m; ++j)
      u.segment(st.cs.bx_op_off[j], st.cs.bx_op_size(j)) =
          st.bank.B[j]->forward(kx.segment(st.cs.bx_op_off[j], st.cs.bx_op_size(j)));
    in -= alpha * (Q * u);
  }
  return in.segment(st.cs.hx_op_off[i], st.cs.hx_op_size(i));
}

Outcome triangularity() {
  std::vector<Strategy> all;
  {
    IllustrativeOptions io;
    io.dim = 2;
    io.with_oracle = false;
    Instance inst = gen_illustrative(1, io);
    for (const auto& s : inst.strategies) all.push_back(s);
  }
  for (const auto& s : gen_toy2d().strategies) all.push_back(s);
  all.push_back(gen_halfspace_scaled(1, 6, 10).strategy("scaled"));
  all.push_back(gen_quadratic_scaled(1, 5, 3).strategy("scaled"));
  {
    HalfquadOptions ho;
    ho.with_scaled = false;
    all.push_back(gen_halfquad(1, ho).strategy("uniform"));
  }
  all.push_back(detail::gen_block_parallel(1, 10).inst.strategies.front());
  {
    WtaSpec sp;
    sp.weapons = 2;
    sp.targets = 3;
    sp.scenarios = 4;
    sp.stages = 2;
    sp.seed = 1;
    WtaProblem P = gen_wta(sp);
    all.push_back({"wta", P.cs, P.bank, P.params, Mode::V});
  }

  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd;
  long changed = 0, probes = 0;
  for (const auto& st : all) {
    const Mat L = dense_lifted(st.cs, st.params, Which::L);
    Mat K, Q;
    if (st.cs.m > 0) {
      K = dense_lifted(st.cs, st.params, Which::K);
      Q = dense_lifted(st.cs, st.params, Which::Q);
    }
    Vec x(st.cs.hx_size);
    for (Index e = 0; e < x.size(); ++e) x(e) = nd(rng);
    for (int i = 0; i < st.cs.n; ++i) {
      const Vec base = assembled_input(st, L, K, Q, 1.3, x, i);
      for (int d = i; d < st.cs.n; ++d) {
        Vec xp = x;
        for (Index e = 0; e < st.cs.hx_op_size(d); ++e)
          xp(st.cs.hx_op_off[d] + e) += 10.0 * nd(rng);
        ++probes;
        if (!(assembled_input(st, L, K, Q, 1.3, xp, i).array() == base.array()).all())
          ++changed;
      }
    }
  }
  std::ostringstream ss;
  ss << all.size() << " structures, " << probes << " perturbations, " << changed
     << " changed an earlier input";
  return {changed == 0, ss.str()};
}

Outcome decentral_equivalence() {
  IllustrativeOptions io;
  io.dim = 20;
  io.with_alg1 = false;
  io.with_oracle = false;
  Instance inst = gen_illustrative(0, io);
  const Strategy& st = inst.strategy("cabra");
  SolverConfig cfg;
  cfg.alpha = inst.alpha;
  cfg.gamma.gamma = inst.gamma;
  cfg.max_iterations = 100;
  cfg.tol = 1e-300;
  cfg.mode = Mode::V;
  cfg.record_iterates = true;
  SolveResult ref = run_cabra(st.cs, st.params, st.bank, cfg);
  double dev = 0.0;
  bool lengths = ref.iterates.size() == 100;
  for (ScheduleOrder order : {ScheduleOrder::Forward, ScheduleOrder::Reverse,
                              ScheduleOrder::Shuffled}) {
    SimOptions so;
    so.order = order;
    so.seed = 9;
    SimResult sim = simulate(st.cs, st.params, st.bank, cfg, so);
    lengths = lengths && sim.x_iterates.size() == ref.iterates.size();
    for (std::size_t k = 0; k < std::min(sim.x_iterates.size(), ref.iterates.size()); ++k)
      dev = std::max(dev, linalg::max_abs(Vec(sim.x_iterates[k] - ref.iterates[k])));
  }

  WtaSpec sp;
  sp.weapons = 3;
  sp.targets = 2;
  sp.scenarios = 3;
  sp.stages = 2;
  sp.seed = 4;
  WtaProblem P = gen_wta(sp);
  SolverConfig wc;
  wc.alpha = 1.0;
  wc.gamma.gamma = 1.0;
  wc.max_iterations = 10;
  wc.tol = 1e-300;
  SimResult ws = simulate(P.cs, P.params, P.bank, wc);
  PlatformMap pm;
  pm.platforms = sp.weapons;
  pm.monotone_owner = P.platform_of_op;
  pm.block_owner = P.weapon_of_block;
  pm.cocoercive_replicated.assign(P.cs.m, true);
  pm.cocoercive_functional.assign(P.cs.m, true);
  PlatformSummary sum = platform_summary(P.cs, ws.log, pm);
  const int ES = sp.targets * sp.scenarios;
  bool one_each = sum.other_inter_platform_messages == 0 &&
                  static_cast<int>(sum.exchanges_per_iter.size()) == wc.max_iterations;
  std::map<std::pair<int, int>, int> per;
  for (const auto& e : sum.exchanges) {
    ++per[{e.iter, e.sender}];
    one_each = one_each && e.scalars == ES;
  }
  one_each = one_each && per.size() == static_cast<std::size_t>(wc.max_iterations * sp.weapons);
  for (const auto& kv : per) one_each = one_each && kv.second == 1;

  Outcome o;
  o.pass = lengths && dev <= 1e-10 && one_each;
  o.detail = fmt("max iterate deviation %.2e over 3 schedules; ", dev) +
             "WTA: " + std::to_string(sum.exchanges.size()) + " platform broadcasts in " +
             std::to_string(wc.max_iterations) + " iterations, |E x S| = " +
             std::to_string(ES) + ", other inter-platform messages " +
             std::to_string(sum.other_inter_platform_messages);
  return o;
}

Outcome design_round_trip() {
  DesignSpec spec = block_parallel_spec();
  DesignResult r = feasibility_solve(spec);
  const auto& d = r.mats;
  const int n = spec.n, m = spec.m;
  // cutoff of row t is its last allowed K position
  std::vector<int> cut(m, -1);
  for (int t = 0; t < m; ++t)
    for (int s = 0; s < n; ++s)
      if (spec.k_allowed(t, s)) cut[t] = s;
  BlockParams b = to_block(spec, d);
  const bool valid = validate_block(b, 1e-8, &cut).ok();
  const double l2 = linalg::fiedler(d.W);
  bool zeros = true;
  const BoolMat wz = spec.w_zero_effective();
  for (int a = 0; a < n; ++a)
    for (int c = 0; c < n; ++c) {
      if (spec.z_zero(a, c)) zeros = zeros && d.Z(a, c) == 0.0;
      if (wz(a, c)) zeros = zeros && d.W(a, c) == 0.0;
    }
  for (int t = 0; t < m; ++t)
    for (int s = 0; s < n; ++s) {
      if (!spec.k_allowed(t, s)) zeros = zeros && d.K(t, s) == 0.0;
      if (!spec.q_allowed(s, t)) zeros = zeros && d.Q(s, t) == 0.0;
    }
  SdpaModel model = to_sdpa(build_sdp(spec));
  const std::string text = to_sdpa_string(model);
  SdpaModel back = parse_sdpa_string(text);
  const bool sdpa_ok = back.same_as(model) && to_sdpa_string(back) == text;
  Outcome o;
  o.pass = valid && l2 >= spec.c - 1e-7 && zeros && sdpa_ok;
  o.detail = std::string(valid ? "valid" : "INVALID") + fmt(", lambda2(W) = %.6f", l2) +
             fmt(" (c = %.6f)", spec.c) + (zeros ? ", zero pattern exact" : ", ZERO PATTERN BROKEN") +
             (sdpa_ok ? ", SDPA round-trip lossless" : ", SDPA round-trip differs");
  return o;
}

Outcome quadratic_oracle() {
  double worst = 0.0;
  bool all_conv = true;
  for (unsigned long long seed = 0; seed < 5; ++seed) {
    Instance inst = gen_quadratic_scaled(seed, 8, 20);
    const Strategy& any = inst.strategies.front();
    // Dense normal equations of sum_i R_i^T (H_i R_i y - h_i) = 0.
    const auto& cs = any.cs;
    Mat H = Mat::Zero(cs.gy_size, cs.gy_size);
    Vec h = Vec::Zero(cs.gy_size);
    for (int i = 0; i < cs.n; ++i) {
      auto op = std::dynamic_pointer_cast<AffineMonotone>(any.bank.A[i]);
      Mat R = dense_select_A(cs, i);
      H += R.transpose() * op->H() * R;
      h += R.transpose() * op->h();
    }
    const Vec ystar = H.fullPivLu().solve(h);
    for (const auto& st : inst.strategies) {
      SolverConfig cfg;
      cfg.alpha = inst.alpha;
      cfg.gamma.gamma = inst.gamma;
      cfg.tol = 1e-11;
      cfg.max_iterations = 50000;
      cfg.mode = st.mode;
      SolveResult r = run_cabra(st.cs, st.params, st.bank, cfg);
      all_conv = all_conv && r.converged;
      worst = std::max(worst, (r.y - ystar).norm() / ystar.norm());
    }
  }
  return {worst <= 1e-6 && all_conv, fmt("worst relative error %.2e over 5 seeds x 2 strategies", worst)};
}

}  // namespace

int main() {
  const std::pair<const char*, std::function<Outcome()>> criteria[] = {
      {"toy_preconditioning", toy_preconditioning},
      {"illustrative_structure", illustrative_structure_check},
      {"wta_matrices", wta_matrices},
      {"desk_scale_convergence", desk_convergence},
      {"nonexpansiveness", nonexpansiveness},
      {"matrix_identities", matrix_identities},
      {"triangularity", triangularity},
      {"decentralized_equivalence", decentral_equivalence},
      {"design_round_trip", design_round_trip},
      {"quadratic_oracle", quadratic_oracle},
  };
  int failures = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria failed\n", failures, std::size(criteria));
  return failures == 0 ? 0 : 1;
}
