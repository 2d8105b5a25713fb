#ifndef CABRA_SOLVER_HPP_
#define CABRA_SOLVER_HPP_

#include <chrono>
#include <cstdlib>
#include <functional>
#include <optional>
#include <thread>
#include <vector>

#include "cabra/core.hpp"
#include "cabra/matparams.hpp"
#include "cabra/operators.hpp"
#include "cabra/structure.hpp"

namespace cabra {

enum class Mode { Z, V };

struct GammaSchedule {
  enum class Kind { Constant, Harmonic } kind = Kind::Constant;
  double gamma = 0.95;     // constant value, or the limit for Harmonic
  double gamma0 = 0.95;    // first value for Harmonic
  // gamma_nu = gamma + (gamma0 - gamma) / (nu + 1), nu = 0, 1, ...
  double at(int nu) const {
    if (kind == Kind::Constant) return gamma;
    return gamma + (gamma0 - gamma) / (nu + 1.0);
  }
};

struct IterationMetrics {
  std::optional<double> objective_gap;
  std::optional<double> violation;
};

struct TraceRow {
  int iter = 0;
  double fp_residual = 0.0;
  double consensus_residual = 0.0;
  double inclusion_residual = 0.0;
  std::optional<double> objective_gap;
  std::optional<double> violation;
  std::optional<double> elapsed_s;
};

struct SolverConfig {
  double alpha = 2.0;
  GammaSchedule gamma;
  int max_iterations = 10000;
  double tol = 1e-8;
  Mode mode = Mode::V;
  std::optional<Vec> v0;  // H_x, v-form
  std::optional<Vec> z0;  // H_z, z-form
  int trace_every = 1;
  bool record_iterates = false;
  bool record_time = false;
  int threads = 0;  // 0: CABRA_THREADS or 1
  // Optional experiment metrics evaluated at the mean estimate.
  std::function<IterationMetrics(const Vec& ybar, const Vec& x)> metrics;
};

struct SweepResult {
  Vec x;  // H_x
  Vec w;  // H_x, w_i in A_i(x_i)
  Vec u;  // B_x, u_j = B_j((K_A x)_j)
};

struct SolveResult {
  Vec y;  // mean estimate of the final x
  Vec x;
  Vec w;
  Vec u;
  Vec v;  // final v (v-form) or -M_A^T z (z-form)
  Vec z;  // final z (z-form only)
  bool converged = false;
  int iterations = 0;
  int converged_iteration = -1;
  bool v0_projected = false;
  std::vector<TraceRow> trace;
  std::vector<Vec> iterates;
};

/// Pre-computed per-operator data for sweeps.
struct SweepPlan {
  std::vector<Vec> diag;                     // D_A block of operator i
  std::vector<std::vector<int>> cocoercive_after;  // j with i*_j == i
  // Dependency levels: operators in the same level need nothing from each
  // other within a sweep.
  std::vector<std::vector<int>> levels;
  std::vector<std::vector<int>> cocoercive_deps;  // operators read by K row j

  static SweepPlan build(const CouplingStructure& cs, const ParamSet& ps) {
    SweepPlan plan;
    plan.diag.resize(cs.n);
    for (int i = 0; i < cs.n; ++i) {
      Vec d(cs.hx_op_size(i));
      const Index base = cs.hx_op_off[i];
      for (std::size_t o = 0; o < cs.KA[i].size(); ++o) {
        const int k = cs.KA[i][o];
        const int s = cs.s_of[i][o];
        d.segment(cs.hx_off[i][o] - base, cs.dims[k])
            .setConstant(ps.blocks[k].Z(s, s));
      }
      plan.diag[i] = d;
    }
    plan.cocoercive_after.assign(cs.n, {});
    for (int j = 0; j < cs.m; ++j) plan.cocoercive_after[cs.istar[j]].push_back(j);

    // deps[i]: operators whose x feeds operator i within the sweep.
    std::vector<std::vector<int>> cdeps(cs.m);
    for (int j = 0; j < cs.m; ++j)
      for (std::size_t o = 0; o < cs.KB[j].size(); ++o) {
        const int k = cs.KB[j][o];
        const int t = cs.t_of[j][o];
        for (int s = 0; s < cs.nk(k); ++s)
          if (ps.blocks[k].K(t, s) != 0.0) cdeps[j].push_back(cs.Ik[k][s]);
      }
    plan.cocoercive_deps = cdeps;
    std::vector<int> level(cs.n, 0);
    for (int i = 0; i < cs.n; ++i) {
      int lv = 0;
      for (std::size_t o = 0; o < cs.KA[i].size(); ++o) {
        const int k = cs.KA[i][o];
        const int s = cs.s_of[i][o];
        for (int sp = 0; sp < s; ++sp)
          if (ps.blocks[k].L(s, sp) != 0.0)
            lv = std::max(lv, level[cs.Ik[k][sp]] + 1);
        for (int t = 0; t < cs.mk(k); ++t)
          if (ps.blocks[k].Q(s, t) != 0.0)
            for (int src : cdeps[cs.Jk[k][t]]) lv = std::max(lv, level[src] + 1);
      }
      level[i] = lv;
      if (static_cast<int>(plan.levels.size()) <= lv) plan.levels.resize(lv + 1);
      plan.levels[lv].push_back(i);
    }
    return plan;
  }
};

inline int thread_cap(int requested) {
  int cap = requested;
  if (cap <= 0) {
    cap = 1;
    if (const char* env = std::getenv("CABRA_THREADS")) cap = std::max(1, std::atoi(env));
  }
  return cap;
}

inline void validate_config(const SolverConfig& cfg, bool has_cocoercive) {
  if (!(cfg.alpha > 0.0 && cfg.alpha < 4.0))
    throw InvalidConfig("alpha must lie in (0, 4)");
  const double hi = has_cocoercive ? 2.0 - cfg.alpha / 2.0 : 2.0;
  auto ok = [&](double g) {
    return g > 0.0 && (has_cocoercive ? g < hi : g <= hi);
  };
  if (!ok(cfg.gamma.gamma))
    throw InvalidConfig("gamma must lie in (0, " + std::to_string(hi) +
                        (has_cocoercive ? ")" : "]"));
  if (cfg.gamma.kind == GammaSchedule::Kind::Harmonic && !ok(cfg.gamma.gamma0))
    throw InvalidConfig("harmonic schedule start must lie in the gamma range");
  if (cfg.max_iterations < 1) throw InvalidConfig("max_iterations must be >= 1");
  if (!(cfg.tol > 0.0)) throw InvalidConfig("tol must be positive");
}

namespace detail {

inline void solve_operator(const CouplingStructure& cs, const ParamSet& ps,
                           const OperatorBank& bank, const SweepPlan& plan,
                           double alpha, const Vec& drive, int i,
                           const std::vector<char>& done,
                           const std::vector<char>& ready, SweepResult& r) {
  const Index off = cs.hx_op_off[i];
  const Index len = cs.hx_op_size(i);
  Vec in = drive.segment(off, len) + apply_L_row(cs, ps, r.x, i, done);
  if (cs.m > 0) in -= alpha * apply_QBK_row(cs, ps, r.u, i, ready);
  in = in.cwiseQuotient(plan.diag[i]);
  auto [xi, wi] = bank.A[i]->resolve(in, alpha, plan.diag[i]);
  r.x.segment(off, len) = xi;
  r.w.segment(off, len) = wi;
}

inline void solve_cocoercive(const CouplingStructure& cs, const ParamSet& ps,
                             const OperatorBank& bank, int j,
                             const std::vector<char>& done, SweepResult& r) {
  Vec kx = apply_K_row(cs, ps, r.x, j, done);
  r.u.segment(cs.bx_op_off[j], cs.bx_op_size(j)) = bank.B[j]->forward(kx);
}

}  // namespace detail

/// Forward substitution through the resolvents for a given drive (the
/// v term, or -M_A^T z).
inline SweepResult sweep(const CouplingStructure& cs, const ParamSet& ps,
                         const OperatorBank& bank, const SweepPlan& plan,
                         double alpha, const Vec& drive, int threads = 1) {
  cs.require(Space::Hx, drive, "sweep");
  SweepResult r;
  r.x = Vec::Zero(cs.hx_size);
  r.w = Vec::Zero(cs.hx_size);
  r.u = Vec::Zero(cs.bx_size);
  std::vector<char> done(cs.n, 0), ready(cs.m, 0);

  if (threads <= 1) {
    for (int i = 0; i < cs.n; ++i) {
      detail::solve_operator(cs, ps, bank, plan, alpha, drive, i, done, ready, r);
      done[i] = 1;
      for (int j : plan.cocoercive_after[i]) {
        detail::solve_cocoercive(cs, ps, bank, j, done, r);
        ready[j] = 1;
      }
    }
    return r;
  }

  // Level-synchronous parallel sweep. Each operator writes only its own
  // segments, so the result is identical to the sequential order.
  for (const auto& lv : plan.levels) {
    const int nlv = static_cast<int>(lv.size());
    const int nt = std::min(threads, nlv);
    std::vector<std::exception_ptr> errs(nt);
    std::vector<std::thread> pool;
    for (int t = 0; t < nt; ++t)
      pool.emplace_back([&, t] {
        try {
          for (int q = t; q < nlv; q += nt)
            detail::solve_operator(cs, ps, bank, plan, alpha, drive, lv[q], done,
                                   ready, r);
        } catch (...) {
          errs[t] = std::current_exception();
        }
      });
    for (auto& th : pool) th.join();
    for (auto& e : errs)
      if (e) std::rethrow_exception(e);
    for (int i : lv) done[i] = 1;
    // Any cocoercive operator whose K inputs are complete can now run.
    for (int j = 0; j < cs.m; ++j) {
      if (ready[j]) continue;
      bool all = true;
      for (int i : plan.cocoercive_deps[j]) all = all && done[i];
      if (all) {
        detail::solve_cocoercive(cs, ps, bank, j, done, r);
        ready[j] = 1;
      }
    }
  }
  return r;
}

inline SweepResult sweep(const CouplingStructure& cs, const ParamSet& ps,
                         const OperatorBank& bank, double alpha,
                         const Vec& drive) {
  return sweep(cs, ps, bank, SweepPlan::build(cs, ps), alpha, drive, 1);
}

inline double inclusion_residual(const CouplingStructure& cs, const Vec& w,
                                 const Vec& u) {
  Vec s = adjoint_A(cs, w);
  if (cs.m > 0) s += adjoint_B(cs, u);
  return s.norm();
}

inline void check_bank(const CouplingStructure& cs, const OperatorBank& bank) {
  if (static_cast<int>(bank.A.size()) != cs.n ||
      static_cast<int>(bank.B.size()) != cs.m)
    throw ShapeMismatch("operator bank does not match the structure's n, m");
  for (int i = 0; i < cs.n; ++i)
    if (bank.A[i]->dim() != cs.hx_op_size(i))
      throw ShapeMismatch("monotone operator " + std::to_string(i + 1) +
                          " has dimension " + std::to_string(bank.A[i]->dim()) +
                          ", expected " + std::to_string(cs.hx_op_size(i)));
  for (int j = 0; j < cs.m; ++j)
    if (bank.B[j]->dim() != cs.bx_op_size(j))
      throw ShapeMismatch("cocoercive operator " + std::to_string(j + 1) +
                          " has dimension " + std::to_string(bank.B[j]->dim()) +
                          ", expected " + std::to_string(cs.bx_op_size(j)));
}

inline void prepare_bank(const CouplingStructure& cs, const OperatorBank& bank,
                         const SweepPlan& plan, double alpha) {
  for (int i = 0; i < cs.n; ++i) bank.A[i]->prepare(alpha, plan.diag[i]);
}

/// x = S(z).
inline Vec operator_S(const CouplingStructure& cs, const ParamSet& ps,
                      const OperatorBank& bank, double alpha, const Vec& z) {
  cs.require(Space::Hz, z, "operator_S");
  return sweep(cs, ps, bank, alpha, Vec(-apply_lifted(cs, ps, Which::MT, z))).x;
}

/// T(z) = z + gamma M_A S(z).
inline Vec operator_T(const CouplingStructure& cs, const ParamSet& ps,
                      const OperatorBank& bank, double alpha, double gamma,
                      const Vec& z) {
  Vec x = operator_S(cs, ps, bank, alpha, z);
  return z + gamma * apply_lifted(cs, ps, Which::M, x);
}

/// v0 = (D_A - 2 L_A) R_A y + alpha * proj_{N_A^perp}(w + Q_A u).
inline Vec warm_start_v(const CouplingStructure& cs, const ParamSet& ps,
                        const Vec& y, const std::optional<Vec>& w = std::nullopt,
                        const std::optional<Vec>& u = std::nullopt,
                        double alpha = 1.0) {
  Vec x = select_A(cs, y);
  Vec v = apply_lifted(cs, ps, Which::D, x) - 2.0 * apply_lifted(cs, ps, Which::L, x);
  if (w || u) {
    Vec e = Vec::Zero(cs.hx_size);
    if (w) {
      cs.require(Space::Hx, *w, "warm_start_v(w)");
      e += *w;
    }
    if (u) {
      cs.require(Space::Bx, *u, "warm_start_v(u)");
      e += apply_lifted(cs, ps, Which::Q, *u);
    }
    v += alpha * project_consensus_perp(cs, e);
  }
  return v;
}

/// Algorithms 2 (z-form) and 3 (v-form).
inline SolveResult run_cabra(const CouplingStructure& cs, const ParamSet& ps,
                             const OperatorBank& bank, const SolverConfig& cfg) {
  check_bank(cs, bank);
  validate_config(cfg, cs.m > 0);
  const SweepPlan plan = SweepPlan::build(cs, ps);
  prepare_bank(cs, bank, plan, cfg.alpha);
  const int threads = thread_cap(cfg.threads);

  SolveResult res;
  Vec v, z;
  if (cfg.mode == Mode::V) {
    v = cfg.v0 ? *cfg.v0 : Vec::Zero(cs.hx_size);
    cs.require(Space::Hx, v, "v0");
    Vec perp = project_consensus_perp(cs, v);
    if ((perp - v).norm() > 1e-10 * std::max(1.0, v.norm())) {
      res.v0_projected = true;
      v = perp;
    }
  } else {
    z = cfg.z0 ? *cfg.z0 : Vec::Zero(cs.hz_size);
    cs.require(Space::Hz, z, "z0");
  }

  const auto t0 = std::chrono::steady_clock::now();
  SweepResult sr;
  for (int nu = 0; nu < cfg.max_iterations; ++nu) {
    const Vec drive =
        cfg.mode == Mode::V ? v : Vec(-apply_lifted(cs, ps, Which::MT, z));
    sr = sweep(cs, ps, bank, plan, cfg.alpha, drive, threads);
    const Vec mx = apply_lifted(cs, ps, Which::M, sr.x);
    const double fp = mx.norm();
    const double incl = inclusion_residual(cs, sr.w, sr.u);
    const double g = cfg.gamma.at(nu);
    if (cfg.mode == Mode::V)
      v -= g * apply_lifted(cs, ps, Which::W, sr.x);
    else
      z += g * mx;
    res.iterations = nu + 1;
    if (cfg.record_iterates) res.iterates.push_back(sr.x);

    const bool stop = fp <= cfg.tol && incl <= 10.0 * cfg.tol;
    const bool last = stop || nu + 1 == cfg.max_iterations;
    if ((nu % std::max(1, cfg.trace_every)) == 0 || last) {
      TraceRow row;
      row.iter = nu + 1;
      row.fp_residual = fp;
      row.consensus_residual = project_consensus_perp(cs, sr.x).norm();
      row.inclusion_residual = incl;
      if (cfg.metrics) {
        auto mt = cfg.metrics(mean_estimate(cs, sr.x), sr.x);
        row.objective_gap = mt.objective_gap;
        row.violation = mt.violation;
      }
      if (cfg.record_time)
        row.elapsed_s = std::chrono::duration<double>(
                            std::chrono::steady_clock::now() - t0)
                            .count();
      res.trace.push_back(row);
    }
    if (stop) {
      res.converged = true;
      res.converged_iteration = nu + 1;
      break;
    }
  }
  res.x = sr.x;
  res.w = sr.w;
  res.u = sr.u;
  res.y = mean_estimate(cs, sr.x);
  if (cfg.mode == Mode::V) {
    res.v = v;
  } else {
    res.z = z;
    res.v = -apply_lifted(cs, ps, Which::MT, z);
  }
  return res;
}

}  // namespace cabra

#endif  // CABRA_SOLVER_HPP_
