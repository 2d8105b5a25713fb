#ifndef CABRA_EXPERIMENT_HPP_
#define CABRA_EXPERIMENT_HPP_

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "cabra/decentral.hpp"
#include "cabra/design.hpp"
#include "cabra/io.hpp"
#include "cabra/probgen.hpp"
#include "cabra/solver.hpp"

namespace cabra {

inline const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names{"illustrative", "toy2d", "halfspace_scaled",
                                              "quadratic_scaled", "halfquad",
                                              "block_parallel", "wta"};
  return names;
}

struct ExperimentConfig {
  std::string name;
  unsigned long long seed = 0;
  int trials = 1;
  double scale = 1.0;
  std::string out_dir;
  int max_iterations = 0;  // 0: per-experiment default
  int threads = 0;
};

/// FNV-1a over bytes.
inline std::uint64_t fnv1a(const std::string& s, std::uint64_t h = 1469598103934665603ULL) {
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

/// Fingerprint of a strategy: structure, parameters and operator responses
/// at a fixed probe point.
inline std::string instance_hash(const Strategy& st) {
  std::string acc = structure_to_json(st.cs).dump() + params_to_json(st.params).dump();
  for (int i = 0; i < st.cs.n; ++i) {
    const Index d = st.cs.hx_op_size(i);
    Vec u = Vec::LinSpaced(d, -1.0, 2.0);
    Vec x = st.bank.A[i]->resolvent(u, 1.0, Vec::Ones(d));
    for (Index e = 0; e < d; ++e) acc += fmt_g17(x(e)) + ",";
  }
  for (int j = 0; j < st.cs.m; ++j) {
    const Index d = st.cs.bx_op_size(j);
    Vec b = st.bank.B[j]->forward(Vec::LinSpaced(d, 0.5, 1.5));
    for (Index e = 0; e < d; ++e) acc += fmt_g17(b(e)) + ",";
  }
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(acc)));
  return buf;
}

namespace detail {

inline int scaled(double base, double scale, int lo) {
  return std::max(lo, static_cast<int>(std::lround(base * scale)));
}

inline int default_iterations(const std::string& name) {
  if (name == "toy2d") return 100;
  if (name == "illustrative" || name == "halfquad" || name == "wta") return 5000;
  return 2000;
}

struct BlockParallelRun {
  Instance inst;
  DesignResult design;
};

/// Six halfspaces and two quadratic terms on one shared block, with the
/// block-parallel matrix pattern.
inline BlockParallelRun gen_block_parallel(unsigned long long seed, int dim) {
  Rng rng(seed);
  BlockParallelRun out;
  DesignSpec spec = block_parallel_spec();
  out.design = feasibility_solve(spec);
  BlockParams bp = to_block(spec, out.design.mats);
  CouplingStructure cs = build_structure(std::vector<std::vector<int>>(6, {0}),
                                         std::vector<std::vector<int>>(2, {0}), {dim},
                                         std::vector<int>{1, 1});
  OperatorBank bank;
  Mat C = detail::parallel_normals(rng, 6, dim);
  Vec v = rand_uniform(rng, 6, 0.0, 1.0);
  for (int i = 0; i < 6; ++i) bank.A.push_back(detail::geq_halfspace(C.row(i).transpose(), v(i)));
  Mat Hs = Mat::Zero(dim, dim);
  Vec hsum = Vec::Zero(dim);
  for (int j = 0; j < 2; ++j) {
    Mat H = random_spectrum_sym(rng, dim, 0.0, 1.0);
    Vec h = rand_uniform(rng, dim, -0.5, 0.5);
    Hs += H;
    hsum += h;
    bank.B.push_back(std::make_shared<AffineCocoercive>(H, h));
  }
  ParamSet ps;
  ps.blocks.push_back(bp);
  refresh_dinv(ps);
  Instance& inst = out.inst;
  inst.name = "block_parallel";
  inst.seed = seed;
  inst.alpha = 1.0;
  inst.gamma = 1.0;
  inst.strategies.push_back({"cabra", cs, bank, ps, Mode::V});
  QpResult q = qp_oracle(Hs, hsum, -C, -v);
  inst.f_ref = q.value;
  inst.y_ref = q.y;
  inst.objective = [cs, bank](const Vec& y) { return detail::sum_objective(cs, bank, y); };
  inst.violation = [cs, bank](const Vec& y) { return detail::sum_violation(cs, bank, y); };
  return out;
}

// Desk-sized tree: one root branch, then two branches of two scenarios.
inline WtaSpec wta_experiment_spec(unsigned long long seed, double scale) {
  WtaSpec s;
  s.weapons = scaled(3, scale, 2);
  s.targets = scaled(4, scale, 2);
  s.scenarios = 4;
  s.stages = 2;
  s.branches = {1, 2};
  s.seed = seed;
  return s;
}

struct TrialOutput {
  json runs = json::array();
  std::map<std::string, std::vector<TraceRow>> traces;
  json extra;
};

inline TrialOutput run_trial(const ExperimentConfig& cfg, int t) {
  const unsigned long long seed = cfg.seed + static_cast<unsigned long long>(t);
  const int maxit = cfg.max_iterations > 0 ? cfg.max_iterations : default_iterations(cfg.name);
  Instance inst;
  TrialOutput out;
  std::optional<WtaProblem> wta;
  if (cfg.name == "illustrative") {
    IllustrativeOptions o;
    o.dim = scaled(200, cfg.scale, 1);
    inst = gen_illustrative(seed, o);
  } else if (cfg.name == "toy2d") {
    inst = gen_toy2d();
  } else if (cfg.name == "halfspace_scaled") {
    inst = gen_halfspace_scaled(seed, 30, scaled(200, cfg.scale, 10));
  } else if (cfg.name == "quadratic_scaled") {
    inst = gen_quadratic_scaled(seed, 20, scaled(100, cfg.scale, 2));
  } else if (cfg.name == "halfquad") {
    HalfquadOptions o;
    o.p = scaled(10, cfg.scale, 10);
    inst = gen_halfquad(seed, o);
  } else if (cfg.name == "block_parallel") {
    auto bp = gen_block_parallel(seed, scaled(20, cfg.scale, 10));
    inst = bp.inst;
    out.extra["design_iterations"] = bp.design.iterations;
    out.extra["lambda2_W"] = linalg::fiedler(bp.design.mats.W);
  } else if (cfg.name == "wta") {
    wta = gen_wta(wta_experiment_spec(seed, cfg.scale));
    Vec yr = wta_reference(wta->data, 1e-11);
    inst = wta_as_instance(*wta, wta_objective(wta->data, yr));
  } else {
    throw InvalidConfig("unknown experiment '" + cfg.name + "'");
  }
  for (const auto& st : inst.strategies) {
    SolverConfig sc;
    sc.alpha = inst.alpha;
    sc.gamma.gamma = inst.gamma;
    sc.max_iterations = maxit;
    sc.tol = cfg.name == "toy2d" ? 1e-8 : 1e-12;
    sc.mode = st.mode;
    sc.metrics = inst.metrics();
    sc.threads = 1;
    SolveResult r = run_cabra(st.cs, st.params, st.bank, sc);
    json run;
    run["trial"] = t;
    run["seed"] = seed;
    run["strategy"] = st.name;
    run["trace"] = st.name + "_trial" + std::to_string(t) + ".csv";
    run["instance_hash"] = instance_hash(st);
    run["converged_iteration"] = r.converged_iteration;
    run["iterations"] = r.iterations;
    if (!r.trace.empty()) {
      const auto& last = r.trace.back();
      run["final_fp_residual"] = last.fp_residual;
      run["final_inclusion_residual"] = last.inclusion_residual;
      if (last.objective_gap) run["final_objective_gap"] = *last.objective_gap;
      if (last.violation) run["final_violation"] = *last.violation;
    }
    if (cfg.name == "block_parallel" || cfg.name == "wta") {
      SolverConfig sim = sc;
      sim.max_iterations = std::min(maxit, 20);
      SimResult s = simulate(st.cs, st.params, st.bank, sim);
      MessageSummary ms = count_messages(s.log);
      run["messages_per_iter"] = ms.messages_per_iter;
      run["scalars_per_iter"] = ms.scalars_per_iter;
      if (wta) {
        PlatformMap pm;
        pm.platforms = wta->data.Wn();
        pm.monotone_owner = wta->platform_of_op;
        pm.block_owner = wta->weapon_of_block;
        pm.cocoercive_replicated.assign(st.cs.m, true);
        pm.cocoercive_functional.assign(st.cs.m, true);
        PlatformSummary ps = platform_summary(st.cs, s.log, pm);
        run["platform_exchanges_per_iter"] = ps.exchanges_per_iter.empty()
                                                 ? 0
                                                 : ps.exchanges_per_iter.begin()->second;
        run["platform_exchange_scalars"] = ps.exchanges.empty() ? 0 : ps.exchanges[0].scalars;
        run["other_inter_platform_messages"] = ps.other_inter_platform_messages;
      }
    }
    out.runs.push_back(run);
    out.traces[st.name] = r.trace;
  }
  return out;
}

// Mean over trials, row by row; shorter traces repeat their last row.
inline std::vector<TraceRow> mean_trace(const std::vector<std::vector<TraceRow>>& all) {
  std::size_t len = 0;
  for (const auto& t : all) len = std::max(len, t.size());
  std::vector<TraceRow> out;
  for (std::size_t r = 0; r < len; ++r) {
    TraceRow m;
    m.iter = static_cast<int>(r) + 1;
    int cnt = 0, gap_cnt = 0, vio_cnt = 0;
    double gap = 0.0, vio = 0.0;
    for (const auto& t : all) {
      if (t.empty()) continue;
      const TraceRow& x = t[std::min(r, t.size() - 1)];
      m.fp_residual += x.fp_residual;
      m.consensus_residual += x.consensus_residual;
      m.inclusion_residual += x.inclusion_residual;
      if (x.objective_gap) { gap += *x.objective_gap; ++gap_cnt; }
      if (x.violation) { vio += *x.violation; ++vio_cnt; }
      ++cnt;
    }
    if (cnt == 0) continue;
    m.fp_residual /= cnt;
    m.consensus_residual /= cnt;
    m.inclusion_residual /= cnt;
    if (gap_cnt) m.objective_gap = gap / gap_cnt;
    if (vio_cnt) m.violation = vio / vio_cnt;
    out.push_back(m);
  }
  return out;
}

}  // namespace detail

/// Runs every trial, writes one trace CSV per (strategy, trial), the mean
/// traces and manifest.json into out_dir, and returns the manifest.
inline json run_experiment(const ExperimentConfig& cfg) {
  bool known = false;
  for (const auto& n : experiment_names()) known = known || n == cfg.name;
  if (!known) throw InvalidConfig("unknown experiment '" + cfg.name + "'");
  if (cfg.trials < 1) throw InvalidConfig("experiment needs at least one trial");
  if (!(cfg.scale > 0.0)) throw InvalidConfig("experiment scale must be positive");
  const int trials = cfg.name == "toy2d" ? 1 : cfg.trials;
  std::vector<detail::TrialOutput> outs(trials);
  const int nthreads = std::min(trials, thread_cap(cfg.threads));
  if (nthreads <= 1) {
    for (int t = 0; t < trials; ++t) outs[t] = detail::run_trial(cfg, t);
  } else {
    std::vector<std::thread> pool;
    std::mutex mu;
    int next = 0;
    std::exception_ptr err;
    for (int w = 0; w < nthreads; ++w)
      pool.emplace_back([&] {
        while (true) {
          int t;
          {
            std::lock_guard<std::mutex> lk(mu);
            if (next >= trials || err) return;
            t = next++;
          }
          try {
            outs[t] = detail::run_trial(cfg, t);
          } catch (...) {
            std::lock_guard<std::mutex> lk(mu);
            if (!err) err = std::current_exception();
          }
        }
      });
    for (auto& th : pool) th.join();
    if (err) std::rethrow_exception(err);
  }

  std::filesystem::create_directories(cfg.out_dir);
  const std::filesystem::path dir(cfg.out_dir);
  json manifest;
  manifest["schema_version"] = kSchemaVersion;
  manifest["experiment"] = cfg.name;
  manifest["seed"] = cfg.seed;
  manifest["trials"] = trials;
  manifest["scale"] = cfg.scale;
  manifest["max_iterations"] =
      cfg.max_iterations > 0 ? cfg.max_iterations : detail::default_iterations(cfg.name);
  json runs = json::array();
  std::map<std::string, std::vector<std::vector<TraceRow>>> by_strategy;
  std::vector<std::string> order;
  for (int t = 0; t < trials; ++t) {
    for (const auto& run : outs[t].runs) {
      const std::string s = run["strategy"];
      write_text_file((dir / run["trace"].get<std::string>()).string(),
                      trace_csv(outs[t].traces.at(s)));
      if (!by_strategy.count(s)) order.push_back(s);
      by_strategy[s].push_back(outs[t].traces.at(s));
      runs.push_back(run);
    }
    if (!outs[t].extra.is_null()) manifest["trial_extra"].push_back(outs[t].extra);
  }
  manifest["strategies"] = order;
  manifest["runs"] = runs;
  json means;
  for (const auto& s : order) {
    const std::string file = "mean_" + s + ".csv";
    write_text_file((dir / file).string(), trace_csv(detail::mean_trace(by_strategy[s])));
    means[s] = file;
  }
  manifest["mean_traces"] = means;
  manifest["mean_rule"] = "arithmetic mean per iteration; finished trials repeat their last row";
  write_json_file((dir / "manifest.json").string(), manifest);
  return manifest;
}

}  // namespace cabra

#endif  // CABRA_EXPERIMENT_HPP_
