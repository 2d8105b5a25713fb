#include <chrono>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "cabra/cabra.hpp"

using namespace cabra;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 2;
constexpr int kExitMaxIter = 3;
constexpr int kExitIo = 4;

struct SolveOpts {
  std::string problem;
  std::string params;
  std::string mode;
  std::optional<double> alpha, gamma;
  std::optional<int> max_iter;
  std::optional<double> tol;
  std::string trace;
  std::string out;
  bool time = false;
  bool json = false;
  // simulate only
  std::string message_log;
  std::string order = "forward";
  unsigned long long seed = 0;
};

struct Loaded {
  ProblemFile pf;
  ParamSet ps;
  SolverConfig cfg;
};

int report_validation(const ValidationReport& rep, bool as_json) {
  if (as_json) {
    std::cout << validation_to_json(rep).dump(2) << "\n";
  } else if (!rep.ok()) {
    std::cerr << "parameter validation failed\n" << rep.table();
  }
  return rep.ok() ? kExitOk : kExitInvalid;
}

// Loads problem and parameters; returns an exit code on validation failure.
std::optional<int> load(const SolveOpts& o, Loaded& L) {
  L.pf = load_problem(o.problem);
  if (!o.params.empty()) {
    L.ps = params_from_raw(raw_params_from_json(read_json_file(o.params)));
  } else if (L.pf.params) {
    L.ps = *L.pf.params;
  } else if (L.pf.raw_params) {
    L.ps = params_from_raw(*L.pf.raw_params);
  } else {
    throw SchemaError(o.problem + ": no parameters given (params, params_file, "
                      "params_strategy or --params)");
  }
  ValidationReport rep = validate(L.pf.cs, L.ps);
  if (!rep.ok()) return report_validation(rep, o.json);
  L.cfg = L.pf.solver;
  if (!o.mode.empty()) L.cfg.mode = mode_from_string(o.mode);
  if (o.alpha) L.cfg.alpha = *o.alpha;
  if (o.gamma) L.cfg.gamma.gamma = *o.gamma;
  if (o.max_iter) L.cfg.max_iterations = *o.max_iter;
  if (o.tol) L.cfg.tol = *o.tol;
  L.cfg.record_time = o.time;
  return std::nullopt;
}

json final_row(const std::vector<TraceRow>& trace) {
  json j;
  if (trace.empty()) return j;
  const auto& r = trace.back();
  j["fp_residual"] = r.fp_residual;
  j["consensus_residual"] = r.consensus_residual;
  j["inclusion_residual"] = r.inclusion_residual;
  return j;
}

int cmd_solve(const SolveOpts& o) {
  Loaded L;
  if (auto rc = load(o, L)) return *rc;
  SolveResult r = run_cabra(L.pf.cs, L.ps, L.pf.bank, L.cfg);
  if (!o.trace.empty()) write_text_file(o.trace, trace_csv(r.trace));
  json s;
  s["command"] = "solve";
  s["problem"] = L.pf.name;
  s["mode"] = L.cfg.mode == Mode::V ? "v" : "z";
  s["converged"] = r.converged;
  s["converged_iteration"] = r.converged_iteration;
  s["iterations"] = r.iterations;
  s["v0_projected"] = r.v0_projected;
  s["final"] = final_row(r.trace);
  s["y"] = to_json(r.y);
  if (!o.out.empty()) write_json_file(o.out, s);
  if (o.json) {
    std::cout << s.dump(2) << "\n";
  } else {
    std::cout << (r.converged ? "converged" : "not converged") << " after " << r.iterations
              << " iterations";
    if (r.converged) std::cout << " (stopping rule met at iteration " << r.converged_iteration << ")";
    std::cout << "\n";
  }
  return r.converged ? kExitOk : kExitMaxIter;
}

int cmd_simulate(const SolveOpts& o) {
  Loaded L;
  if (auto rc = load(o, L)) return *rc;
  SimOptions so;
  if (o.order == "forward") so.order = ScheduleOrder::Forward;
  else if (o.order == "reverse") so.order = ScheduleOrder::Reverse;
  else if (o.order == "shuffled") so.order = ScheduleOrder::Shuffled;
  else throw InvalidConfig("--order must be forward, reverse or shuffled");
  so.seed = static_cast<unsigned>(o.seed);
  SimResult r = simulate(L.pf.cs, L.ps, L.pf.bank, L.cfg, so);
  if (!o.trace.empty()) write_text_file(o.trace, trace_csv(r.trace));
  if (!o.message_log.empty()) write_text_file(o.message_log, message_log_csv(r.log));
  MessageSummary ms = count_messages(r.log);
  json s;
  s["command"] = "simulate";
  s["problem"] = L.pf.name;
  s["converged"] = r.converged_iteration > 0;
  s["converged_iteration"] = r.converged_iteration;
  s["iterations"] = L.cfg.max_iterations;
  s["messages_per_iter"] = ms.messages_per_iter;
  s["scalars_per_iter"] = ms.scalars_per_iter;
  s["total_messages"] = ms.total_messages;
  s["final"] = final_row(r.trace);
  s["y"] = to_json(r.y);
  if (!o.out.empty()) write_json_file(o.out, s);
  if (o.json) {
    std::cout << s.dump(2) << "\n";
  } else {
    std::cout << "simulated " << L.cfg.max_iterations << " iterations, "
              << ms.messages_per_iter << " messages and " << ms.scalars_per_iter
              << " scalars per iteration\n";
  }
  return r.converged_iteration > 0 ? kExitOk : kExitMaxIter;
}

int cmd_validate(const std::string& params, const std::string& problem, double tol,
                 bool as_json, bool table) {
  auto raw = raw_params_from_json(read_json_file(params));
  ValidationReport rep;
  if (!problem.empty()) {
    ProblemFile pf = load_problem(problem);
    rep = validate(pf.cs, params_from_raw(raw), tol);
  } else {
    for (std::size_t k = 0; k < raw.size(); ++k) {
      const auto& r = raw[k];
      BlockParams b = derive_block(r.Z, r.W, r.K, r.Q, r.beta, static_cast<int>(k));
      validate_block(b, static_cast<int>(k), tol, rep, nullptr);
    }
  }
  if (table && !as_json) std::cout << rep.table();
  const int rc = report_validation(rep, as_json);
  if (!as_json && rc == kExitOk) std::cout << "ok\n";
  return rc;
}

int cmd_design(const std::string& spec_path, const std::string& out, const std::string& sdpa,
               bool as_json) {
  DesignSpec spec = design_spec_from_json(read_json_file(spec_path));
  spec.check();
  if (!sdpa.empty()) {
    std::ofstream f(sdpa);
    if (!f) throw IoError("cannot write " + sdpa);
    write_sdpa(to_sdpa(build_sdp(spec)), f);
  }
  DesignResult r;
  try {
    r = design(spec);
  } catch (const Infeasible& e) {
    std::cerr << e.what() << "\n";
    return kExitInvalid;
  }
  BlockParams b = to_block(spec, r.mats);
  ValidationReport rep = validate_block(b);
  ParamSet ps;
  ps.blocks.push_back(b);
  json pj = params_to_json(ps);
  json info;
  info["objective"] = objective_name(spec.objective);
  info["objective_value"] = design_objective(spec, r.mats);
  info["iterations"] = r.iterations;
  info["bisection_steps"] = r.bisection_steps;
  info["lambda2_W"] = linalg::fiedler(spec.w_equals_z ? r.mats.Z : r.mats.W);
  info["c"] = spec.c;
  pj["design"] = info;
  if (!out.empty()) write_json_file(out, pj);
  if (as_json) {
    json s = info;
    s["command"] = "design";
    s["valid"] = rep.ok();
    std::cout << s.dump(2) << "\n";
  } else {
    std::cout << "design " << objective_name(spec.objective) << ": objective "
              << fmt_g17(design_objective(spec, r.mats)) << ", lambda2(W) "
              << fmt_g17(info["lambda2_W"].get<double>()) << "\n";
  }
  if (!rep.ok()) {
    std::cerr << rep.table();
    return kExitInvalid;
  }
  return kExitOk;
}

int cmd_experiment(const ExperimentConfig& cfg, bool as_json) {
  json m = run_experiment(cfg);
  if (as_json) {
    json s;
    s["command"] = "experiment";
    s["experiment"] = cfg.name;
    s["out"] = cfg.out_dir;
    s["runs"] = m["runs"].size();
    std::cout << s.dump(2) << "\n";
  } else {
    std::cout << "wrote " << m["runs"].size() << " traces and manifest.json to " << cfg.out_dir
              << "\n";
  }
  return kExitOk;
}

void add_solve_flags(CLI::App* c, SolveOpts& o) {
  c->add_option("--problem", o.problem, "problem JSON")->required();
  c->add_option("--params", o.params, "parameter JSON overriding the problem's");
  c->add_option("--mode", o.mode, "v or z")->check(CLI::IsMember({"v", "z"}));
  c->add_option("--alpha", o.alpha, "resolvent scaling");
  c->add_option("--gamma", o.gamma, "step size");
  c->add_option("--max-iter", o.max_iter, "iteration cap");
  c->add_option("--tol", o.tol, "stopping tolerance");
  c->add_option("--trace", o.trace, "write the per-iteration trace CSV");
  c->add_option("--out", o.out, "write the summary JSON to a file");
  c->add_flag("--time", o.time, "record elapsed time in the trace");
  c->add_flag("--json", o.json, "print a JSON summary");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cabra: matrix-parametrized resolvent splitting"};
  app.require_subcommand(1);

  SolveOpts solve_o, sim_o;
  auto* solve = app.add_subcommand("solve", "run the centralized method on a problem file");
  add_solve_flags(solve, solve_o);

  auto* sim = app.add_subcommand("simulate", "run the message-passing simulation");
  add_solve_flags(sim, sim_o);
  sim->add_option("--message-log", sim_o.message_log, "write the message log CSV");
  sim->add_option("--order", sim_o.order, "node scheduling: forward, reverse, shuffled")
      ->check(CLI::IsMember({"forward", "reverse", "shuffled"}));
  sim->add_option("--seed", sim_o.seed, "seed for shuffled scheduling");

  std::string v_params, v_problem;
  double v_tol = 1e-8;
  bool v_json = false, v_table = false;
  auto* val = app.add_subcommand("validate", "check parameter matrices");
  val->add_option("--params", v_params, "parameter JSON")->required();
  val->add_option("--problem", v_problem, "problem JSON supplying the structure and cutoffs");
  val->add_option("--tol", v_tol, "tolerance");
  val->add_flag("--json", v_json, "print a JSON report");
  val->add_flag("--table", v_table, "print every check");

  std::string d_spec, d_out, d_sdpa;
  bool d_json = false;
  auto* des = app.add_subcommand("design", "design one block of matrix parameters");
  des->add_option("--spec", d_spec, "design spec JSON")->required();
  des->add_option("--out", d_out, "write the parameter JSON");
  des->add_option("--sdpa", d_sdpa, "also write the SDP in SDPA sparse format");
  des->add_flag("--json", d_json, "print a JSON summary");

  ExperimentConfig ecfg;
  bool e_json = false;
  auto* exp = app.add_subcommand("experiment", "run a seeded experiment and write traces");
  exp->add_option("--name", ecfg.name, "experiment name")
      ->required()
      ->check(CLI::IsMember(experiment_names()));
  exp->add_option("--seed", ecfg.seed, "base seed (trial t uses seed + t)");
  exp->add_option("--trials", ecfg.trials, "number of trials");
  exp->add_option("--scale", ecfg.scale, "dimension scale factor");
  exp->add_option("--out", ecfg.out_dir, "output directory")->required();
  exp->add_option("--max-iter", ecfg.max_iterations, "iteration cap per run");
  exp->add_flag("--json", e_json, "print a JSON summary");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitInvalid;
  }

  try {
    if (*solve) return cmd_solve(solve_o);
    if (*sim) return cmd_simulate(sim_o);
    if (*val) return cmd_validate(v_params, v_problem, v_tol, v_json, v_table);
    if (*des) return cmd_design(d_spec, d_out, d_sdpa, d_json);
    if (*exp) return cmd_experiment(ecfg, e_json);
  } catch (const SchemaError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  }
  return kExitInvalid;
}
