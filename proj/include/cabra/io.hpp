#ifndef CABRA_IO_HPP_
#define CABRA_IO_HPP_

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cabra/core.hpp"
#include "cabra/decentral.hpp"
#include "cabra/design.hpp"
#include "cabra/families.hpp"
#include "cabra/matparams.hpp"
#include "cabra/operators.hpp"
#include "cabra/solver.hpp"
#include "cabra/structure.hpp"

// Files are 1-based for operator, block and position indices.

namespace cabra {

using json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;

inline std::string fmt_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// Dense values

inline json to_json(const Vec& v) {
  json a = json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

inline json to_json(const Mat& m) {
  json a = json::array();
  for (Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    a.push_back(row);
  }
  return a;
}

namespace detail {

inline const json& at(const json& j, const std::string& key, const std::string& where) {
  if (!j.is_object()) throw SchemaError(where + ": expected an object");
  auto it = j.find(key);
  if (it == j.end()) throw SchemaError(where + ": missing field '" + key + "'");
  return *it;
}

inline double num(const json& j, const std::string& where) {
  if (!j.is_number()) throw SchemaError(where + ": expected a number");
  return j.get<double>();
}

inline int integer(const json& j, const std::string& where) {
  if (!j.is_number_integer()) throw SchemaError(where + ": expected an integer");
  return j.get<int>();
}

inline std::vector<int> int_list(const json& j, const std::string& where, int base = 0) {
  if (!j.is_array()) throw SchemaError(where + ": expected an array");
  std::vector<int> out;
  for (std::size_t q = 0; q < j.size(); ++q)
    out.push_back(integer(j[q], where + "[" + std::to_string(q) + "]") - base);
  return out;
}

}  // namespace detail

inline Vec vec_from_json(const json& j, const std::string& where) {
  if (!j.is_array()) throw SchemaError(where + ": expected an array of numbers");
  Vec v(static_cast<Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i)
    v(static_cast<Index>(i)) = detail::num(j[i], where + "[" + std::to_string(i) + "]");
  return v;
}

/// Rows of numbers; `cols` fixes the width of an empty matrix.
inline Mat mat_from_json(const json& j, const std::string& where, Index cols = 0) {
  if (!j.is_array()) throw SchemaError(where + ": expected an array of rows");
  const Index r = static_cast<Index>(j.size());
  if (r == 0) return Mat(0, cols);
  if (!j[0].is_array()) throw SchemaError(where + ": expected an array of rows");
  const Index c = static_cast<Index>(j[0].size());
  Mat m(r, c);
  for (Index a = 0; a < r; ++a) {
    const auto& row = j[static_cast<std::size_t>(a)];
    if (!row.is_array() || static_cast<Index>(row.size()) != c)
      throw SchemaError(where + ": row " + std::to_string(a + 1) + " has the wrong length");
    for (Index b = 0; b < c; ++b)
      m(a, b) = detail::num(row[static_cast<std::size_t>(b)], where);
  }
  return m;
}

inline void check_schema(const json& j, const std::string& what) {
  if (!j.is_object()) throw SchemaError(what + ": top level must be an object");
  auto it = j.find("schema_version");
  if (it == j.end()) throw SchemaError(what + ": missing schema_version");
  if (!it->is_number_integer() || it->get<int>() != kSchemaVersion)
    throw SchemaError(what + ": unsupported schema_version");
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw SchemaError(path + ": " + e.what());
  }
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << text;
  if (!out) throw IoError("write failed for " + path);
}

inline void write_json_file(const std::string& path, const json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Structure

inline json structure_to_json(const CouplingStructure& cs) {
  auto one_based = [](const std::vector<std::vector<int>>& sets) {
    json a = json::array();
    for (const auto& s : sets) {
      json row = json::array();
      for (int k : s) row.push_back(k + 1);
      a.push_back(row);
    }
    return a;
  };
  json j;
  j["dims"] = cs.dims;
  j["KA"] = one_based(cs.KA);
  j["KB"] = one_based(cs.KB);
  json is = json::array();
  for (int i : cs.istar) is.push_back(i + 1);
  j["istar"] = is;
  return j;
}

inline CouplingStructure structure_from_json(const json& j) {
  const std::string w = "structure";
  std::vector<int> dims = detail::int_list(detail::at(j, "dims", w), w + ".dims");
  auto sets = [&](const char* key) {
    std::vector<std::vector<int>> out;
    if (!j.contains(key)) return out;
    const json& a = j.at(key);
    if (!a.is_array()) throw SchemaError(w + "." + key + ": expected an array");
    for (std::size_t q = 0; q < a.size(); ++q)
      out.push_back(detail::int_list(a[q], w + "." + key + "[" + std::to_string(q) + "]", 1));
    return out;
  };
  auto KA = sets("KA");
  auto KB = sets("KB");
  for (const auto& s : KA)
    for (int k : s)
      if (k < 0 || k >= static_cast<int>(dims.size()))
        throw SchemaError(w + ".KA: block index out of range");
  for (const auto& s : KB)
    for (int k : s)
      if (k < 0 || k >= static_cast<int>(dims.size()))
        throw SchemaError(w + ".KB: block index out of range");
  std::optional<std::vector<int>> istar;
  if (j.contains("istar")) istar = detail::int_list(j.at("istar"), w + ".istar", 1);
  return build_structure(KA, KB, dims, istar);
}

// ---------------------------------------------------------------------------
// Parameters

inline json block_to_json(const BlockParams& b) {
  json j;
  j["Z"] = to_json(b.Z);
  j["W"] = to_json(b.W);
  j["K"] = to_json(b.K);
  j["Q"] = to_json(b.Q);
  j["beta"] = to_json(b.beta);
  return j;
}

inline json params_to_json(const ParamSet& ps) {
  json j;
  j["schema_version"] = kSchemaVersion;
  json blocks = json::array();
  for (const auto& b : ps.blocks) blocks.push_back(block_to_json(b));
  j["blocks"] = blocks;
  return j;
}

/// Raw matrices of one block, before derivation.
struct RawBlock {
  Mat Z, W, K, Q;
  Vec beta;
};

inline RawBlock raw_block_from_json(const json& j, int k) {
  const std::string w = "blocks[" + std::to_string(k + 1) + "]";
  RawBlock r;
  r.Z = mat_from_json(detail::at(j, "Z", w), w + ".Z");
  const Index n = r.Z.rows();
  r.W = j.contains("W") ? mat_from_json(j.at("W"), w + ".W") : r.Z;
  r.K = j.contains("K") ? mat_from_json(j.at("K"), w + ".K", n) : Mat(0, n);
  const Index m = r.K.rows();
  r.Q = j.contains("Q") ? mat_from_json(j.at("Q"), w + ".Q") : Mat(n, 0);
  if (r.Q.rows() == 0 && m == 0) r.Q = Mat(n, 0);
  r.beta = j.contains("beta") ? vec_from_json(j.at("beta"), w + ".beta") : Vec::Ones(m);
  return r;
}

inline std::vector<RawBlock> raw_params_from_json(const json& j) {
  check_schema(j, "params");
  const json& bl = detail::at(j, "blocks", "params");
  if (!bl.is_array()) throw SchemaError("params.blocks: expected an array");
  std::vector<RawBlock> out;
  for (std::size_t k = 0; k < bl.size(); ++k)
    out.push_back(raw_block_from_json(bl[k], static_cast<int>(k)));
  return out;
}

inline ParamSet params_from_raw(const std::vector<RawBlock>& raw) {
  ParamSet ps;
  for (std::size_t k = 0; k < raw.size(); ++k) {
    const auto& r = raw[k];
    ps.blocks.push_back(derive_block(r.Z, r.W, r.K, r.Q, r.beta, static_cast<int>(k)));
  }
  refresh_dinv(ps);
  return ps;
}

// ---------------------------------------------------------------------------
// Operators

inline std::shared_ptr<MonotoneOp> monotone_from_json(const json& j, Index dim,
                                                      const std::string& w) {
  const std::string type = detail::at(j, "type", w).get<std::string>();
  if (type == "zero") return std::make_shared<ZeroMonotone>(dim);
  if (type == "nonnegative") return std::make_shared<NonnegativeCone>(dim);
  if (type == "halfspace") {
    Vec c = vec_from_json(detail::at(j, "c", w), w + ".c");
    double v = detail::num(detail::at(j, "v", w), w + ".v");
    const std::string sense = j.value("sense", std::string("le"));
    if (sense == "ge") {
      c = -c;
      v = -v;
    } else if (sense != "le") {
      throw SchemaError(w + ".sense: expected 'le' or 'ge'");
    }
    return std::make_shared<HalfspaceNormalCone>(c, v);
  }
  if (type == "affine")
    return std::make_shared<AffineMonotone>(mat_from_json(detail::at(j, "H", w), w + ".H"),
                                            vec_from_json(detail::at(j, "h", w), w + ".h"));
  throw SchemaError(w + ".type: unknown monotone operator '" + type + "'");
}

inline std::shared_ptr<CocoerciveOp> cocoercive_from_json(const json& j,
                                                          const std::string& w) {
  const std::string type = detail::at(j, "type", w).get<std::string>();
  if (type == "affine")
    return std::make_shared<AffineCocoercive>(mat_from_json(detail::at(j, "H", w), w + ".H"),
                                              vec_from_json(detail::at(j, "h", w), w + ".h"));
  if (type == "wta")
    return std::make_shared<WtaGradient>(detail::num(detail::at(j, "a", w), w + ".a"),
                                         vec_from_json(detail::at(j, "q", w), w + ".q"));
  throw SchemaError(w + ".type: unknown cocoercive operator '" + type + "'");
}

inline OperatorBank operators_from_json(const json& j, const CouplingStructure& cs) {
  OperatorBank bank;
  const json& A = detail::at(j, "A", "operators");
  if (!A.is_array() || static_cast<int>(A.size()) != cs.n)
    throw SchemaError("operators.A: expected " + std::to_string(cs.n) + " entries");
  for (int i = 0; i < cs.n; ++i)
    bank.A.push_back(monotone_from_json(A[i], cs.hx_op_size(i),
                                        "operators.A[" + std::to_string(i + 1) + "]"));
  if (cs.m > 0) {
    const json& B = detail::at(j, "B", "operators");
    if (!B.is_array() || static_cast<int>(B.size()) != cs.m)
      throw SchemaError("operators.B: expected " + std::to_string(cs.m) + " entries");
    for (int q = 0; q < cs.m; ++q)
      bank.B.push_back(cocoercive_from_json(B[q], "operators.B[" + std::to_string(q + 1) + "]"));
  }
  check_bank(cs, bank);
  return bank;
}

// ---------------------------------------------------------------------------
// Problem files

struct ProblemFile {
  std::string name;
  CouplingStructure cs;
  OperatorBank bank;
  std::optional<ParamSet> params;
  std::optional<std::vector<RawBlock>> raw_params;
  SolverConfig solver;
};

inline Mode mode_from_string(const std::string& s) {
  if (s == "v") return Mode::V;
  if (s == "z") return Mode::Z;
  throw SchemaError("mode must be 'v' or 'z', got '" + s + "'");
}

inline ParamSet params_by_strategy(const CouplingStructure& cs, const std::string& s) {
  ParamSet ps;
  if (s == "uniform") {
    for (int k = 0; k < cs.p; ++k) {
      if (cs.mk(k) > 0)
        throw SchemaError("params_strategy 'uniform' needs m_k = 0 on every block");
      auto [Z, W] = uniform_family(cs.nk(k));
      ps.blocks.push_back(derive_block(Z, W, Mat(0, cs.nk(k)), Mat(cs.nk(k), 0), Vec(0), k));
    }
  } else if (s == "endpoint") {
    for (int k = 0; k < cs.p; ++k)
      ps.blocks.push_back(endpoint_family(cs.nk(k), Vec::Ones(cs.mk(k))));
  } else {
    throw SchemaError("unknown params_strategy '" + s + "'");
  }
  refresh_dinv(ps);
  return ps;
}

inline void solver_from_json(const json& j, SolverConfig& cfg) {
  if (j.contains("alpha")) cfg.alpha = detail::num(j.at("alpha"), "solver.alpha");
  if (j.contains("gamma")) cfg.gamma.gamma = detail::num(j.at("gamma"), "solver.gamma");
  if (j.contains("max_iterations"))
    cfg.max_iterations = detail::integer(j.at("max_iterations"), "solver.max_iterations");
  if (j.contains("tol")) cfg.tol = detail::num(j.at("tol"), "solver.tol");
  if (j.contains("mode")) cfg.mode = mode_from_string(j.at("mode").get<std::string>());
}

/// Parameters are taken inline ("params"), from a sibling file
/// ("params_file", relative to the problem file) or from a closed form
/// ("params_strategy": "uniform" | "endpoint").
inline ProblemFile load_problem(const std::string& path) {
  json j = read_json_file(path);
  try {
    check_schema(j, path);
    ProblemFile pf;
    pf.name = j.value("name", std::string());
    pf.cs = structure_from_json(detail::at(j, "structure", path));
    pf.bank = operators_from_json(detail::at(j, "operators", path), pf.cs);
    if (j.contains("params")) {
      json pj = j.at("params");
      if (!pj.contains("schema_version")) pj["schema_version"] = kSchemaVersion;
      pf.raw_params = raw_params_from_json(pj);
    } else if (j.contains("params_file")) {
      auto base = std::filesystem::path(path).parent_path();
      auto pp = base / j.at("params_file").get<std::string>();
      pf.raw_params = raw_params_from_json(read_json_file(pp.string()));
    } else if (j.contains("params_strategy")) {
      pf.params = params_by_strategy(pf.cs, j.at("params_strategy").get<std::string>());
    }
    if (j.contains("solver")) solver_from_json(j.at("solver"), pf.solver);
    return pf;
  } catch (const json::exception& e) {
    throw SchemaError(path + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Design specs

inline Objective objective_from_string(const std::string& s) {
  if (s == "feasibility") return Objective::Feasibility;
  if (s == "max_eig") return Objective::MaxEigZ;
  if (s == "diag_match") return Objective::DiagMatch;
  throw SchemaError("objective must be feasibility, max_eig or diag_match");
}

/// Either {"preset": "block_parallel"} or an explicit spec with 1-based
/// cutoff positions and zero pairs.
inline DesignSpec design_spec_from_json(const json& j) {
  check_schema(j, "design spec");
  try {
    if (j.contains("preset")) {
      const std::string p = j.at("preset").get<std::string>();
      if (p != "block_parallel") throw SchemaError("unknown design preset '" + p + "'");
      DesignSpec s = block_parallel_spec();
      if (j.contains("objective")) s.objective = objective_from_string(j.at("objective"));
      return s;
    }
    const std::string w = "design spec";
    const int n = detail::integer(detail::at(j, "n", w), w + ".n");
    const int m = j.contains("m") ? detail::integer(j.at("m"), w + ".m") : 0;
    Vec beta = j.contains("beta") ? vec_from_json(j.at("beta"), w + ".beta") : Vec::Ones(m);
    const double c = j.contains("c") ? detail::num(j.at("c"), w + ".c")
                                     : 2.0 * (1.0 - std::cos(M_PI / n));
    DesignSpec s = DesignSpec::make(n, m, beta, c);
    if (j.contains("objective")) s.objective = objective_from_string(j.at("objective"));
    s.w_equals_z = j.value("w_equals_z", true);
    if (j.contains("cutoffs")) s.set_cutoffs(detail::int_list(j.at("cutoffs"), w + ".cutoffs", 1));
    auto pairs = [&](const char* key, bool zmat) {
      if (!j.contains(key)) return;
      for (const auto& pr : j.at(key)) {
        auto ab = detail::int_list(pr, w + "." + key, 1);
        if (ab.size() != 2 || ab[0] < 0 || ab[1] < 0 || ab[0] >= n || ab[1] >= n)
          throw SchemaError(w + "." + key + ": expected pairs of indices in 1.." +
                            std::to_string(n));
        if (zmat)
          s.forbid_z(ab[0], ab[1]);
        else
          s.forbid_w(ab[0], ab[1]);
      }
    };
    pairs("z_zero", true);
    pairs("w_zero", false);
    if (j.contains("dA")) s.dA = vec_from_json(j.at("dA"), w + ".dA");
    if (j.contains("dB")) s.dB = vec_from_json(j.at("dB"), w + ".dB");
    if (j.contains("weight")) s.weight = detail::num(j.at("weight"), w + ".weight");
    if (j.contains("znorm")) {
      const std::string zn = j.at("znorm").get<std::string>();
      if (zn == "spectral") s.znorm = NormKind::Spectral;
      else if (zn == "frobenius") s.znorm = NormKind::Frobenius;
      else throw SchemaError(w + ".znorm: expected spectral or frobenius");
    }
    return s;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("design spec: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// CSV output

inline std::string opt_cell(const std::optional<double>& v) {
  return v ? fmt_g17(*v) : std::string();
}

inline std::string trace_csv(const std::vector<TraceRow>& trace) {
  std::ostringstream os;
  os << "iter,fp_residual,consensus_residual,inclusion_residual,objective_gap,"
        "violation,elapsed_s\n";
  for (const auto& r : trace)
    os << r.iter << "," << fmt_g17(r.fp_residual) << "," << fmt_g17(r.consensus_residual)
       << "," << fmt_g17(r.inclusion_residual) << "," << opt_cell(r.objective_gap) << ","
       << opt_cell(r.violation) << "," << opt_cell(r.elapsed_s) << "\n";
  return os.str();
}

inline std::string message_log_csv(const MessageLog& log) {
  std::ostringstream os;
  os << "iter,sender,receiver,kind,block,scalars\n";
  for (const auto& e : log.entries)
    os << e.iter << "," << e.sender << "," << e.receiver << "," << e.kind << "," << e.block
       << "," << e.scalars << "\n";
  return os.str();
}

inline json validation_to_json(const ValidationReport& rep) {
  json j;
  j["ok"] = rep.ok();
  json f = json::array();
  for (const auto& e : rep.failures()) {
    json x;
    x["block"] = e.block + 1;
    x["check"] = e.id;
    x["violation"] = e.violation;
    x["tol"] = e.tol;
    f.push_back(x);
  }
  j["failures"] = f;
  return j;
}

}  // namespace cabra

#endif  // CABRA_IO_HPP_
