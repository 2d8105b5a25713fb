#ifndef CABRA_MATPARAMS_HPP_
#define CABRA_MATPARAMS_HPP_

#include <sstream>
#include <string>
#include <vector>

#include "cabra/core.hpp"
#include "cabra/structure.hpp"

namespace cabra {

/// One block's matrix parameters. K is m x n, Q is n x m; both are empty
/// (zero rows/cols) when the block has no cocoercive participants.
struct BlockParams {
  Mat Z, W, D, L, M, K, Q, U;
  Vec beta;

  Index n() const { return Z.rows(); }
  Index m() const { return K.rows(); }
};

struct ParamSet {
  std::vector<BlockParams> blocks;
  // Cached diagonal inverse per block, filled by derive().
  std::vector<Vec> dinv;
};

namespace detail {

// Factor a PSD W with null(W) = span(1) as W = M^T M, M having n-1 rows.
inline Mat factor_w(const Mat& W) {
  const Index n = W.rows();
  if (n <= 1) return Mat::Zero(0, n);
  Eigen::LDLT<Mat> ldlt(W);
  if (ldlt.info() == Eigen::Success) {
    Vec d = ldlt.vectorD();
    Mat Lt = ldlt.matrixU();  // L^T
    // P W P^T = L D L^T, so W = (sqrt(D) L^T P)^T (sqrt(D) L^T P)
    Mat root = d.cwiseMax(0.0).cwiseSqrt().asDiagonal() * Lt;
    Mat full = root * ldlt.transpositionsP();
    Index drop = 0;
    d.cwiseAbs().minCoeff(&drop);
    Mat M(n - 1, n);
    for (Index r = 0, o = 0; r < n; ++r)
      if (r != drop) M.row(o++) = full.row(r);
    if (linalg::max_abs(Mat(M.transpose() * M - W)) <= 1e-12 * std::max(1.0, linalg::max_abs(W)))
      return M;
  }
  Eigen::SelfAdjointEigenSolver<Mat> es(linalg::symmetrize(W));
  Mat M(n - 1, n);
  for (Index r = 1; r < n; ++r)
    M.row(r - 1) = std::sqrt(std::max(es.eigenvalues()(r), 0.0)) *
                   es.eigenvectors().col(r).transpose();
  return M;
}

}  // namespace detail

/// Completes one block from its chosen matrices.
inline BlockParams derive_block(const Mat& Z, const Mat& W, const Mat& K,
                                const Mat& Q, const Vec& beta, int k = 0,
                                double tol = 1e-8) {
  const Index n = Z.rows();
  if (Z.cols() != n || W.rows() != n || W.cols() != n)
    throw ShapeMismatch("block " + std::to_string(k + 1) +
                        ": Z and W must be square of equal size");
  const Index m = beta.size();
  if (K.rows() != m || (m > 0 && K.cols() != n) || Q.cols() != m ||
      (m > 0 && Q.rows() != n))
    throw ShapeMismatch("block " + std::to_string(k + 1) +
                        ": K must be m x n and Q must be n x m");
  for (Index t = 0; t < m; ++t)
    if (!(beta(t) > 0.0))
      throw InvalidConfig("block " + std::to_string(k + 1) +
                          ": beta must be positive");
  BlockParams b;
  b.Z = linalg::symmetrize(Z);
  b.W = linalg::symmetrize(W);
  const double lw = linalg::lambda_min(b.W);
  if (lw < -tol) throw NotPSD("W", k, lw);
  const double lz = linalg::lambda_min(b.Z - b.W);
  if (lz < -tol) throw NotPSD("Z - W", k, lz);
  if (linalg::max_abs(Vec(b.W * Vec::Ones(n))) > tol)
    throw WrongNullspace(k, "W 1 != 0");
  if (linalg::fiedler(b.W) <= tol)
    throw WrongNullspace(k, "second eigenvalue of W is not positive");
  b.D = b.Z.diagonal().asDiagonal();
  b.L = -linalg::strict_lower(b.Z);
  b.M = detail::factor_w(b.W);
  b.K = m > 0 ? K : Mat::Zero(0, n);
  b.Q = m > 0 ? Q : Mat::Zero(n, 0);
  b.beta = beta;
  if (m > 0) {
    Mat R = b.Q.transpose() - b.K;
    b.U = R.transpose() * beta.cwiseInverse().asDiagonal() * R;
  } else {
    b.U = Mat::Zero(n, n);
  }
  return b;
}

inline void refresh_dinv(ParamSet& ps) {
  ps.dinv.resize(ps.blocks.size());
  for (std::size_t k = 0; k < ps.blocks.size(); ++k)
    ps.dinv[k] = ps.blocks[k].Z.diagonal().cwiseInverse();
}

/// beta holds one entry per cocoercive operator; block k receives
/// (beta_j) for j in J_k.
inline ParamSet derive(const CouplingStructure& cs, const std::vector<Mat>& Z,
                       const std::vector<Mat>& W, const std::vector<Mat>& K,
                       const std::vector<Mat>& Q, const Vec& beta) {
  if (static_cast<int>(Z.size()) != cs.p || static_cast<int>(W.size()) != cs.p ||
      static_cast<int>(K.size()) != cs.p || static_cast<int>(Q.size()) != cs.p)
    throw ShapeMismatch("derive: one Z, W, K, Q per block required");
  if (beta.size() != cs.m)
    throw ShapeMismatch("derive: one beta per cocoercive operator required");
  ParamSet ps;
  for (int k = 0; k < cs.p; ++k) {
    if (Z[k].rows() != cs.nk(k))
      throw ShapeMismatch("block " + std::to_string(k + 1) + ": Z is " +
                          std::to_string(Z[k].rows()) + "x" +
                          std::to_string(Z[k].cols()) + ", expected n_k = " +
                          std::to_string(cs.nk(k)));
    Vec bk(cs.mk(k));
    for (int t = 0; t < cs.mk(k); ++t) bk(t) = beta(cs.Jk[k][t]);
    ps.blocks.push_back(derive_block(Z[k], W[k], K[k], Q[k], bk, k));
  }
  refresh_dinv(ps);
  return ps;
}

// ---------------------------------------------------------------------------
// Validation

struct ValidationEntry {
  int block = 0;
  std::string id;
  bool pass = true;
  double violation = 0.0;
  double tol = 0.0;
};

struct ValidationReport {
  std::vector<ValidationEntry> entries;

  bool ok() const {
    for (const auto& e : entries)
      if (!e.pass) return false;
    return true;
  }
  std::vector<ValidationEntry> failures() const {
    std::vector<ValidationEntry> out;
    for (const auto& e : entries)
      if (!e.pass) out.push_back(e);
    return out;
  }
  std::string table() const {
    std::ostringstream os;
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-6s %-14s %-5s %-12s %s\n", "block", "check",
                  "ok", "violation", "tol");
    os << buf;
    for (const auto& e : entries) {
      std::snprintf(buf, sizeof buf, "%-6d %-14s %-5s %-12.3e %.1e\n",
                    e.block + 1, e.id.c_str(), e.pass ? "yes" : "NO",
                    e.violation, e.tol);
      os << buf;
    }
    return os.str();
  }
};

// Last nonzero column per row of K (-1 if none).
inline std::vector<int> k_last_support(const Mat& K) {
  std::vector<int> out(K.rows(), -1);
  for (Index t = 0; t < K.rows(); ++t)
    for (Index s = 0; s < K.cols(); ++s)
      if (K(t, s) != 0.0) out[t] = static_cast<int>(s);
  return out;
}

// First nonzero row per column of Q (n if none).
inline std::vector<int> q_first_support(const Mat& Q) {
  std::vector<int> out(Q.cols(), static_cast<int>(Q.rows()));
  for (Index t = 0; t < Q.cols(); ++t)
    for (Index s = Q.rows() - 1; s >= 0; --s)
      if (Q(s, t) != 0.0) out[t] = static_cast<int>(s);
  return out;
}

/// Checks one block. cutoffs, when given, holds s^k_j (0-based position in
/// I_k) for each row t of K.
inline void validate_block(const BlockParams& b, int k, double tol,
                           ValidationReport& rep,
                           const std::vector<int>* cutoffs = nullptr) {
  const Index n = b.n();
  const Index m = b.m();
  const Vec one = Vec::Ones(n);
  auto add = [&](const char* id, double viol, double t) {
    rep.entries.push_back({k, id, viol <= t, viol, t});
  };
  auto psd_viol = [](const Mat& a) { return std::max(0.0, -linalg::lambda_min(a)); };

  add("Z_sym", linalg::max_abs(Mat(b.Z - b.Z.transpose())), tol);
  add("W_sym", linalg::max_abs(Mat(b.W - b.W.transpose())), tol);
  add("W_psd", psd_viol(b.W), tol);
  add("Z_succeq_W", psd_viol(b.Z - b.W), tol);
  add("Z_succeq_U", psd_viol(b.Z - b.U), tol);
  add("Z_rowsum", linalg::max_abs(Vec(b.Z * one)), tol);
  add("D_diag", linalg::max_abs(Mat(b.D - Mat(b.Z.diagonal().asDiagonal()))), tol);
  add("L_tri", linalg::max_abs(Mat(b.L + linalg::strict_lower(b.Z))) +
                   linalg::max_abs(Mat(b.L - linalg::strict_lower(b.L))),
      tol);
  {
    const double rowsum = linalg::max_abs(Vec(b.W * one));
    const double l2 = linalg::fiedler(b.W);
    add("W_null", std::max(rowsum, l2 > tol ? 0.0 : tol - l2 + tol), tol);
  }
  add("W_factor",
      b.M.rows() == n - 1 ? linalg::max_abs(Mat(b.M.transpose() * b.M - b.W))
                          : 1.0,
      std::max(tol, 1e-10));
  if (m > 0) {
    Mat R = b.Q.transpose() - b.K;
    Mat U = R.transpose() * b.beta.cwiseInverse().asDiagonal() * R;
    add("U_def", linalg::max_abs(Mat(U - b.U)), tol);
    add("K_rowsum", linalg::max_abs(Vec(b.K * one - Vec::Ones(m))), tol);
    add("Q_colsum",
        linalg::max_abs(Vec(b.Q.transpose() * one - Vec::Ones(m))), tol);
    auto sbar = k_last_support(b.K);
    auto sdot = q_first_support(b.Q);
    int bad = 0;
    for (Index t = 0; t < m; ++t)
      if (!(sbar[t] < sdot[t])) ++bad;
    add("QK_triangle", bad, 0.0);
    if (cutoffs) {
      int badc = 0;
      for (Index t = 0; t < m; ++t) {
        const int s = (*cutoffs)[t];
        if (!(sbar[t] <= s && s < sdot[t])) ++badc;
      }
      add("cutoff", badc, 0.0);
    }
  } else {
    add("U_def", linalg::max_abs(b.U), tol);
  }
  // implied identities
  add("Z_DLL", linalg::max_abs(Mat(b.D - b.L - b.L.transpose() - b.Z)), tol);
  add("DL_sum", std::abs(one.dot((b.D - 2.0 * b.L) * one)), tol);
  add("U_null", linalg::max_abs(Vec(b.U * one)), tol);
  {
    const double l2 = linalg::fiedler(b.Z);
    add("Z_null", std::max(linalg::max_abs(Vec(b.Z * one)),
                           l2 > tol ? 0.0 : tol - l2 + tol),
        tol);
  }
  {
    double v = 1.0;
    if (b.M.rows() == n - 1) {
      v = linalg::max_abs(Vec(b.M * one));
      if (n >= 2) {
        Eigen::JacobiSVD<Mat> svd(b.M);
        const double smin = svd.singularValues().size() ? svd.singularValues().minCoeff() : 0.0;
        if (smin <= tol) v = std::max(v, tol - smin + tol);
      }
    }
    add("M_null", v, tol);
  }
}

inline ValidationReport validate_block(const BlockParams& b, double tol = 1e-8,
                                       const std::vector<int>* cutoffs = nullptr) {
  ValidationReport rep;
  validate_block(b, 0, tol, rep, cutoffs);
  return rep;
}

/// Cutoff positions s^k_j for the rows of K_k, in J_k order.
inline std::vector<int> block_cutoffs(const CouplingStructure& cs, int k) {
  std::vector<int> out(cs.mk(k));
  for (int t = 0; t < cs.mk(k); ++t) {
    const int j = cs.Jk[k][t];
    out[t] = cs.skj[j][cs.slot_B(j, k)];
  }
  return out;
}

inline ValidationReport validate(const CouplingStructure& cs, const ParamSet& ps,
                                 double tol = 1e-8) {
  if (static_cast<int>(ps.blocks.size()) != cs.p)
    throw ShapeMismatch("validate: parameter set has " +
                        std::to_string(ps.blocks.size()) + " blocks, structure has " +
                        std::to_string(cs.p));
  ValidationReport rep;
  for (int k = 0; k < cs.p; ++k) {
    const auto& b = ps.blocks[k];
    if (b.n() != cs.nk(k) || b.m() != cs.mk(k))
      throw ShapeMismatch("validate: block " + std::to_string(k + 1) +
                          " has the wrong size");
    auto cut = block_cutoffs(cs, k);
    validate_block(b, k, tol, rep, &cut);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Lifted applications. A block k of an H_x vector is gathered as a
// d_k x n_k matrix whose column s is copy s (operator I_k[s]).

enum class Which { Z, W, D, Dinv, L, U, M, MT, K, Q };

namespace detail {

inline Mat gather_hx(const CouplingStructure& cs, const Vec& x, int k) {
  const int d = cs.dims[k];
  Mat Y(d, cs.nk(k));
  for (int s = 0; s < cs.nk(k); ++s)
    Y.col(s) = x.segment(cs.hx_off[cs.Ik[k][s]][cs.a_slot[k][s]], d);
  return Y;
}

inline void scatter_hx(const CouplingStructure& cs, const Mat& Y, int k, Vec& x) {
  const int d = cs.dims[k];
  for (int s = 0; s < cs.nk(k); ++s)
    x.segment(cs.hx_off[cs.Ik[k][s]][cs.a_slot[k][s]], d) = Y.col(s);
}

inline Mat gather_bx(const CouplingStructure& cs, const Vec& xb, int k) {
  const int d = cs.dims[k];
  Mat Y(d, cs.mk(k));
  for (int t = 0; t < cs.mk(k); ++t)
    Y.col(t) = xb.segment(cs.bx_off[cs.Jk[k][t]][cs.b_slot[k][t]], d);
  return Y;
}

inline void scatter_bx(const CouplingStructure& cs, const Mat& Y, int k, Vec& xb) {
  const int d = cs.dims[k];
  for (int t = 0; t < cs.mk(k); ++t)
    xb.segment(cs.bx_off[cs.Jk[k][t]][cs.b_slot[k][t]], d) = Y.col(t);
}

inline Mat gather_hz(const CouplingStructure& cs, const Vec& z, int k) {
  const int d = cs.dims[k];
  Mat Y(d, cs.nk(k) - 1);
  for (int r = 0; r < cs.nk(k) - 1; ++r)
    Y.col(r) = z.segment(cs.hz_off[k] + r * d, d);
  return Y;
}

inline void scatter_hz(const CouplingStructure& cs, const Mat& Y, int k, Vec& z) {
  const int d = cs.dims[k];
  for (int r = 0; r < cs.nk(k) - 1; ++r)
    z.segment(cs.hz_off[k] + r * d, d) = Y.col(r);
}

}  // namespace detail

/// Kronecker-lifted, permuted application of a block matrix family.
inline Vec apply_lifted(const CouplingStructure& cs, const ParamSet& ps,
                        Which which, const Vec& v) {
  switch (which) {
    case Which::M: {
      cs.require(Space::Hx, v, "apply_lifted(M_A)");
      Vec out(cs.hz_size);
      for (int k = 0; k < cs.p; ++k)
        detail::scatter_hz(cs, detail::gather_hx(cs, v, k) *
                                   ps.blocks[k].M.transpose(), k, out);
      return out;
    }
    case Which::MT: {
      cs.require(Space::Hz, v, "apply_lifted(M_A^T)");
      Vec out(cs.hx_size);
      for (int k = 0; k < cs.p; ++k)
        detail::scatter_hx(cs, detail::gather_hz(cs, v, k) * ps.blocks[k].M, k,
                           out);
      return out;
    }
    case Which::K: {
      cs.require(Space::Hx, v, "apply_lifted(K_A)");
      Vec out(cs.bx_size);
      for (int k = 0; k < cs.p; ++k)
        if (cs.mk(k) > 0)
          detail::scatter_bx(cs, detail::gather_hx(cs, v, k) *
                                     ps.blocks[k].K.transpose(), k, out);
      return out;
    }
    case Which::Q: {
      cs.require(Space::Bx, v, "apply_lifted(Q_A)");
      Vec out = Vec::Zero(cs.hx_size);
      for (int k = 0; k < cs.p; ++k)
        if (cs.mk(k) > 0)
          detail::scatter_hx(cs, detail::gather_bx(cs, v, k) *
                                     ps.blocks[k].Q.transpose(), k, out);
      return out;
    }
    default:
      break;
  }
  cs.require(Space::Hx, v, "apply_lifted");
  Vec out(cs.hx_size);
  for (int k = 0; k < cs.p; ++k) {
    const auto& b = ps.blocks[k];
    Mat Y = detail::gather_hx(cs, v, k);
    Mat R;
    switch (which) {
      case Which::Z: R = Y * b.Z.transpose(); break;
      case Which::W: R = Y * b.W.transpose(); break;
      case Which::D: R = Y * b.D; break;
      case Which::Dinv: R = Y * b.Z.diagonal().cwiseInverse().asDiagonal(); break;
      case Which::L: R = Y * b.L.transpose(); break;
      case Which::U: R = Y * b.U.transpose(); break;
      default: break;
    }
    detail::scatter_hx(cs, R, k, out);
  }
  return out;
}

/// Block i of 2 L_A x using only operators marked done. Reads of a
/// non-finalized operator with a nonzero coefficient raise DependencyViolation.
inline Vec apply_L_row(const CouplingStructure& cs, const ParamSet& ps,
                       const Vec& x, int i, const std::vector<char>& done) {
  Vec out = Vec::Zero(cs.hx_op_size(i));
  const Index base = cs.hx_op_off[i];
  for (std::size_t o = 0; o < cs.KA[i].size(); ++o) {
    const int k = cs.KA[i][o];
    const int s = cs.s_of[i][o];
    const int d = cs.dims[k];
    const Mat& L = ps.blocks[k].L;
    auto seg = out.segment(cs.hx_off[i][o] - base, d);
    for (int sp = 0; sp < cs.nk(k); ++sp) {
      const double c = L(s, sp);
      if (c == 0.0) continue;
      const int src = cs.Ik[k][sp];
      if (src >= i || !done[src])
        throw DependencyViolation("L row of operator " + std::to_string(i + 1) +
                                  " reads operator " + std::to_string(src + 1));
      seg += 2.0 * c * x.segment(cs.hx_off[src][cs.a_slot[k][sp]], d);
    }
  }
  return out;
}

/// Block j of K_A x using only finalized operators.
inline Vec apply_K_row(const CouplingStructure& cs, const ParamSet& ps,
                       const Vec& x, int j, const std::vector<char>& done) {
  Vec out = Vec::Zero(cs.bx_op_size(j));
  const Index base = cs.bx_op_off[j];
  for (std::size_t o = 0; o < cs.KB[j].size(); ++o) {
    const int k = cs.KB[j][o];
    const int t = cs.t_of[j][o];
    const int d = cs.dims[k];
    const Mat& K = ps.blocks[k].K;
    auto seg = out.segment(cs.bx_off[j][o] - base, d);
    for (int s = 0; s < cs.nk(k); ++s) {
      const double c = K(t, s);
      if (c == 0.0) continue;
      const int src = cs.Ik[k][s];
      if (!done[src])
        throw DependencyViolation("K row of cocoercive operator " +
                                  std::to_string(j + 1) +
                                  " reads unfinished operator " +
                                  std::to_string(src + 1));
      seg += c * x.segment(cs.hx_off[src][cs.a_slot[k][s]], d);
    }
  }
  return out;
}

/// Block i of Q_A u using only cocoercive outputs marked ready.
inline Vec apply_QBK_row(const CouplingStructure& cs, const ParamSet& ps,
                         const Vec& u, int i, const std::vector<char>& ready) {
  Vec out = Vec::Zero(cs.hx_op_size(i));
  const Index base = cs.hx_op_off[i];
  for (std::size_t o = 0; o < cs.KA[i].size(); ++o) {
    const int k = cs.KA[i][o];
    if (cs.mk(k) == 0) continue;
    const int s = cs.s_of[i][o];
    const int d = cs.dims[k];
    const Mat& Q = ps.blocks[k].Q;
    auto seg = out.segment(cs.hx_off[i][o] - base, d);
    for (int t = 0; t < cs.mk(k); ++t) {
      const double c = Q(s, t);
      if (c == 0.0) continue;
      const int j = cs.Jk[k][t];
      if (!ready[j])
        throw DependencyViolation("Q row of operator " + std::to_string(i + 1) +
                                  " reads unevaluated cocoercive operator " +
                                  std::to_string(j + 1));
      seg += c * u.segment(cs.bx_off[j][cs.b_slot[k][t]], d);
    }
  }
  return out;
}

/// Dense matrix of a lifted operator, built column by column; used only by
/// oracles and tests on small instances.
inline Mat dense_lifted(const CouplingStructure& cs, const ParamSet& ps,
                        Which which) {
  Space in = Space::Hx;
  if (which == Which::MT) in = Space::Hz;
  if (which == Which::Q) in = Space::Bx;
  const Index nin = cs.size(in);
  Mat out;
  for (Index c = 0; c < nin; ++c) {
    Vec e = Vec::Zero(nin);
    e(c) = 1.0;
    Vec col = apply_lifted(cs, ps, which, e);
    if (c == 0) out.resize(col.size(), nin);
    out.col(c) = col;
  }
  return out;
}

}  // namespace cabra

#endif  // CABRA_MATPARAMS_HPP_
