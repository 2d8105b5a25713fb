#ifndef CABRA_DESIGN_HPP_
#define CABRA_DESIGN_HPP_

#include <cmath>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "cabra/core.hpp"
#include "cabra/families.hpp"
#include "cabra/matparams.hpp"

namespace cabra {

enum class Objective { Feasibility, MaxEigZ, DiagMatch };
enum class NormKind { Spectral, Frobenius };

inline const char* objective_name(Objective o) {
  switch (o) {
    case Objective::Feasibility: return "feasibility";
    case Objective::MaxEigZ: return "lambda_max";
    case Objective::DiagMatch: return "diag_match";
  }
  return "?";
}

/// Per-block design problem for (Z, W, K, Q).
struct DesignSpec {
  int n = 2;
  int m = 0;
  Vec beta;
  double c = 1.0;
  Objective objective = Objective::Feasibility;
  bool w_equals_z = true;
  BoolMat z_zero;     // forced zeros of Z (off-diagonal, symmetric)
  BoolMat w_zero;     // forced zeros of W
  BoolMat k_allowed;  // m x n support of K
  BoolMat q_allowed;  // n x m support of Q
  // Diagonal-match objective ||diag(Z) - dA - Q dB||_2 + weight ||Z||.
  Vec dA, dB;
  double weight = 0.1;
  NormKind znorm = NormKind::Spectral;

  /// All Z/W entries free; cutoff 0 for every cocoercive row.
  static DesignSpec make(int n, int m, Vec beta, double c) {
    DesignSpec s;
    s.n = n;
    s.m = m;
    s.beta = beta.size() ? beta : Vec::Ones(m);
    s.c = c;
    s.z_zero = BoolMat::Constant(n, n, false);
    s.w_zero = BoolMat::Constant(n, n, false);
    s.set_cutoffs(std::vector<int>(m, 0));
    return s;
  }

  /// K row t supported on positions <= cut[t], Q column t on positions > cut[t].
  void set_cutoffs(const std::vector<int>& cut) {
    if (static_cast<int>(cut.size()) != m)
      throw ShapeMismatch("set_cutoffs: one cutoff per cocoercive row required");
    k_allowed = BoolMat::Constant(m, n, false);
    q_allowed = BoolMat::Constant(n, m, false);
    for (int t = 0; t < m; ++t)
      for (int s = 0; s < n; ++s) {
        k_allowed(t, s) = s <= cut[t];
        q_allowed(s, t) = s > cut[t];
      }
  }

  void forbid_z(int a, int b) { z_zero(a, b) = z_zero(b, a) = true; }
  void forbid_w(int a, int b) { w_zero(a, b) = w_zero(b, a) = true; }

  void check() const {
    if (n < 2) throw InvalidConfig("design needs n >= 2");
    if (m < 0 || beta.size() != m) throw ShapeMismatch("design: beta must have m entries");
    for (int t = 0; t < m; ++t)
      if (!(beta(t) > 0.0)) throw InvalidConfig("design: beta must be positive");
    if (!(c > 0.0)) throw InvalidConfig("design: connectivity c must be positive");
    if (z_zero.rows() != n || z_zero.cols() != n || w_zero.rows() != n ||
        w_zero.cols() != n || k_allowed.rows() != m || k_allowed.cols() != n ||
        q_allowed.rows() != n || q_allowed.cols() != m)
      throw ShapeMismatch("design: pattern sizes do not match n, m");
    for (int s = 0; s < n; ++s)
      if (z_zero(s, s) || w_zero(s, s))
        throw PatternConflict("design: diagonal entries cannot be forced to zero");
    for (int t = 0; t < m; ++t) {
      int last_k = -1, first_q = n;
      for (int s = 0; s < n; ++s) {
        if (k_allowed(t, s)) last_k = s;
        if (q_allowed(s, t) && first_q == n) first_q = s;
      }
      if (last_k < 0)
        throw PatternConflict("design: K row " + std::to_string(t + 1) +
                              " is fully zero, K 1 = 1 is impossible");
      if (first_q == n)
        throw PatternConflict("design: Q column " + std::to_string(t + 1) +
                              " is fully zero, Q^T 1 = 1 is impossible");
      for (int s = 0; s < n; ++s)
        if (q_allowed(s, t) && s <= last_k)
          throw PatternConflict("design: row " + std::to_string(t + 1) +
                                " lets K and Q overlap, violating the triangle condition");
    }
    if (objective == Objective::DiagMatch && (dA.size() != n || dB.size() != m))
      throw ShapeMismatch("design: diagonal-match targets need dA (n) and dB (m)");
  }

  BoolMat w_zero_effective() const {
    if (!w_equals_z) return w_zero;
    BoolMat u(n, n);
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) u(a, b) = z_zero(a, b) || w_zero(a, b);
    return u;
  }
};

/// Six operators in three pairs, two cocoercive operators reading pair 1
/// and writing pair 3.
inline DesignSpec block_parallel_spec(int n = 6, int m = 2) {
  if (n != 6) throw InvalidConfig("block_parallel_spec is defined for n = 6");
  const double c = 2.0 * (1.0 - std::cos(M_PI / n));
  DesignSpec s = DesignSpec::make(n, m, Vec::Ones(m), c);
  s.w_equals_z = false;
  s.forbid_z(0, 1);
  s.forbid_z(2, 3);
  s.forbid_z(4, 5);
  for (int a : {0, 1})
    for (int b : {4, 5}) s.forbid_w(a, b);
  s.k_allowed = BoolMat::Constant(m, n, false);
  s.q_allowed = BoolMat::Constant(n, m, false);
  for (int t = 0; t < m; ++t) {
    for (int col = 0; col < 2; ++col) s.k_allowed(t, col) = true;
    for (int row = 3; row < n; ++row) s.q_allowed(row, t) = true;
  }
  return s;
}

inline double check_fiedler(const Mat& W) { return linalg::fiedler(W); }

// ---------------------------------------------------------------------------
// SDP in variable-vector form.

struct VarMap {
  Eigen::MatrixXi z, w, k, q;  // variable index per entry, -1 when fixed zero
  int t0 = -1;                 // first epigraph scalar
  int nt = 0;
  int size = 0;
};

/// A(theta) = C + sum_a theta_a B_a, with B_a given by symmetric entries.
struct PsdBlock {
  std::string name;
  int size = 0;
  Mat C;
  std::vector<std::tuple<int, int, int, double>> coeffs;  // (var, r, c) r <= c
  Vec null;  // known null vector of A(theta) on the affine set, or empty

  Mat eval(const Vec& theta) const {
    Mat A = C;
    for (const auto& [a, r, c, v] : coeffs) {
      A(r, c) += theta(a) * v;
      if (r != c) A(c, r) += theta(a) * v;
    }
    return A;
  }
};

struct SdpProblem {
  DesignSpec spec;
  VarMap vars;
  Vec cost;
  Mat Aeq;
  Vec beq;
  std::vector<PsdBlock> blocks;
  std::vector<std::string> eq_names;
};

namespace detail {

inline VarMap make_vars(const DesignSpec& s) {
  VarMap vm;
  int idx = 0;
  vm.z = Eigen::MatrixXi::Constant(s.n, s.n, -1);
  for (int c = 0; c < s.n; ++c)
    for (int r = c; r < s.n; ++r)
      if (!s.z_zero(r, c)) vm.z(r, c) = vm.z(c, r) = idx++;
  if (s.w_equals_z) {
    vm.w = vm.z;
    const BoolMat wz = s.w_zero_effective();
    for (int r = 0; r < s.n; ++r)
      for (int c = 0; c < s.n; ++c)
        if (wz(r, c)) vm.w(r, c) = -1;
    // W = Z requires Z to carry the W zeros as well.
    for (int r = 0; r < s.n; ++r)
      for (int c = 0; c < s.n; ++c)
        if (wz(r, c)) vm.z(r, c) = -1;
  } else {
    vm.w = Eigen::MatrixXi::Constant(s.n, s.n, -1);
    for (int c = 0; c < s.n; ++c)
      for (int r = c; r < s.n; ++r)
        if (!s.w_zero(r, c)) vm.w(r, c) = vm.w(c, r) = idx++;
  }
  vm.k = Eigen::MatrixXi::Constant(s.m, s.n, -1);
  for (int t = 0; t < s.m; ++t)
    for (int c = 0; c < s.n; ++c)
      if (s.k_allowed(t, c)) vm.k(t, c) = idx++;
  vm.q = Eigen::MatrixXi::Constant(s.n, s.m, -1);
  for (int r = 0; r < s.n; ++r)
    for (int t = 0; t < s.m; ++t)
      if (s.q_allowed(r, t)) vm.q(r, t) = idx++;
  vm.t0 = idx;
  vm.nt = s.objective == Objective::MaxEigZ ? 1
          : s.objective == Objective::DiagMatch ? 2
                                                : 0;
  vm.size = idx + vm.nt;
  return vm;
}

inline Mat orth_complement(const Vec& u) {
  const Index n = u.size();
  Eigen::HouseholderQR<Mat> qr(u.normalized());
  Mat Qm = qr.householderQ() * Mat::Identity(n, n);
  return Qm.rightCols(n - 1);
}

}  // namespace detail

/// Builds the constraint set for one block design.
inline SdpProblem build_sdp(const DesignSpec& spec) {
  spec.check();
  SdpProblem P;
  P.spec = spec;
  P.vars = detail::make_vars(spec);
  const auto& vm = P.vars;
  const int n = spec.n, m = spec.m;
  P.cost = Vec::Zero(vm.size);

  // Equalities.
  std::vector<Vec> rows;
  std::vector<double> rhs;
  auto add_eq = [&](Vec a, double b, std::string name) {
    rows.push_back(std::move(a));
    rhs.push_back(b);
    P.eq_names.push_back(std::move(name));
  };
  for (int r = 0; r < n; ++r) {
    Vec a = Vec::Zero(vm.size);
    for (int c = 0; c < n; ++c)
      if (vm.z(r, c) >= 0) a(vm.z(r, c)) += 1.0;
    add_eq(a, 0.0, "Z1_" + std::to_string(r + 1));
  }
  if (!spec.w_equals_z)
    for (int r = 0; r < n; ++r) {
      Vec a = Vec::Zero(vm.size);
      for (int c = 0; c < n; ++c)
        if (vm.w(r, c) >= 0) a(vm.w(r, c)) += 1.0;
      add_eq(a, 0.0, "W1_" + std::to_string(r + 1));
    }
  for (int t = 0; t < m; ++t) {
    Vec a = Vec::Zero(vm.size);
    for (int c = 0; c < n; ++c)
      if (vm.k(t, c) >= 0) a(vm.k(t, c)) = 1.0;
    add_eq(a, 1.0, "K1_" + std::to_string(t + 1));
  }
  for (int t = 0; t < m; ++t) {
    Vec a = Vec::Zero(vm.size);
    for (int r = 0; r < n; ++r)
      if (vm.q(r, t) >= 0) a(vm.q(r, t)) = 1.0;
    add_eq(a, 1.0, "Qt1_" + std::to_string(t + 1));
  }
  P.Aeq.resize(rows.size(), vm.size);
  P.beq.resize(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    P.Aeq.row(i) = rows[i].transpose();
    P.beq(i) = rhs[i];
  }

  auto add_sym = [](PsdBlock& b, const Eigen::MatrixXi& idx, int off, double sign) {
    for (int c = 0; c < idx.cols(); ++c)
      for (int r = 0; r <= c; ++r)
        if (idx(r, c) >= 0) b.coeffs.emplace_back(idx(r, c), off + r, off + c, sign);
  };
  const Vec ones_n = Vec::Ones(n);

  if (!spec.w_equals_z) {
    PsdBlock b;
    b.name = "Z-W";
    b.size = n;
    b.C = Mat::Zero(n, n);
    add_sym(b, vm.z, 0, 1.0);
    add_sym(b, vm.w, 0, -1.0);
    b.null = ones_n;
    P.blocks.push_back(std::move(b));
  }
  if (m > 0) {
    PsdBlock b;
    b.name = "schur";
    b.size = n + m;
    b.C = Mat::Zero(n + m, n + m);
    for (int t = 0; t < m; ++t) b.C(n + t, n + t) = spec.beta(t);
    add_sym(b, vm.z, 0, 1.0);
    // off-diagonal block (rows 0..n-1, cols n..n+m-1) = Q - K^T
    for (int r = 0; r < n; ++r)
      for (int t = 0; t < m; ++t) {
        if (vm.q(r, t) >= 0) b.coeffs.emplace_back(vm.q(r, t), r, n + t, 1.0);
        if (vm.k(t, r) >= 0) b.coeffs.emplace_back(vm.k(t, r), r, n + t, -1.0);
      }
    b.null = Vec::Zero(n + m);
    b.null.head(n).setOnes();
    P.blocks.push_back(std::move(b));
  }
  {
    PsdBlock b;
    b.name = "fiedler";
    b.size = n;
    b.C = (spec.c / n) * Mat::Ones(n, n) - spec.c * Mat::Identity(n, n);
    add_sym(b, vm.w, 0, 1.0);
    b.null = ones_n;
    P.blocks.push_back(std::move(b));
  }
  if (spec.objective == Objective::MaxEigZ) {
    PsdBlock b;
    b.name = "lambda_max";
    b.size = n;
    b.C = Mat::Zero(n, n);
    for (int r = 0; r < n; ++r) b.coeffs.emplace_back(vm.t0, r, r, 1.0);
    add_sym(b, vm.z, 0, -1.0);
    P.blocks.push_back(std::move(b));
    P.cost(vm.t0) = 1.0;
  } else if (spec.objective == Objective::DiagMatch) {
    const int t1 = vm.t0, t2 = vm.t0 + 1;
    // arrow [[t1, r^T], [r, t1 I]] with r = diag(Z) - dA - Q dB
    PsdBlock a;
    a.name = "residual_norm";
    a.size = n + 1;
    a.C = Mat::Zero(n + 1, n + 1);
    for (int r = 0; r <= n; ++r) a.coeffs.emplace_back(t1, r, r, 1.0);
    for (int r = 0; r < n; ++r) {
      a.C(0, 1 + r) = a.C(1 + r, 0) = -spec.dA(r);
      if (vm.z(r, r) >= 0) a.coeffs.emplace_back(vm.z(r, r), 0, 1 + r, 1.0);
      for (int t = 0; t < m; ++t)
        if (vm.q(r, t) >= 0) a.coeffs.emplace_back(vm.q(r, t), 0, 1 + r, -spec.dB(t));
    }
    P.blocks.push_back(std::move(a));
    PsdBlock b;
    if (spec.znorm == NormKind::Spectral) {
      b.name = "z_norm";
      b.size = n;
      b.C = Mat::Zero(n, n);
      for (int r = 0; r < n; ++r) b.coeffs.emplace_back(t2, r, r, 1.0);
      add_sym(b, vm.z, 0, -1.0);
    } else {
      const int sv = static_cast<int>(linalg::svec_size(n));
      b.name = "z_norm";
      b.size = sv + 1;
      b.C = Mat::Zero(sv + 1, sv + 1);
      for (int r = 0; r <= sv; ++r) b.coeffs.emplace_back(t2, r, r, 1.0);
      const double r2 = std::sqrt(2.0);
      for (int c = 0; c < n; ++c)
        for (int r = c; r < n; ++r)
          if (vm.z(r, c) >= 0)
            b.coeffs.emplace_back(vm.z(r, c), 0,
                                  1 + static_cast<int>(linalg::svec_index(n, r, c)),
                                  r == c ? 1.0 : r2);
    }
    P.blocks.push_back(std::move(b));
    P.cost(t1) = 1.0;
    P.cost(t2) = spec.weight;
  }
  return P;
}

struct DesignMatrices {
  Mat Z, W, K, Q;
};

inline DesignMatrices unpack(const SdpProblem& P, const Vec& theta) {
  const auto& vm = P.vars;
  const int n = P.spec.n, m = P.spec.m;
  DesignMatrices d;
  d.Z = Mat::Zero(n, n);
  d.W = Mat::Zero(n, n);
  d.K = Mat::Zero(m, n);
  d.Q = Mat::Zero(n, m);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) {
      if (vm.z(r, c) >= 0) d.Z(r, c) = theta(vm.z(r, c));
      if (vm.w(r, c) >= 0) d.W(r, c) = theta(vm.w(r, c));
    }
  for (int t = 0; t < m; ++t)
    for (int c = 0; c < n; ++c)
      if (vm.k(t, c) >= 0) d.K(t, c) = theta(vm.k(t, c));
  for (int r = 0; r < n; ++r)
    for (int t = 0; t < m; ++t)
      if (vm.q(r, t) >= 0) d.Q(r, t) = theta(vm.q(r, t));
  return d;
}

/// theta from matrices; entries outside the pattern are dropped.
inline Vec pack(const SdpProblem& P, const DesignMatrices& d) {
  const auto& vm = P.vars;
  Vec th = Vec::Zero(vm.size);
  for (int r = 0; r < P.spec.n; ++r)
    for (int c = 0; c < P.spec.n; ++c) {
      if (vm.w(r, c) >= 0) th(vm.w(r, c)) = d.W(r, c);
      if (vm.z(r, c) >= 0) th(vm.z(r, c)) = d.Z(r, c);
    }
  for (int t = 0; t < P.spec.m; ++t)
    for (int c = 0; c < P.spec.n; ++c)
      if (vm.k(t, c) >= 0) th(vm.k(t, c)) = d.K(t, c);
  for (int r = 0; r < P.spec.n; ++r)
    for (int t = 0; t < P.spec.m; ++t)
      if (vm.q(r, t) >= 0) th(vm.q(r, t)) = d.Q(r, t);
  return th;
}

/// Objective value of a design (exact, not the epigraph variable).
inline double design_objective(const DesignSpec& s, const DesignMatrices& d) {
  switch (s.objective) {
    case Objective::Feasibility: return 0.0;
    case Objective::MaxEigZ: return linalg::lambda_max(d.Z);
    case Objective::DiagMatch: {
      Vec r = d.Z.diagonal() - s.dA - d.Q * s.dB;
      const double zn = s.znorm == NormKind::Spectral ? linalg::lambda_max(d.Z)
                                                      : d.Z.norm();
      return r.norm() + s.weight * zn;
    }
  }
  return 0.0;
}

/// Uniform-like start masked to the allowed pattern.
inline DesignMatrices default_start(const DesignSpec& s) {
  DesignMatrices d;
  const int n = s.n, m = s.m;
  const BoolMat wz = s.w_zero_effective();
  auto laplacian = [&](const BoolMat& zero) {
    Mat L = Mat::Zero(n, n);
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c)
        if (r != c && !zero(r, c)) L(r, c) = -1.0 / (n - 1);
    for (int r = 0; r < n; ++r) L(r, r) = -L.row(r).sum();
    return L;
  };
  d.W = laplacian(wz);
  BoolMat zz = s.w_equals_z ? wz : s.z_zero;
  d.Z = laplacian(zz);
  d.K = Mat::Zero(m, n);
  d.Q = Mat::Zero(n, m);
  for (int t = 0; t < m; ++t) {
    const double kc = s.k_allowed.row(t).count();
    const double qc = s.q_allowed.col(t).count();
    for (int c = 0; c < n; ++c) {
      if (s.k_allowed(t, c)) d.K(t, c) = 1.0 / kc;
      if (s.q_allowed(c, t)) d.Q(c, t) = 1.0 / qc;
    }
  }
  if (m > 0) {
    Mat R = d.Q.transpose() - d.K;
    d.Z += R.transpose() * s.beta.cwiseInverse().asDiagonal() * R;
    if (s.w_equals_z) d.W = d.Z;
  }
  return d;
}

// ---------------------------------------------------------------------------
// Dykstra alternating projections.

struct DykstraOptions {
  double tol = 1e-9;
  int maxit = 50000;
  double margin = 1e-7;   // eigenvalue floor used in the cone projection
  int check_every = 10;
  int plateau_window = 2000;
};

struct DesignResult {
  DesignMatrices mats;
  Vec theta;
  int iterations = 0;
  double residual = 0.0;  // largest negative eigenvalue at exit (0 if none)
  double objective = 0.0;
  int bisection_steps = 0;
};

class DykstraSolver {
 public:
  explicit DykstraSolver(const SdpProblem& P, std::optional<double> level = std::nullopt)
      : P_(P) {
    const int T = P.vars.size;
    blocks_ = P.blocks;
    if (level) add_level(*level);
    // Reduced slack maps.
    Index N = T;
    for (const auto& b : blocks_) {
      Red r;
      r.basis = b.null.size() ? detail::orth_complement(b.null)
                              : Mat(Mat::Identity(b.size, b.size));
      r.dim = r.basis.cols();
      r.off = N;
      const Index sv = linalg::svec_size(r.dim);
      r.g = linalg::svec(r.basis.transpose() * b.C * r.basis);
      r.G = Mat::Zero(sv, T);
      std::vector<Mat> Bs(T, Mat());
      for (const auto& [a, rr, cc, v] : b.coeffs) {
        if (Bs[a].size() == 0) Bs[a] = Mat::Zero(b.size, b.size);
        Bs[a](rr, cc) += v;
        if (rr != cc) Bs[a](cc, rr) += v;
      }
      for (int a = 0; a < T; ++a)
        if (Bs[a].size()) r.G.col(a) = linalg::svec(r.basis.transpose() * Bs[a] * r.basis);
      N += sv;
      red_.push_back(std::move(r));
    }
    N_ = N;
    // E xi = e: equalities on theta, and s_l - G_l theta = g_l.
    const Index R0 = P.Aeq.rows();
    Index R = R0;
    for (const auto& r : red_) R += r.G.rows();
    Mat E = Mat::Zero(R, N);
    E.topLeftCorner(R0, T) = P.Aeq;
    Index row = R0;
    for (const auto& r : red_) {
      const Index sv = r.G.rows();
      E.block(row, 0, sv, T) = -r.G;
      E.block(row, r.off, sv, sv) = Mat::Identity(sv, sv);
      row += sv;
    }
    Mat EEt = E * E.transpose();
    Eigen::SelfAdjointEigenSolver<Mat> es(EEt);
    Vec ev = es.eigenvalues();
    const double cut = 1e-12 * std::max(1.0, ev.cwiseAbs().maxCoeff());
    Vec inv = ev.unaryExpr([cut](double x) { return x > cut ? 1.0 / x : 0.0; });
    Mat pinv = es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
    Ep_ = E.transpose() * pinv;
    Pi_ = Mat::Identity(N, N) - Ep_ * E;
    e_ = Vec::Zero(R);
    e_.head(R0) = P.beq;
    row = R0;
    for (const auto& r : red_) {
      e_.segment(row, r.g.size()) = r.g;
      row += r.g.size();
    }
    xi0_ = Ep_ * e_;
  }

  /// Runs from theta0. Throws Infeasible on plateau or when maxit runs out.
  DesignResult solve(const Vec& theta0, const DykstraOptions& opt) const {
    Vec x = lift(theta0);
    Vec q = Vec::Zero(N_);
    DesignResult res;
    double last_checkpoint = -1.0;
    for (int it = 0; it <= opt.maxit; ++it) {
      Vec y = Pi_ * x + xi0_;
      if (it % opt.check_every == 0 || it == opt.maxit) {
        const double viol = violation(y);
        res.iterations = it;
        res.residual = viol;
        if (viol <= 0.0) {
          res.theta = y.head(P_.vars.size);
          res.mats = unpack(P_, res.theta);
          res.objective = design_objective(P_.spec, res.mats);
          return res;
        }
        if (it > 0 && it % opt.plateau_window == 0) {
          if (last_checkpoint >= 0.0 && viol > 0.99 * last_checkpoint)
            throw Infeasible("design: constraint residual plateaued after " +
                                 std::to_string(it) + " iterations",
                             viol);
          last_checkpoint = viol;
        }
        if (it == opt.maxit) break;
      }
      Vec zz = y + q;
      x = cone_project(zz, opt.margin);
      q = zz - x;
    }
    throw Infeasible("design: no feasible point within " +
                         std::to_string(opt.maxit) + " iterations",
                     res.residual);
  }

  double violation_of(const Vec& theta) const { return violation(Pi_ * lift(theta) + xi0_); }

 private:
  struct Red {
    Mat basis;
    Index dim = 0;
    Index off = 0;
    Mat G;
    Vec g;
  };

  void add_level(double level) {
    PsdBlock b;
    b.name = "level";
    b.size = 1;
    b.C = Mat::Constant(1, 1, level);
    for (int a = 0; a < P_.vars.size; ++a)
      if (P_.cost(a) != 0.0) b.coeffs.emplace_back(a, 0, 0, -P_.cost(a));
    blocks_.push_back(std::move(b));
  }

  Vec lift(const Vec& theta) const {
    Vec x(N_);
    x.head(P_.vars.size) = theta;
    for (const auto& r : red_) x.segment(r.off, r.g.size()) = r.G * theta + r.g;
    return x;
  }

  double violation(const Vec& y) const {
    double worst = 0.0;
    for (const auto& r : red_) {
      Mat S = linalg::smat(y.segment(r.off, r.g.size()), r.dim);
      worst = std::max(worst, -linalg::lambda_min(S));
    }
    return worst;
  }

  Vec cone_project(const Vec& z, double margin) const {
    Vec x = z;
    for (const auto& r : red_) {
      Mat S = linalg::smat(z.segment(r.off, r.g.size()), r.dim);
      Eigen::SelfAdjointEigenSolver<Mat> es(S);
      Vec ev = es.eigenvalues().cwiseMax(margin);
      Mat Sp = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
      x.segment(r.off, r.g.size()) = linalg::svec(Sp);
    }
    return x;
  }

  const SdpProblem& P_;
  std::vector<PsdBlock> blocks_;
  std::vector<Red> red_;
  Index N_ = 0;
  Mat Ep_, Pi_;
  Vec e_, xi0_;
};

namespace detail {

// Epigraph variables set to the exact objective terms plus a cushion.
inline Vec start_theta(const SdpProblem& P, const DesignMatrices& d, double cushion) {
  Vec th = pack(P, d);
  const auto& s = P.spec;
  if (s.objective == Objective::MaxEigZ) {
    th(P.vars.t0) = linalg::lambda_max(d.Z) + cushion;
  } else if (s.objective == Objective::DiagMatch) {
    Vec r = d.Z.diagonal() - s.dA - d.Q * s.dB;
    th(P.vars.t0) = r.norm() + cushion;
    th(P.vars.t0 + 1) = (s.znorm == NormKind::Spectral ? linalg::lambda_max(d.Z)
                                                        : d.Z.norm()) + cushion;
  }
  return th;
}

}  // namespace detail

/// Finds (Z, W, K, Q) satisfying every constraint, ignoring the objective.
inline DesignResult feasibility_solve(const DesignSpec& spec, double tol = 1e-9,
                                      int maxit = 50000,
                                      std::optional<DesignMatrices> start = std::nullopt) {
  DesignSpec fs = spec;
  fs.objective = Objective::Feasibility;
  SdpProblem P = build_sdp(fs);
  DykstraSolver solver(P);
  DykstraOptions opt;
  opt.tol = tol;
  opt.maxit = maxit;
  return solver.solve(pack(P, start ? *start : default_start(fs)), opt);
}

struct DesignOptions {
  double tol = 1e-9;
  int maxit = 50000;
  int bisection_maxit = 20000;
  int max_bisections = 25;
  double rel_gap = 1e-3;
};

/// Feasibility followed by bisection on the objective level.
inline DesignResult design(const DesignSpec& spec, const DesignOptions& o = {}) {
  DesignResult feas = feasibility_solve(spec, o.tol, o.maxit);
  if (spec.objective == Objective::Feasibility) return feas;
  SdpProblem P = build_sdp(spec);
  DesignResult best = feas;
  best.objective = design_objective(spec, feas.mats);
  double hi = best.objective;
  double lo = spec.objective == Objective::MaxEigZ ? spec.c
              : spec.weight * spec.c;
  DykstraOptions opt;
  opt.tol = o.tol;
  opt.maxit = o.bisection_maxit;
  int steps = 0;
  while (steps < o.max_bisections && hi - lo > o.rel_gap * std::max(1.0, std::abs(hi))) {
    const double mid = 0.5 * (lo + hi);
    ++steps;
    try {
      DykstraSolver solver(P, mid);
      DesignResult r = solver.solve(detail::start_theta(P, best.mats, 0.0), opt);
      const double val = design_objective(spec, r.mats);
      if (val < best.objective) {
        best = r;
        best.objective = val;
      }
      hi = std::min(mid, val);
    } catch (const Infeasible&) {
      lo = mid;
    }
  }
  best.bisection_steps = steps;
  return best;
}

/// Turns a design into a validated BlockParams.
inline BlockParams to_block(const DesignSpec& spec, const DesignMatrices& d) {
  Mat W = spec.w_equals_z ? d.Z : d.W;
  return derive_block(d.Z, W, d.K, d.Q, spec.beta);
}

}  // namespace cabra

#endif  // CABRA_DESIGN_HPP_
