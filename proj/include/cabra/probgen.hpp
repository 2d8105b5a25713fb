#ifndef CABRA_PROBGEN_HPP_
#define CABRA_PROBGEN_HPP_

#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "cabra/core.hpp"
#include "cabra/design.hpp"
#include "cabra/families.hpp"
#include "cabra/matparams.hpp"
#include "cabra/operators.hpp"
#include "cabra/solver.hpp"
#include "cabra/structure.hpp"

namespace cabra {

/// One way of running an instance: structure, operators, parameters, form.
struct Strategy {
  std::string name;
  CouplingStructure cs;
  OperatorBank bank;
  ParamSet params;
  Mode mode = Mode::V;
};

struct Instance {
  std::string name;
  unsigned long long seed = 0;
  double alpha = 2.0;
  double gamma = 0.95;
  std::vector<Strategy> strategies;
  // Evaluated on the mean estimate (G_y). Either may be empty.
  std::function<double(const Vec&)> objective;
  std::function<double(const Vec&)> violation;
  std::optional<double> f_ref;
  std::optional<Vec> y_ref;

  const Strategy& strategy(const std::string& n) const {
    for (const auto& s : strategies)
      if (s.name == n) return s;
    throw InvalidConfig("instance " + name + " has no strategy '" + n + "'");
  }

  /// Per-iteration metrics callback for the solver.
  std::function<IterationMetrics(const Vec&, const Vec&)> metrics() const {
    auto obj = objective;
    auto vio = violation;
    auto fr = f_ref;
    return [obj, vio, fr](const Vec& y, const Vec&) {
      IterationMetrics m;
      if (obj && fr) m.objective_gap = obj(y) - *fr;
      if (vio) m.violation = vio(y);
      return m;
    };
  }
};

using Rng = std::mt19937_64;

inline Vec rand_uniform(Rng& rng, Index n, double lo, double hi) {
  std::uniform_real_distribution<double> U(lo, hi);
  Vec v(n);
  for (Index i = 0; i < n; ++i) v(i) = U(rng);
  return v;
}

inline Mat rand_uniform(Rng& rng, Index r, Index c, double lo, double hi) {
  std::uniform_real_distribution<double> U(lo, hi);
  Mat a(r, c);
  for (Index j = 0; j < c; ++j)
    for (Index i = 0; i < r; ++i) a(i, j) = U(rng);
  return a;
}

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the
/// signs of diag(R) folded into Q.
inline Mat haar_orthogonal(Rng& rng, Index n) {
  std::normal_distribution<double> N(0.0, 1.0);
  Mat G(n, n);
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < n; ++i) G(i, j) = N(rng);
  Eigen::HouseholderQR<Mat> qr(G);
  Mat Q = qr.householderQ() * Mat::Identity(n, n);
  Mat R = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Index i = 0; i < n; ++i)
    if (R(i, i) < 0.0) Q.col(i) = -Q.col(i);
  return Q;
}

/// Symmetric matrix with eigenvalues drawn from U[lo, hi], rotated by a
/// Haar orthogonal matrix.
inline Mat random_spectrum_sym(Rng& rng, Index n, double lo, double hi) {
  Vec ev = rand_uniform(rng, n, lo, hi);
  Mat Q = haar_orthogonal(rng, n);
  return linalg::symmetrize(Q * ev.asDiagonal() * Q.transpose());
}

// ---------------------------------------------------------------------------
// Dense selection matrices and a small QP oracle.

inline Mat dense_select_A(const CouplingStructure& cs, int i) {
  Mat R = Mat::Zero(cs.hx_op_size(i), cs.gy_size);
  Index r = 0;
  for (int k : cs.KA[i])
    for (int e = 0; e < cs.dims[k]; ++e) R(r++, cs.gy_off[k] + e) = 1.0;
  return R;
}

inline Mat dense_select_B(const CouplingStructure& cs, int j) {
  Mat R = Mat::Zero(cs.bx_op_size(j), cs.gy_size);
  Index r = 0;
  for (int k : cs.KB[j])
    for (int e = 0; e < cs.dims[k]; ++e) R(r++, cs.gy_off[k] + e) = 1.0;
  return R;
}

struct QpResult {
  Vec y;
  double value = 0.0;
  std::vector<int> active;
  double kkt_residual = 0.0;
};

/// min 0.5 y'Hy - h'y  s.t.  C y <= v, by enumerating active sets in order of
/// size until one satisfies the KKT conditions. Meant for a handful of
/// constraints; H may be singular as long as the problem is bounded.
inline QpResult qp_oracle(const Mat& H, const Vec& h, const Mat& C, const Vec& v,
                          double tol = 1e-9) {
  const Index N = H.rows(), r = C.rows();
  if (r > 24) throw InvalidConfig("qp_oracle: too many constraints to enumerate");
  const double scale = std::max({1.0, linalg::max_abs(H), linalg::max_abs(C)});
  std::vector<int> idx;
  for (Index size = 0; size <= std::min<Index>(r, N); ++size) {
    std::vector<bool> pick(r, false);
    std::fill(pick.begin(), pick.begin() + size, true);
    do {
      idx.clear();
      for (Index q = 0; q < r; ++q)
        if (pick[q]) idx.push_back(static_cast<int>(q));
      const Index a = static_cast<Index>(idx.size());
      Mat KKT = Mat::Zero(N + a, N + a);
      Vec rhs(N + a);
      KKT.topLeftCorner(N, N) = H;
      rhs.head(N) = h;
      for (Index q = 0; q < a; ++q) {
        KKT.block(0, N + q, N, 1) = C.row(idx[q]).transpose();
        KKT.block(N + q, 0, 1, N) = C.row(idx[q]);
        rhs(N + q) = v(idx[q]);
      }
      Eigen::CompleteOrthogonalDecomposition<Mat> cod(KKT);
      Vec sol = cod.solve(rhs);
      const double res = (KKT * sol - rhs).norm() / scale;
      if (res > tol * std::max(1.0, rhs.norm())) continue;
      Vec y = sol.head(N);
      Vec lam = sol.tail(a);
      if (a > 0 && lam.minCoeff() < -tol) continue;
      if (r > 0 && (C * y - v).maxCoeff() > tol * std::max(1.0, v.cwiseAbs().maxCoeff()))
        continue;
      QpResult out;
      out.y = y;
      out.value = 0.5 * y.dot(H * y) - h.dot(y);
      out.active = idx;
      out.kkt_residual = res;
      return out;
    } while (std::prev_permutation(pick.begin(), pick.end()));
  }
  throw NoConvergence("qp_oracle: no active set satisfies the KKT conditions", 0.0);
}

namespace detail {

inline double sum_objective(const CouplingStructure& cs, const OperatorBank& bank,
                            const Vec& y) {
  Vec yb = select_B(cs, y);
  double f = 0.0;
  for (int j = 0; j < cs.m; ++j)
    f += bank.B[j]->value(yb.segment(cs.bx_op_off[j], cs.bx_op_size(j)));
  return f;
}

inline double sum_violation(const CouplingStructure& cs, const OperatorBank& bank,
                            const Vec& y) {
  Vec x = select_A(cs, y);
  double s = 0.0;
  for (int i = 0; i < cs.n; ++i)
    s += bank.A[i]->violation(x.segment(cs.hx_op_off[i], cs.hx_op_size(i)));
  return s;
}

// Halfspace {c^T x >= v}, stored as {-c^T x <= -v}.
inline std::shared_ptr<MonotoneOp> geq_halfspace(const Vec& c, double v) {
  return std::make_shared<HalfspaceNormalCone>(-c, -v);
}

inline std::string cut_key(int n, int m, const std::vector<int>& cut) {
  std::string s = std::to_string(n) + ":" + std::to_string(m);
  for (int c : cut) s += "," + std::to_string(c);
  return s;
}

}  // namespace detail

inline double connectivity_target(int n) { return 2.0 * (1.0 - std::cos(M_PI / n)); }

/// Per-block parameters from the lambda_max design with W = Z and beta = 1,
/// reusing one design per (n_k, cutoffs) pattern.
inline ParamSet designed_params(const CouplingStructure& cs,
                                const DesignOptions& opt = {}) {
  std::map<std::string, BlockParams> cache;
  ParamSet ps;
  for (int k = 0; k < cs.p; ++k) {
    const int n = cs.nk(k), m = cs.mk(k);
    auto cut = block_cutoffs(cs, k);
    const std::string key = detail::cut_key(n, m, cut);
    auto it = cache.find(key);
    if (it == cache.end()) {
      DesignSpec s = DesignSpec::make(n, m, Vec::Ones(m), connectivity_target(n));
      s.set_cutoffs(cut);
      s.objective = Objective::MaxEigZ;
      DesignResult r = design(s, opt);
      it = cache.emplace(key, to_block(s, r.mats)).first;
    }
    ps.blocks.push_back(it->second);
  }
  refresh_dinv(ps);
  return ps;
}

inline ParamSet uniform_params(const CouplingStructure& cs) {
  ParamSet ps;
  for (int k = 0; k < cs.p; ++k) {
    if (cs.mk(k) != 0)
      throw InvalidConfig("uniform_params: block " + std::to_string(k + 1) +
                          " has cocoercive operators");
    auto [Z, W] = uniform_family(cs.nk(k));
    ps.blocks.push_back(derive_block(Z, W, Mat(0, cs.nk(k)), Mat(cs.nk(k), 0),
                                     Vec(0), k));
  }
  refresh_dinv(ps);
  return ps;
}

/// Z = W = diag(d) - X with X the Sinkhorn-balanced matrix for d. A target
/// larger than the sum of the others has no zero-diagonal solution and is
/// clamped to 0.99 of that sum.
inline ParamSet sinkhorn_params(const CouplingStructure& cs, const std::vector<Vec>& d) {
  ParamSet ps;
  for (int k = 0; k < cs.p; ++k) {
    Vec dk = d[k];
    Index imax = 0;
    dk.maxCoeff(&imax);
    const double rest = dk.sum() - dk(imax);
    if (dk(imax) > 0.99 * rest) dk(imax) = 0.99 * rest;
    SinkhornResult s = sinkhorn_scale(dk);
    ps.blocks.push_back(derive_block(s.Z, s.Z, Mat(0, cs.nk(k)), Mat(cs.nk(k), 0),
                                     Vec(0), k));
  }
  refresh_dinv(ps);
  return ps;
}

// ---------------------------------------------------------------------------
// Illustrative example: p = 5, n = 4, m = 3.

inline std::vector<std::vector<int>> illustrative_KA() {
  return {{2, 3, 4}, {1, 2}, {0, 1, 4}, {0, 3, 4}};
}
inline std::vector<std::vector<int>> illustrative_KB() {
  return {{3, 4}, {2, 4}, {0, 3, 4}};
}
/// Cutoff operators giving s^4_1 = s^3_2 = s^5_2 = s^1_3 = s^4_3 = 1 and
/// s^5_1 = s^5_3 = 2.
inline std::vector<int> illustrative_istar() { return {2, 0, 2}; }

inline CouplingStructure illustrative_structure(int dim) {
  return build_structure(illustrative_KA(), illustrative_KB(),
                         std::vector<int>(5, dim), illustrative_istar());
}

struct IllustrativeOptions {
  int dim = 200;
  bool with_alg1 = true;
  bool with_oracle = true;
  DesignOptions design;
};

/// Halfspaces {c_i^T x >= v_i} with c_i ~ U[-.5,.5], v_i ~ U[0,10]; quadratic
/// cocoercive operators with spectra in U[0,1] and h_j ~ U[-.5,.5].
inline Instance gen_illustrative(unsigned long long seed,
                                 const IllustrativeOptions& o = {}) {
  if (o.dim < 1) throw InvalidConfig("illustrative: dim must be positive");
  Rng rng(seed);
  Instance inst;
  inst.name = "illustrative";
  inst.seed = seed;
  inst.alpha = 2.0;
  inst.gamma = 0.95;

  Strategy cab;
  cab.name = "cabra";
  cab.mode = Mode::Z;
  cab.cs = illustrative_structure(o.dim);
  const auto& cs = cab.cs;
  std::vector<Vec> cvec;
  std::vector<double> vval;
  for (int i = 0; i < cs.n; ++i) {
    cvec.push_back(rand_uniform(rng, cs.hx_op_size(i), -0.5, 0.5));
    vval.push_back(rand_uniform(rng, 1, 0.0, 10.0)(0));
    cab.bank.A.push_back(detail::geq_halfspace(cvec.back(), vval.back()));
  }
  std::vector<Mat> Hs;
  std::vector<Vec> hs;
  for (int j = 0; j < cs.m; ++j) {
    Hs.push_back(random_spectrum_sym(rng, cs.bx_op_size(j), 0.0, 1.0));
    hs.push_back(rand_uniform(rng, cs.bx_op_size(j), -0.5, 0.5));
    cab.bank.B.push_back(std::make_shared<AffineCocoercive>(Hs.back(), hs.back()));
  }
  cab.params = designed_params(cs, o.design);

  const OperatorBank bank = cab.bank;
  const CouplingStructure csc = cs;
  inst.objective = [csc, bank](const Vec& y) { return detail::sum_objective(csc, bank, y); };
  inst.violation = [csc, bank](const Vec& y) { return detail::sum_violation(csc, bank, y); };

  if (o.with_oracle) {
    Mat H = Mat::Zero(cs.gy_size, cs.gy_size);
    Vec h = Vec::Zero(cs.gy_size);
    for (int j = 0; j < cs.m; ++j) {
      Mat R = dense_select_B(cs, j);
      H += R.transpose() * Hs[j] * R;
      h += R.transpose() * hs[j];
    }
    Mat C(cs.n, cs.gy_size);
    Vec v(cs.n);
    for (int i = 0; i < cs.n; ++i) {
      C.row(i) = -(dense_select_A(cs, i).transpose() * cvec[i]).transpose();
      v(i) = -vval[i];
    }
    QpResult q = qp_oracle(H, h, C, v);
    inst.f_ref = q.value;
    inst.y_ref = q.y;
  }
  inst.strategies.push_back(cab);

  if (o.with_alg1) {
    // Every operator sees the whole space; zero fill outside its blocks.
    Strategy a1;
    a1.name = "alg1";
    a1.mode = Mode::Z;
    const int total = static_cast<int>(cs.gy_size);
    a1.cs = build_structure({{0}, {0}, {0}, {0}}, {{0}, {0}, {0}}, {total},
                            std::vector<int>{0, 1, 2});
    for (int i = 0; i < cs.n; ++i) {
      Vec c = dense_select_A(cs, i).transpose() * cvec[i];
      a1.bank.A.push_back(detail::geq_halfspace(c, vval[i]));
    }
    for (int j = 0; j < cs.m; ++j) {
      Mat R = dense_select_B(cs, j);
      a1.bank.B.push_back(std::make_shared<AffineCocoercive>(
          R.transpose() * Hs[j] * R, R.transpose() * hs[j]));
    }
    a1.params = designed_params(a1.cs, o.design);
    inst.strategies.push_back(a1);
  }
  return inst;
}

// ---------------------------------------------------------------------------
// Two-dimensional diagonal scaling example.

inline Instance gen_toy2d() {
  Instance inst;
  inst.name = "toy2d";
  inst.alpha = 2.0;
  inst.gamma = 2.0;
  CouplingStructure cs = build_structure({{0, 1}, {0, 1}}, {}, {1, 1});
  OperatorBank bank;
  Vec c1(2), c2(2);
  c1 << 0.05, -1.0;
  c2 << 0.05, 1.0;
  bank.A.push_back(detail::geq_halfspace(c1, 2.0));
  bank.A.push_back(detail::geq_halfspace(c2, 2.0));
  for (double sc : {1.0, 0.0025}) {
    auto [Z, W] = uniform_family(2);
    std::vector<Mat> Zs{Z * sc, Z}, Ws{W * sc, W};
    std::vector<Mat> Ks{Mat(0, 2), Mat(0, 2)}, Qs{Mat(2, 0), Mat(2, 0)};
    Strategy s;
    s.name = sc == 1.0 ? "unscaled" : "scaled";
    s.cs = cs;
    s.bank = bank;
    s.params = derive(cs, Zs, Ws, Ks, Qs, Vec(0));
    s.mode = Mode::V;
    inst.strategies.push_back(s);
  }
  inst.violation = [cs, bank](const Vec& y) { return detail::sum_violation(cs, bank, y); };
  return inst;
}

// ---------------------------------------------------------------------------
// Scaled experiments on G_k = R with every operator touching every block.

namespace detail {

inline CouplingStructure full_structure(int n, int m, int p,
                                        std::optional<std::vector<int>> istar) {
  std::vector<int> all(p);
  for (int k = 0; k < p; ++k) all[k] = k;
  return build_structure(std::vector<std::vector<int>>(n, all),
                         std::vector<std::vector<int>>(m, all), std::vector<int>(p, 1),
                         istar);
}

// Nearly parallel normals: c + r_i for the first floor(n/2), r_i - c after.
inline Mat parallel_normals(Rng& rng, int n, int p) {
  Vec c = rand_uniform(rng, p, 0.0, 2.0);
  Mat C(n, p);
  for (int i = 0; i < n; ++i) {
    Vec r = rand_uniform(rng, p, 0.0, 0.1);
    C.row(i) = (i < n / 2 ? Vec(r + c) : Vec(r - c)).transpose();
  }
  return C;
}

}  // namespace detail

inline Instance gen_halfspace_scaled(unsigned long long seed, int n = 30, int p = 200) {
  Rng rng(seed);
  Instance inst;
  inst.name = "halfspace_scaled";
  inst.seed = seed;
  inst.alpha = 1.0;
  inst.gamma = 1.9;
  CouplingStructure cs = detail::full_structure(n, 0, p, std::nullopt);
  Mat C = detail::parallel_normals(rng, n, p);
  Vec v = rand_uniform(rng, n, 0.0, 1.0);
  OperatorBank bank;
  for (int i = 0; i < n; ++i) bank.A.push_back(detail::geq_halfspace(C.row(i).transpose(), v(i)));
  std::vector<Vec> d(p);
  for (int k = 0; k < p; ++k) d[k] = C.col(k).cwiseAbs2();
  inst.strategies.push_back({"uniform", cs, bank, uniform_params(cs), Mode::V});
  inst.strategies.push_back({"scaled", cs, bank, sinkhorn_params(cs, d), Mode::V});
  inst.violation = [cs, bank](const Vec& y) { return detail::sum_violation(cs, bank, y); };
  return inst;
}

/// A_i(x) = H_i x - h_i with H_i = X_i^T X_i, X_i ~ U[0,1], h_i = c + r_i.
inline Instance gen_quadratic_scaled(unsigned long long seed, int n = 20, int p = 100) {
  Rng rng(seed);
  Instance inst;
  inst.name = "quadratic_scaled";
  inst.seed = seed;
  inst.alpha = 0.5;
  inst.gamma = 1.75;
  CouplingStructure cs = detail::full_structure(n, 0, p, std::nullopt);
  Vec center = rand_uniform(rng, p, 0.0, 1.0);
  OperatorBank bank;
  Mat Hsum = Mat::Zero(p, p);
  Vec hsum = Vec::Zero(p);
  std::vector<Vec> d(p, Vec(n));
  for (int i = 0; i < n; ++i) {
    Mat X = rand_uniform(rng, p, p, 0.0, 1.0);
    Mat H = X.transpose() * X;
    Vec h = center + rand_uniform(rng, p, -0.5, 0.5);
    Hsum += H;
    hsum += h;
    for (int k = 0; k < p; ++k) d[k](i) = H(k, k) + std::abs(h(k));
    bank.A.push_back(std::make_shared<AffineMonotone>(H, h));
  }
  inst.strategies.push_back({"uniform", cs, bank, uniform_params(cs), Mode::V});
  inst.strategies.push_back({"scaled", cs, bank, sinkhorn_params(cs, d), Mode::V});
  Vec yref = Hsum.ldlt().solve(hsum);
  auto f = [Hsum, hsum](const Vec& y) { return 0.5 * y.dot(Hsum * y) - hsum.dot(y); };
  inst.y_ref = yref;
  inst.f_ref = f(yref);
  inst.objective = f;
  return inst;
}

struct HalfquadOptions {
  int n = 16;
  int m = 15;
  int p = 10;
  DesignOptions design{1e-9, 50000, 3000, 10, 1e-2};
  bool with_scaled = true;
};

/// Halfspace resolvents with quadratic cocoercive terms scaled to
/// lambda_max(H_j) = 1; cocoercive j cuts off after operator j.
inline Instance gen_halfquad(unsigned long long seed, const HalfquadOptions& o = {}) {
  const int n = o.n, m = o.m, p = o.p;
  if (m >= n) throw InvalidConfig("halfquad needs m < n");
  Rng rng(seed);
  Instance inst;
  inst.name = "halfquad";
  inst.seed = seed;
  inst.alpha = 0.25;
  inst.gamma = 1.85;
  std::vector<int> istar(m);
  for (int j = 0; j < m; ++j) istar[j] = j;
  CouplingStructure cs = detail::full_structure(n, m, p, istar);
  Mat C = detail::parallel_normals(rng, n, p);
  Vec v = rand_uniform(rng, n, 0.0, 1.0);
  OperatorBank bank;
  for (int i = 0; i < n; ++i) bank.A.push_back(detail::geq_halfspace(C.row(i).transpose(), v(i)));
  Vec center = rand_uniform(rng, p, 0.0, 1.0);
  Mat Hsum = Mat::Zero(p, p);
  Vec hsum = Vec::Zero(p);
  std::vector<Mat> Hs;
  std::vector<Vec> hs;
  for (int j = 0; j < m; ++j) {
    Mat X = rand_uniform(rng, p, p, 0.0, 1.0);
    Mat H = X.transpose() * X;
    H /= linalg::lambda_max(H);
    Vec h = center + rand_uniform(rng, p, -0.5, 0.5);
    Hs.push_back(H);
    hs.push_back(h);
    Hsum += H;
    hsum += h;
    bank.B.push_back(std::make_shared<AffineCocoercive>(H, h));
  }
  inst.strategies.push_back({"uniform", cs, bank, designed_params(cs, o.design), Mode::V});
  if (o.with_scaled) {
    ParamSet ps;
    for (int k = 0; k < p; ++k) {
      DesignSpec s = DesignSpec::make(n, m, Vec::Ones(m), connectivity_target(n));
      s.set_cutoffs(block_cutoffs(cs, k));
      s.objective = Objective::DiagMatch;
      s.dA = 15.0 * inst.alpha * C.col(k).cwiseAbs2();
      s.dB.resize(m);
      for (int j = 0; j < m; ++j) s.dB(j) = inst.alpha * (std::abs(hs[j](k)) + Hs[j](k, k));
      DesignResult r = design(s, o.design);
      ps.blocks.push_back(to_block(s, r.mats));
    }
    refresh_dinv(ps);
    inst.strategies.push_back({"scaled", cs, bank, ps, Mode::V});
  }
  Mat Cle = -C;
  Vec vle = -v;
  QpResult q = qp_oracle(Hsum, hsum, Cle, vle);
  inst.f_ref = q.value;
  inst.y_ref = q.y;
  inst.objective = [cs, bank](const Vec& y) { return detail::sum_objective(cs, bank, y); };
  inst.violation = [cs, bank](const Vec& y) { return detail::sum_violation(cs, bank, y); };
  return inst;
}

// ---------------------------------------------------------------------------
// Multi-stage stochastic weapon-target assignment.

struct WtaSpec {
  int weapons = 2;
  int targets = 2;
  int scenarios = 2;
  int stages = 1;
  // branches[t]: number of branches at stage t; scenarios are split into
  // contiguous groups. Empty: stage t has min(S, 2^t) branches.
  std::vector<int> branches;
  unsigned long long seed = 0;
  TauConvention tau = TauConvention::Conservative;
};

struct WtaInstance {
  WtaSpec spec;
  Vec w;                           // scenario probabilities
  Vec V;                           // target values
  std::vector<std::vector<int>> branch_of;  // [s][t]
  std::vector<std::vector<std::vector<int>>> members;  // [t][b] -> scenarios
  // p[((i*E + j)*S + s)*T + t]
  std::vector<double> p;
  double tau = 1.0;

  int E() const { return spec.targets; }
  int Wn() const { return spec.weapons; }
  int S() const { return spec.scenarios; }
  int T() const { return spec.stages; }
  double prob(int i, int j, int s, int t) const {
    return p[((static_cast<std::size_t>(i) * E() + j) * S() + s) * T() + t];
  }
  double q(int i, int j, int s, int t) const { return -std::log1p(-prob(i, j, s, t)); }

  // Element (i, j, t, b) -> block index.
  std::vector<std::vector<std::vector<std::vector<int>>>> elem;  // [i][j][t][b]
  int blocks = 0;
};

inline WtaInstance make_wta_instance(const WtaSpec& sp) {
  if (sp.weapons < 1 || sp.targets < 1 || sp.scenarios < 1 || sp.stages < 1)
    throw InvalidConfig("wta: all counts must be positive");
  Rng rng(sp.seed);
  WtaInstance w;
  w.spec = sp;
  const int S = sp.scenarios, T = sp.stages;
  Vec raw = rand_uniform(rng, S, 0.1, 1.0);
  w.w = raw / raw.sum();
  w.V = rand_uniform(rng, sp.targets, 0.1, 0.9);
  w.p.resize(static_cast<std::size_t>(sp.weapons) * sp.targets * S * T);
  std::uniform_real_distribution<double> U(0.05, 0.95);
  for (auto& x : w.p) x = U(rng);
  std::vector<int> nb(T);
  for (int t = 0; t < T; ++t) {
    nb[t] = sp.branches.empty() ? std::min(S, 1 << std::min(t, 20))
                                : sp.branches.at(t);
    if (nb[t] < 1 || nb[t] > S) throw InvalidConfig("wta: branch count out of range");
  }
  w.branch_of.assign(S, std::vector<int>(T));
  w.members.assign(T, {});
  for (int t = 0; t < T; ++t) {
    w.members[t].assign(nb[t], {});
    for (int s = 0; s < S; ++s) {
      const int b = static_cast<int>((static_cast<long>(s) * nb[t]) / S);
      w.branch_of[s][t] = b;
      w.members[t][b].push_back(s);
    }
  }
  w.elem.assign(sp.weapons, std::vector<std::vector<std::vector<int>>>(
                                sp.targets, std::vector<std::vector<int>>(T)));
  for (int i = 0; i < sp.weapons; ++i)
    for (int j = 0; j < sp.targets; ++j)
      for (int t = 0; t < T; ++t)
        for (int b = 0; b < nb[t]; ++b) w.elem[i][j][t].push_back(w.blocks++);
  std::vector<double> weights;
  std::vector<Vec> qs;
  for (int j = 0; j < sp.targets; ++j)
    for (int s = 0; s < S; ++s) {
      Vec qv(sp.weapons * T);
      for (int i = 0; i < sp.weapons; ++i)
        for (int t = 0; t < T; ++t) qv(i * T + t) = w.q(i, j, s, t);
      weights.push_back(w.w(s) * w.V(j));
      qs.push_back(qv);
    }
  w.tau = wta_tau(weights, qs, sp.tau);
  return w;
}

/// Expected surviving value sum_s w_s sum_j V_j exp(-sum_{i,t} q x).
inline double wta_objective(const WtaInstance& w, const Vec& y) {
  double f = 0.0;
  for (int s = 0; s < w.S(); ++s)
    for (int j = 0; j < w.E(); ++j) {
      double e = 0.0;
      for (int i = 0; i < w.Wn(); ++i)
        for (int t = 0; t < w.T(); ++t)
          e += w.q(i, j, s, t) * y(w.elem[i][j][t][w.branch_of[s][t]]);
      f += w.w(s) * w.V(j) * std::exp(-e);
    }
  return f;
}

inline double wta_violation(const WtaInstance& w, const Vec& y) {
  double v = (-y).cwiseMax(0.0).sum();
  for (int i = 0; i < w.Wn(); ++i)
    for (int s = 0; s < w.S(); ++s) {
      double tot = 0.0;
      for (int j = 0; j < w.E(); ++j)
        for (int t = 0; t < w.T(); ++t) tot += y(w.elem[i][j][t][w.branch_of[s][t]]);
      v += std::max(0.0, tot - 1.0);
    }
  return v;
}

struct WtaProblem {
  WtaInstance data;
  CouplingStructure cs;
  OperatorBank bank;
  ParamSet params;
  std::vector<int> platform_of_op;  // -1 for N_0
  std::vector<int> weapon_of_block;
};

/// Operator order: N_0 first, then N_1(i, s) at 1 + i S + s, cocoercive
/// (j, s) at j S + s, every cutoff at N_0.
inline WtaProblem gen_wta(const WtaSpec& sp) {
  WtaProblem P;
  P.data = make_wta_instance(sp);
  const auto& w = P.data;
  const int S = w.S(), T = w.T(), Wn = w.Wn(), E = w.E();
  std::vector<std::vector<int>> KA(1 + Wn * S), KB(E * S);
  P.weapon_of_block.assign(w.blocks, 0);
  for (int k = 0; k < w.blocks; ++k) KA[0].push_back(k);
  for (int i = 0; i < Wn; ++i)
    for (int j = 0; j < E; ++j)
      for (int t = 0; t < T; ++t)
        for (std::size_t b = 0; b < w.elem[i][j][t].size(); ++b) {
          const int k = w.elem[i][j][t][b];
          P.weapon_of_block[k] = i;
          for (int s : w.members[t][b]) {
            KA[1 + i * S + s].push_back(k);
            KB[j * S + s].push_back(k);
          }
        }
  P.cs = build_structure(KA, KB, std::vector<int>(w.blocks, 1),
                         std::vector<int>(E * S, 0));
  P.bank.A.push_back(std::make_shared<NonnegativeCone>(w.blocks));
  P.platform_of_op.push_back(-1);
  for (int i = 0; i < Wn; ++i)
    for (int s = 0; s < S; ++s) {
      const Index len = P.cs.hx_op_size(1 + i * S + s);
      P.bank.A.push_back(std::make_shared<HalfspaceNormalCone>(Vec::Ones(len), 1.0));
      P.platform_of_op.push_back(i);
    }
  for (int j = 0; j < E; ++j)
    for (int s = 0; s < S; ++s) {
      const int op = j * S + s;
      Vec qv(P.cs.bx_op_size(op));
      for (int i = 0; i < Wn; ++i)
        for (int t = 0; t < T; ++t) {
          const int k = w.elem[i][j][t][w.branch_of[s][t]];
          qv(P.cs.slot_B(op, k)) = w.q(i, j, s, t);
        }
      P.bank.B.push_back(std::make_shared<WtaGradient>(w.tau * w.w(s) * w.V(j), qv));
    }
  for (int k = 0; k < w.blocks; ++k) {
    BlockParams b = wta_family(P.cs.mk(k));
    P.params.blocks.push_back(b);
  }
  refresh_dinv(P.params);
  return P;
}

inline Instance wta_as_instance(const WtaProblem& P, std::optional<double> f_ref) {
  Instance inst;
  inst.name = "wta";
  inst.seed = P.data.spec.seed;
  inst.alpha = 1.0;
  inst.gamma = 1.0;
  inst.strategies.push_back({"cabra", P.cs, P.bank, P.params, Mode::V});
  WtaInstance d = P.data;
  inst.objective = [d](const Vec& y) { return wta_objective(d, y); };
  inst.violation = [d](const Vec& y) { return wta_violation(d, y); };
  inst.f_ref = f_ref;
  return inst;
}

/// Projected gradient on the expected surviving value; the projection onto
/// {y >= 0} intersected with the budget halfspaces is computed by Dykstra.
inline Vec wta_reference(const WtaInstance& w, double tol = 1e-10, int maxit = 200000) {
  const int N = w.blocks;
  // budget rows: (i, s) -> element indices
  std::vector<std::vector<int>> rows;
  for (int i = 0; i < w.Wn(); ++i)
    for (int s = 0; s < w.S(); ++s) {
      std::vector<int> r;
      for (int j = 0; j < w.E(); ++j)
        for (int t = 0; t < w.T(); ++t) r.push_back(w.elem[i][j][t][w.branch_of[s][t]]);
      rows.push_back(r);
    }
  auto project = [&](const Vec& z) {
    const int nset = static_cast<int>(rows.size()) + 1;
    std::vector<Vec> inc(nset, Vec::Zero(N));
    Vec x = z;
    for (int sweep = 0; sweep < 100000; ++sweep) {
      Vec prev = x;
      for (int q = 0; q < nset; ++q) {
        Vec a = x + inc[q];
        Vec px = a;
        if (q == 0) {
          px = a.cwiseMax(0.0);
        } else {
          const auto& r = rows[q - 1];
          double tot = 0.0;
          for (int e : r) tot += a(e);
          if (tot > 1.0) {
            const double shift = (tot - 1.0) / static_cast<double>(r.size());
            for (int e : r) px(e) -= shift;
          }
        }
        inc[q] = a - px;
        x = px;
      }
      if ((x - prev).norm() <= 1e-15 * std::max(1.0, x.norm())) break;
    }
    return x;
  };
  auto grad = [&](const Vec& y) {
    Vec g = Vec::Zero(N);
    for (int s = 0; s < w.S(); ++s)
      for (int j = 0; j < w.E(); ++j) {
        double e = 0.0;
        for (int i = 0; i < w.Wn(); ++i)
          for (int t = 0; t < w.T(); ++t)
            e += w.q(i, j, s, t) * y(w.elem[i][j][t][w.branch_of[s][t]]);
        const double f = w.w(s) * w.V(j) * std::exp(-e);
        for (int i = 0; i < w.Wn(); ++i)
          for (int t = 0; t < w.T(); ++t)
            g(w.elem[i][j][t][w.branch_of[s][t]]) -= w.q(i, j, s, t) * f;
      }
    return g;
  };
  // Lipschitz bound of the gradient on y >= 0.
  double L = 0.0;
  for (int s = 0; s < w.S(); ++s)
    for (int j = 0; j < w.E(); ++j) {
      double nq = 0.0;
      for (int i = 0; i < w.Wn(); ++i)
        for (int t = 0; t < w.T(); ++t) nq += w.q(i, j, s, t) * w.q(i, j, s, t);
      L += w.w(s) * w.V(j) * nq;
    }
  Vec y = Vec::Zero(N);
  for (int it = 0; it < maxit; ++it) {
    Vec next = project(y - grad(y) / L);
    const double step = (next - y).norm();
    y = next;
    if (step <= tol) return y;
  }
  throw NoConvergence("wta_reference: projected gradient", 0.0);
}

}  // namespace cabra

#endif  // CABRA_PROBGEN_HPP_
