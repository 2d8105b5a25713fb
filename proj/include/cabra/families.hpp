#ifndef CABRA_FAMILIES_HPP_
#define CABRA_FAMILIES_HPP_

#include <utility>

#include "cabra/core.hpp"
#include "cabra/matparams.hpp"

namespace cabra {

/// Z = W = n/(n-1) I - 1/(n-1) 11^T.
inline std::pair<Mat, Mat> uniform_family(int n) {
  if (n < 2) throw InvalidConfig("uniform_family needs n >= 2");
  const double a = 1.0 / (n - 1);
  Mat Z = n * a * Mat::Identity(n, n) - Mat::Constant(n, n, a);
  return {Z, Z};
}

struct SinkhornResult {
  Mat X;
  Mat Z;
  int iterations = 0;
  double residual = 0.0;
};

/// Symmetric zero-diagonal X with X 1 = d, via symmetric Sinkhorn-Knopp
/// scaling of 11^T - I. Z = W = diag(d) - X.
inline SinkhornResult sinkhorn_scale(const Vec& d, double tol = 1e-10,
                                     int maxit = 10000) {
  const Index n = d.size();
  if (n < 2) throw InvalidConfig("sinkhorn_scale needs at least two entries");
  for (Index i = 0; i < n; ++i)
    if (!(d(i) > 0.0)) throw InvalidConfig("sinkhorn_scale needs positive d");
  SinkhornResult res;
  const double scale = d.maxCoeff();
  Index imax = 0;
  d.maxCoeff(&imax);
  const double rest = d.sum() - d(imax);

  auto finish = [&](Mat X) {
    X = linalg::symmetrize(X);
    X.diagonal().setZero();
    res.residual = linalg::max_abs(Vec(X.rowwise().sum() - d)) / scale;
    res.X = X;
    res.Z = -X;
    res.Z.diagonal() = X.rowwise().sum();  // Z 1 = 0 exactly
    return res;
  };

  if (rest < d(imax) * (1.0 - 1e-12)) {
    throw NoConvergence("sinkhorn_scale: largest target exceeds the sum of the "
                        "others, no zero-diagonal solution exists;",
                        (d(imax) - rest) / scale);
  }
  if (rest <= d(imax) * (1.0 + 1e-12)) {
    // Boundary case: the only solution is the star centered at the max entry.
    Mat X = Mat::Zero(n, n);
    for (Index i = 0; i < n; ++i)
      if (i != imax) X(i, imax) = X(imax, i) = d(i);
    return finish(X);
  }

  Vec r = d / std::sqrt(d.sum());
  for (int it = 1; it <= maxit; ++it) {
    const double total = r.sum();
    Vec ar = Vec::Constant(n, total) - r;
    Vec rowsum = r.cwiseProduct(ar);
    res.iterations = it;
    const double err = (rowsum - d).cwiseAbs().maxCoeff() / scale;
    if (err <= tol) break;
    // geometric mean of r and d / (A r)
    r = r.cwiseProduct(d.cwiseQuotient(rowsum).cwiseSqrt());
    if (it == maxit) throw NoConvergence("sinkhorn_scale", err);
  }
  Mat X = r * r.transpose();
  X.diagonal().setZero();
  return finish(X);
}

/// Stochastic-programming element matrices with s scenario copies.
inline BlockParams wta_family(int s) {
  if (s < 1) throw InvalidConfig("wta_family needs S_count >= 1");
  const int n = s + 1;
  const double inv = 1.0 / s;
  Mat Z = Mat::Identity(n, n);
  Z(0, 0) = s;
  for (int r = 1; r < n; ++r) Z(0, r) = Z(r, 0) = -1.0;
  Mat W = Mat::Identity(n, n) - Mat::Constant(n, n, 1.0 / (1.0 + s));
  Mat K = Mat::Zero(s, n);
  K.col(0).setOnes();
  Mat Q = Mat::Zero(n, s);
  Q.bottomRows(s).setConstant(inv);
  BlockParams b = derive_block(Z, W, K, Q, Vec::Ones(s));
  Mat U = Mat::Constant(n, n, inv);
  U(0, 0) = s;
  for (int r = 1; r < n; ++r) U(0, r) = U(r, 0) = -1.0;
  b.U = U;
  return b;
}

/// A valid closed-form choice for any block: K reads only the first copy,
/// Q writes only to the last copy, W is uniform and Z = W + U. Works for every
/// legal cutoff because s^k_j always lies in [0, n_k - 1).
inline BlockParams endpoint_family(int n, const Vec& beta) {
  auto [W, unused] = uniform_family(n);
  (void)unused;
  const Index m = beta.size();
  Mat K = Mat::Zero(m, n);
  Mat Q = Mat::Zero(n, m);
  for (Index t = 0; t < m; ++t) {
    K(t, 0) = 1.0;
    Q(n - 1, t) = 1.0;
  }
  Mat U = Mat::Zero(n, n);
  if (m > 0) {
    Mat R = Q.transpose() - K;
    U = R.transpose() * beta.cwiseInverse().asDiagonal() * R;
  }
  return derive_block(W + U, W, K, Q, beta);
}

}  // namespace cabra

#endif  // CABRA_FAMILIES_HPP_
