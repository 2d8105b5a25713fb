#ifndef CABRA_CORE_HPP_
#define CABRA_CORE_HPP_

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace cabra {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Index = Eigen::Index;
using BoolMat = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

// Error hierarchy. Every failure the library reports derives from Error so the
// CLI can map categories onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

class BlockUnderCovered : public Error {
 public:
  explicit BlockUnderCovered(int k)
      : Error("block " + std::to_string(k + 1) +
              " is an argument of fewer than two monotone operators"),
        block(k) {}
  int block;
};

class CutoffInfeasible : public Error {
 public:
  CutoffInfeasible(int j, const std::string& why)
      : Error("cocoercive operator " + std::to_string(j + 1) + ": " + why),
        op(j) {}
  int op;
};

class NotPSD : public Error {
 public:
  NotPSD(const std::string& which, int k, double lambda_min)
      : Error(which + " of block " + std::to_string(k + 1) +
              " is not positive semidefinite (lambda_min = " +
              std::to_string(lambda_min) + ")") {}
};

class WrongNullspace : public Error {
 public:
  explicit WrongNullspace(int k, const std::string& why)
      : Error("W of block " + std::to_string(k + 1) + ": " + why) {}
};

class NoConvergence : public Error {
 public:
  NoConvergence(const std::string& what, double residual)
      : Error(what + " did not converge (residual " + std::to_string(residual) +
              ")"),
        residual(residual) {}
  double residual;
};

class PatternConflict : public Error {
 public:
  using Error::Error;
};

class Infeasible : public Error {
 public:
  Infeasible(const std::string& what, double residual)
      : Error(what + " (final residual " + std::to_string(residual) + ")"),
        residual(residual) {}
  double residual;
};

class DependencyViolation : public Error {
 public:
  using Error::Error;
};

class InvalidConfig : public Error {
 public:
  using Error::Error;
};

class EmptyProblem : public Error {
 public:
  using Error::Error;
};

class SchemaError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class Deadlock : public Error {
 public:
  using Error::Error;
};

namespace linalg {

inline Mat symmetrize(const Mat& a) { return 0.5 * (a + a.transpose()); }

// Ascending eigenvalues of the symmetric part of a.
inline Vec sym_eigenvalues(const Mat& a) {
  if (a.rows() == 0) return Vec();
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(a), Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

inline double lambda_min(const Mat& a) {
  if (a.rows() == 0) return 0.0;
  return sym_eigenvalues(a)(0);
}

inline double lambda_max(const Mat& a) {
  if (a.rows() == 0) return 0.0;
  Vec ev = sym_eigenvalues(a);
  return ev(ev.size() - 1);
}

// Second-smallest eigenvalue (algebraic connectivity for Laplacian-like W).
inline double fiedler(const Mat& w) {
  if (w.rows() < 2) return 0.0;
  return sym_eigenvalues(w)(1);
}

// Frobenius projection onto the PSD cone.
inline Mat project_psd(const Mat& a) {
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(a));
  Vec ev = es.eigenvalues().cwiseMax(0.0);
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

// Strict lower triangle, zeros elsewhere.
inline Mat strict_lower(const Mat& a) {
  Mat out = Mat::Zero(a.rows(), a.cols());
  for (Index r = 0; r < a.rows(); ++r)
    for (Index c = 0; c < std::min(r, a.cols()); ++c) out(r, c) = a(r, c);
  return out;
}

inline Mat ones_outer(Index n) { return Mat::Ones(n, n); }

inline double max_abs(const Mat& a) {
  return a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff();
}

inline double max_abs(const Vec& a) {
  return a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff();
}

// Scaled half-vectorization: off-diagonal entries carry sqrt(2) so that the
// Euclidean norm of svec(A) equals the Frobenius norm of A.
inline Index svec_size(Index n) { return n * (n + 1) / 2; }

inline Vec svec(const Mat& a) {
  const Index n = a.rows();
  Vec out(svec_size(n));
  Index idx = 0;
  const double r2 = std::sqrt(2.0);
  for (Index c = 0; c < n; ++c)
    for (Index r = c; r < n; ++r)
      out(idx++) = (r == c) ? a(r, c) : r2 * 0.5 * (a(r, c) + a(c, r));
  return out;
}

inline Mat smat(const Vec& v, Index n) {
  Mat a(n, n);
  Index idx = 0;
  const double r2 = std::sqrt(2.0);
  for (Index c = 0; c < n; ++c)
    for (Index r = c; r < n; ++r) {
      const double val = (r == c) ? v(idx) : v(idx) / r2;
      a(r, c) = val;
      a(c, r) = val;
      ++idx;
    }
  return a;
}

inline Index svec_index(Index n, Index r, Index c) {
  if (r < c) std::swap(r, c);
  // column-major lower triangle
  return c * n - c * (c - 1) / 2 + (r - c);
}

}  // namespace linalg
}  // namespace cabra

#endif  // CABRA_CORE_HPP_
