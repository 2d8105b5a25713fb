#ifndef CABRA_OPERATORS_HPP_
#define CABRA_OPERATORS_HPP_

#include <memory>
#include <string>
#include <vector>

#include "cabra/core.hpp"

namespace cabra {

/// Maximal monotone operator with a diagonally scaled resolvent.
class MonotoneOp {
 public:
  virtual ~MonotoneOp() = default;
  virtual std::string kind() const = 0;
  virtual Index dim() const = 0;
  /// x solving x + alpha diag(d)^{-1} A(x) ∋ u.
  virtual Vec resolvent(const Vec& u, double alpha, const Vec& d) const = 0;
  /// Called once before a run; lets operators cache factorizations.
  virtual void prepare(double /*alpha*/, const Vec& /*d*/) {}
  /// Distance-like measure of how far x is from dom A (0 inside).
  virtual double violation(const Vec& /*x*/) const { return 0.0; }

  /// Resolvent plus the recovered w in A(x) with x + alpha d^{-1} w = u.
  std::pair<Vec, Vec> resolve(const Vec& u, double alpha, const Vec& d) const {
    check(u, d, alpha);
    Vec x = resolvent(u, alpha, d);
    Vec w = d.cwiseProduct(u - x) / alpha;
    return {std::move(x), std::move(w)};
  }

 protected:
  void check(const Vec& u, const Vec& d, double alpha) const {
    if (u.size() != dim() || d.size() != dim())
      throw ShapeMismatch(kind() + ": resolvent argument has length " +
                          std::to_string(u.size()) + ", expected " +
                          std::to_string(dim()));
    if (!(alpha > 0.0)) throw InvalidConfig("resolvent needs alpha > 0");
  }
};

class ZeroMonotone : public MonotoneOp {
 public:
  explicit ZeroMonotone(Index dim) : dim_(dim) {}
  std::string kind() const override { return "zero"; }
  Index dim() const override { return dim_; }
  Vec resolvent(const Vec& u, double, const Vec&) const override { return u; }

 private:
  Index dim_;
};

/// Normal cone of {x : c^T x <= v}.
class HalfspaceNormalCone : public MonotoneOp {
 public:
  HalfspaceNormalCone(Vec c, double v) : c_(std::move(c)), v_(v) {
    if (!(c_.norm() > 0.0))
      throw InvalidConfig("halfspace normal must be nonzero");
  }
  std::string kind() const override { return "halfspace"; }
  Index dim() const override { return c_.size(); }
  const Vec& normal() const { return c_; }
  double offset() const { return v_; }

  Vec resolvent(const Vec& u, double, const Vec& d) const override {
    const double excess = c_.dot(u) - v_;
    if (excess <= 0.0) return u;
    Vec dc = c_.cwiseQuotient(d);
    return u - (excess / c_.dot(dc)) * dc;
  }
  double violation(const Vec& x) const override {
    return std::max(0.0, c_.dot(x) - v_);
  }

 private:
  Vec c_;
  double v_;
};

/// Normal cone of the nonnegative orthant.
class NonnegativeCone : public MonotoneOp {
 public:
  explicit NonnegativeCone(Index dim) : dim_(dim) {}
  std::string kind() const override { return "nonnegative"; }
  Index dim() const override { return dim_; }
  Vec resolvent(const Vec& u, double, const Vec&) const override {
    return u.cwiseMax(0.0);
  }
  double violation(const Vec& x) const override {
    return (-x).cwiseMax(0.0).sum();
  }

 private:
  Index dim_;
};

/// A(x) = H x - h with H symmetric PSD.
class AffineMonotone : public MonotoneOp {
 public:
  AffineMonotone(Mat H, Vec h) : H_(linalg::symmetrize(H)), h_(std::move(h)) {
    if (H_.rows() != h_.size())
      throw ShapeMismatch("affine operator: H and h sizes differ");
    const double lm = linalg::lambda_min(H_);
    if (lm < -1e-10) throw NotPSD("H", 0, lm);
  }
  std::string kind() const override { return "affine"; }
  Index dim() const override { return h_.size(); }
  const Mat& H() const { return H_; }
  const Vec& h() const { return h_; }

  void prepare(double alpha, const Vec& d) override {
    alpha_ = alpha;
    d_ = d;
    ldlt_ = std::make_shared<Eigen::LDLT<Mat>>(system(alpha, d));
  }

  Vec resolvent(const Vec& u, double alpha, const Vec& d) const override {
    Vec rhs = d.cwiseProduct(u) + alpha * h_;
    if (ldlt_ && alpha == alpha_ && d == d_) return ldlt_->solve(rhs);
    return Eigen::LDLT<Mat>(system(alpha, d)).solve(rhs);
  }

 private:
  Mat system(double alpha, const Vec& d) const {
    Mat S = alpha * H_;
    S.diagonal() += d;
    return S;
  }

  Mat H_;
  Vec h_;
  double alpha_ = 0.0;
  Vec d_;
  std::shared_ptr<Eigen::LDLT<Mat>> ldlt_;
};

/// Single-valued cocoercive operator.
class CocoerciveOp {
 public:
  virtual ~CocoerciveOp() = default;
  virtual std::string kind() const = 0;
  virtual Index dim() const = 0;
  virtual Vec apply(const Vec& x) const = 0;
  virtual double beta() const = 0;
  /// Function whose gradient this operator is, when one exists.
  virtual double value(const Vec& /*x*/) const { return 0.0; }

  Vec forward(const Vec& x) const {
    if (x.size() != dim())
      throw ShapeMismatch(kind() + ": argument has length " +
                          std::to_string(x.size()) + ", expected " +
                          std::to_string(dim()));
    return apply(x);
  }
};

/// B(x) = H x - h, beta = 1 / lambda_max(H).
class AffineCocoercive : public CocoerciveOp {
 public:
  AffineCocoercive(Mat H, Vec h) : H_(linalg::symmetrize(H)), h_(std::move(h)) {
    if (H_.rows() != h_.size())
      throw ShapeMismatch("affine cocoercive: H and h sizes differ");
    Vec ev = linalg::sym_eigenvalues(H_);
    if (ev.size() && ev(0) < -1e-10) throw NotPSD("H", 0, ev(0));
    const double lmax = ev.size() ? ev(ev.size() - 1) : 0.0;
    beta_ = lmax > 0.0 ? 1.0 / lmax : 1e300;
  }
  std::string kind() const override { return "affine"; }
  Index dim() const override { return h_.size(); }
  Vec apply(const Vec& x) const override { return H_ * x - h_; }
  double beta() const override { return beta_; }
  double value(const Vec& x) const override {
    return 0.5 * x.dot(H_ * x) - h_.dot(x);
  }
  const Mat& H() const { return H_; }
  const Vec& h() const { return h_; }

 private:
  Mat H_;
  Vec h_;
  double beta_;
};

inline constexpr double kExpClamp = 700.0;

/// Gradient of a * exp(-q^T x).
class WtaGradient : public CocoerciveOp {
 public:
  WtaGradient(double a, Vec q) : a_(a), q_(std::move(q)) {
    if (!(a_ > 0.0)) throw InvalidConfig("wta gradient needs a > 0");
    const double nq = q_.norm();
    if (!(nq > 0.0)) throw EmptyProblem("wta gradient with q = 0");
    beta_ = 1.0 / (a_ * std::max(nq, nq * nq));
    beta_loose_ = 1.0 / (a_ * nq);
  }
  std::string kind() const override { return "wta"; }
  Index dim() const override { return q_.size(); }
  Vec apply(const Vec& x) const override {
    return -a_ * std::exp(exponent(x)) * q_;
  }
  double value(const Vec& x) const override { return a_ * std::exp(exponent(x)); }
  double beta() const override { return beta_; }
  double beta_loose() const { return beta_loose_; }
  double weight() const { return a_; }
  const Vec& q() const { return q_; }
  bool clamped(const Vec& x) const { return -q_.dot(x) > kExpClamp; }

 private:
  double exponent(const Vec& x) const { return std::min(-q_.dot(x), kExpClamp); }

  double a_;
  Vec q_;
  double beta_, beta_loose_;
};

enum class TauConvention { Loose, Conservative };

/// Scaling tau = 1 / max_js (a_js * norm term). weights[r] = w_s V_j.
inline double wta_tau(const std::vector<double>& weights,
                      const std::vector<Vec>& qs,
                      TauConvention conv = TauConvention::Conservative) {
  if (weights.size() != qs.size())
    throw ShapeMismatch("wta_tau: weights and q vectors differ in count");
  double worst = 0.0;
  for (std::size_t r = 0; r < qs.size(); ++r) {
    const double nq = qs[r].norm();
    const double term =
        conv == TauConvention::Loose ? nq : std::max(nq, nq * nq);
    worst = std::max(worst, weights[r] * term);
  }
  if (!(worst > 0.0)) throw EmptyProblem("wta_tau: all q vectors are zero");
  return 1.0 / worst;
}

inline double wta_beta(double a, const Vec& q) { return WtaGradient(a, q).beta(); }

struct OperatorBank {
  std::vector<std::shared_ptr<MonotoneOp>> A;
  std::vector<std::shared_ptr<CocoerciveOp>> B;

  Vec betas() const {
    Vec b(B.size());
    for (std::size_t j = 0; j < B.size(); ++j) b(j) = B[j]->beta();
    return b;
  }
};

}  // namespace cabra

#endif  // CABRA_OPERATORS_HPP_
