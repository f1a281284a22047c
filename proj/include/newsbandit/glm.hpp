#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace nb {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Logistic link exp(v)/(1+exp(v)), evaluated on the branch that cannot overflow.
double sigmoid(double v) noexcept;

/// Binary cross-entropy of probability `prob` against a (possibly fractional) label.
double bce(double prob, double label) noexcept;

/// Identity-regularised design matrix M = I + sum c c^T with a cached inverse.
///
/// The inverse is maintained by rank-one (Sherman-Morrison) updates. If its
/// symmetry error exceeds `kRefreshTolerance` it is recomputed from M, and
/// `refresh_count()` records how often that happened.
class DesignState {
 public:
  static constexpr double kRefreshTolerance = 1e-6;

  explicit DesignState(std::size_t dim);

  std::size_t dim() const noexcept { return dim_; }
  const Matrix& matrix() const noexcept { return m_; }
  const Matrix& inverse() const noexcept { return minv_; }
  std::size_t n_obs() const noexcept { return n_obs_; }
  std::size_t refresh_count() const noexcept { return refreshes_; }

  void absorb(const Eigen::Ref<const Vector>& c);

  /// sqrt(c^T M^{-1} c)
  double mahalanobis(const Eigen::Ref<const Vector>& c) const;

  void reset();

 private:
  void refresh_inverse();

  std::size_t dim_;
  Matrix m_;
  Matrix minv_;
  std::size_t n_obs_ = 0;
  std::size_t refreshes_ = 0;
  Vector scratch_;
};

struct GlmSample {
  Vector context;
  double label;  // {0,1} in practice; fractional labels are accepted
};

class GlmCoefficients {
 public:
  GlmCoefficients(std::size_t dim, double learning_rate);

  std::size_t dim() const noexcept { return static_cast<std::size_t>(theta_.size()); }
  const Vector& theta() const noexcept { return theta_; }
  Vector& theta() noexcept { return theta_; }
  double learning_rate() const noexcept { return lr_; }

  double predict(const Eigen::Ref<const Vector>& c) const;

  /// One full-batch gradient step on the logistic loss:
  /// theta <- theta - lr * sum (sigmoid(c^T theta) - y) c.
  /// Throws (and leaves theta untouched) on an empty batch, a dimension
  /// mismatch or a non-finite gradient.
  void step(std::span<const GlmSample> batch);

  void reset() { theta_.setZero(); }

 private:
  Vector theta_;
  double lr_;
};

/// Mean BCE of the coefficients over a labelled set.
double mean_bce(const GlmCoefficients& coef, std::span<const GlmSample> data);

}  // namespace nb
