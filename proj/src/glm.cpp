#include "newsbandit/glm.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "newsbandit/error.hpp"

namespace nb {

double sigmoid(double v) noexcept {
  if (v >= 0.0) {
    const double e = std::exp(-v);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(v);
  return e / (1.0 + e);
}

double bce(double prob, double label) noexcept {
  constexpr double eps = 1e-12;
  const double p = std::clamp(prob, eps, 1.0 - eps);
  return -(label * std::log(p) + (1.0 - label) * std::log(1.0 - p));
}

DesignState::DesignState(std::size_t dim)
    : dim_(dim),
      m_(Matrix::Identity(dim, dim)),
      minv_(Matrix::Identity(dim, dim)),
      scratch_(Vector::Zero(dim)) {
  if (dim == 0) throw DimensionError("DesignState: dimension must be positive");
}

void DesignState::absorb(const Eigen::Ref<const Vector>& c) {
  require_dim(c.size(), static_cast<long>(dim_), "DesignState::absorb");
  ++n_obs_;
  if (c.squaredNorm() == 0.0) return;

  m_.noalias() += c * c.transpose();
  scratch_.noalias() = minv_ * c;
  const double denom = 1.0 + c.dot(scratch_);
  minv_.noalias() -= (scratch_ / denom) * scratch_.transpose();

  if ((minv_ - minv_.transpose()).cwiseAbs().maxCoeff() > kRefreshTolerance) refresh_inverse();
}

double DesignState::mahalanobis(const Eigen::Ref<const Vector>& c) const {
  require_dim(c.size(), static_cast<long>(dim_), "DesignState::mahalanobis");
  const double q = c.dot(minv_ * c);
  return std::sqrt(std::max(0.0, q));
}

void DesignState::reset() {
  m_.setIdentity();
  minv_.setIdentity();
  n_obs_ = 0;
  refreshes_ = 0;
}

void DesignState::refresh_inverse() {
  minv_ = m_.ldlt().solve(Matrix::Identity(dim_, dim_));
  minv_ = 0.5 * (minv_ + minv_.transpose()).eval();
  ++refreshes_;
}

GlmCoefficients::GlmCoefficients(std::size_t dim, double learning_rate)
    : theta_(Vector::Zero(dim)), lr_(learning_rate) {
  if (dim == 0) throw DimensionError("GlmCoefficients: dimension must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("GlmCoefficients: learning rate must be positive");
}

double GlmCoefficients::predict(const Eigen::Ref<const Vector>& c) const {
  require_dim(c.size(), theta_.size(), "GlmCoefficients::predict");
  return sigmoid(c.dot(theta_));
}

void GlmCoefficients::step(std::span<const GlmSample> batch) {
  if (batch.empty()) throw PreconditionError("glm step: empty batch");
  Vector grad = Vector::Zero(theta_.size());
  for (const auto& s : batch) {
    require_dim(s.context.size(), theta_.size(), "glm step");
    grad.noalias() += (sigmoid(s.context.dot(theta_)) - s.label) * s.context;
  }
  if (!grad.allFinite()) throw NumericError("glm step: non-finite gradient");
  theta_.noalias() -= lr_ * grad;
}

double mean_bce(const GlmCoefficients& coef, std::span<const GlmSample> data) {
  if (data.empty()) return 0.0;
  double total = 0.0;
  for (const auto& s : data) total += bce(coef.predict(s.context), s.label);
  return total / static_cast<double>(data.size());
}

}  // namespace nb
