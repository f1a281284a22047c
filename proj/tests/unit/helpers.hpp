#pragma once

#include <random>

#include <Eigen/Dense>

#include "newsbandit/encoder.hpp"

namespace testing {

inline Eigen::VectorXd random_vector(std::mt19937_64& gen, long n, double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  Eigen::VectorXd v(n);
  for (long k = 0; k < n; ++k) v[k] = d(gen);
  return v;
}

inline Eigen::MatrixXd random_matrix(std::mt19937_64& gen, long r, long c, double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  Eigen::MatrixXd m(r, c);
  for (long i = 0; i < r; ++i)
    for (long j = 0; j < c; ++j) m(i, j) = d(gen);
  return m;
}

inline nb::RowMatrix random_rows(std::mt19937_64& gen, long r, long c, double scale = 1.0) {
  return random_matrix(gen, r, c, scale);
}

// Bias-augmented random context: Gaussian entries, last slot 1.
inline Eigen::VectorXd random_context(std::mt19937_64& gen, long n, double scale = 0.5) {
  Eigen::VectorXd v = random_vector(gen, n, scale);
  v[n - 1] = 1.0;
  return v;
}

}  // namespace testing

namespace testing {

// Arm and user contexts read straight from tables; predictions are x . z.
class TableTower final : public nb::ArmTower {
 public:
  TableTower(nb::RowMatrix arms, nb::RowMatrix users) : arms_(std::move(arms)), users_(std::move(users)) {}
  std::size_t arm_dim() const override { return static_cast<std::size_t>(arms_.cols()); }
  std::size_t user_dim() const override { return static_cast<std::size_t>(users_.cols()); }
  std::size_t arm_count() const override { return static_cast<std::size_t>(arms_.rows()); }
  nb::ConstRow arm_context(nb::ArmId a) const override { return nb::ConstRow(arms_.row(a).data(), arms_.cols()); }
  nb::ConstRow raw_context(nb::ArmId a) const override { return arm_context(a); }
  nb::Vector user_context(nb::UserId u) const override { return users_.row(u).transpose(); }
  double predict(nb::UserId u, nb::ArmId a, nb::Rng*) const override {
    return users_.row(u).dot(arms_.row(a));
  }

 private:
  nb::RowMatrix arms_;
  nb::RowMatrix users_;
};

inline nb::RowMatrix random_contexts(std::mt19937_64& gen, long n, long d, double scale = 0.5) {
  nb::RowMatrix m(n, d);
  for (long r = 0; r < n; ++r) m.row(r) = random_context(gen, d, scale).transpose();
  return m;
}

}  // namespace testing
