#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "newsbandit/encoder.hpp"
#include "newsbandit/glm.hpp"
#include "newsbandit/types.hpp"

namespace nb {

/// Per-iteration user context shared by every candidate score.
struct UserQuery {
  UserId user = 0;
  Vector z;  // user embedding (bias-augmented)
  double beta = 0.1;
};

/// One observed reward with the contexts that were current when it was scored.
struct Feedback {
  UserId user = 0;
  ArmId arm = 0;
  Vector x;      // neural arm context
  Vector x_raw;  // table arm context
  Vector z;      // user context
  double reward = 0.0;
};

Feedback make_feedback(const ArmTower& tower, UserId user, ArmId arm, const Vector& z, double reward);

struct PolicyParams {
  double gamma = 0.5;
  double lr_glm = 0.01;
  double lr_bilinear = 0.001;
};

/// Acquisition function plus the state it learns from feedback.
///
/// `score` and `exploit` are read-only and safe to call concurrently. The
/// `stream` argument seeds any randomness the policy needs for that single
/// evaluation, so results do not depend on evaluation order.
class Policy {
 public:
  virtual ~Policy() = default;
  virtual std::string_view name() const = 0;
  virtual double score(const ArmTower& tower, const UserQuery& q, ArmId arm, std::uint64_t stream) const = 0;
  /// The exploitation term alone (what `score` reduces to at beta = 0).
  virtual double exploit(const ArmTower& tower, const UserQuery& q, ArmId arm, std::uint64_t stream) const = 0;
  virtual void update(std::span<const Feedback> batch) = 0;
  virtual void reset() = 0;
  virtual std::unique_ptr<Policy> clone() const = 0;
};

class RandomPolicy final : public Policy {
 public:
  std::string_view name() const override { return "random"; }
  double score(const ArmTower&, const UserQuery&, ArmId, std::uint64_t stream) const override;
  double exploit(const ArmTower& t, const UserQuery& q, ArmId a, std::uint64_t s) const override {
    return score(t, q, a, s);
  }
  void update(std::span<const Feedback>) override {}
  void reset() override {}
  std::unique_ptr<Policy> clone() const override { return std::make_unique<RandomPolicy>(*this); }
};

class GreedyPolicy final : public Policy {
 public:
  std::string_view name() const override { return "greedy"; }
  double score(const ArmTower& tower, const UserQuery& q, ArmId arm, std::uint64_t) const override;
  double exploit(const ArmTower& t, const UserQuery& q, ArmId a, std::uint64_t s) const override {
    return score(t, q, a, s);
  }
  void update(std::span<const Feedback>) override {}
  void reset() override {}
  std::unique_ptr<Policy> clone() const override { return std::make_unique<GreedyPolicy>(*this); }
};

/// Monte-Carlo dropout UCB: mean + beta * std of stochastic tower predictions.
class DropoutUcbPolicy final : public Policy {
 public:
  explicit DropoutUcbPolicy(std::size_t mc_samples);
  std::string_view name() const override { return "dropout_ucb"; }
  double score(const ArmTower& tower, const UserQuery& q, ArmId arm, std::uint64_t stream) const override;
  double exploit(const ArmTower& tower, const UserQuery& q, ArmId arm, std::uint64_t stream) const override;
  void update(std::span<const Feedback>) override {}
  void reset() override {}
  std::unique_ptr<Policy> clone() const override { return std::make_unique<DropoutUcbPolicy>(*this); }

  struct Stats {
    double mean;
    double stddev;
    std::vector<double> samples;
  };
  Stats stats(const ArmTower& tower, UserId user, ArmId arm, std::uint64_t stream) const;

 private:
  std::size_t mc_samples_;
};

/// Disjoint GLM-UCB: a logistic model and design matrix per user.
/// The neural variant reads encoder contexts, the plain one the raw table vectors.
class DisjointGlmPolicy final : public Policy {
 public:
  struct UserState {
    GlmCoefficients coef;
    DesignState design;
  };

  DisjointGlmPolicy(std::size_t dim, double lr, bool neural);
  std::string_view name() const override { return neural_ ? "n_glm_ucb" : "glm_ucb"; }
  double score(const ArmTower& tower, const UserQuery& q, ArmId arm, std::uint64_t) const override;
  double exploit(const ArmTower& tower, const UserQuery& q, ArmId arm, std::uint64_t) const override;
  void update(std::span<const Feedback> batch) override;
  void reset() override { users_.clear(); }
  std::unique_ptr<Policy> clone() const override { return std::make_unique<DisjointGlmPolicy>(*this); }

  /// sigmoid(x^T theta_u) + beta ||x||_{M_u^{-1}}, fresh users scored at theta = 0, M = I.
  double score_context(UserId user, const Eigen::Ref<const Vector>& x, double beta) const;
  const UserState* user_state(UserId user) const;
  const std::unordered_map<UserId, UserState>& users() const noexcept { return users_; }
  bool neural() const noexcept { return neural_; }

 private:
  std::size_t dim_;
  double lr_;
  bool neural_;
  std::unordered_map<UserId, UserState> users_;
};

/// Shared generalised additive UCB. The item coefficients and the user
/// coefficients are each shared by everyone; uncertainty is tracked by a design
/// over item vectors per user (A_x[u]) and over user vectors per item (A_z[i]).
class AdditiveSharedPolicy final : public Policy {
 public:
  AdditiveSharedPolicy(std::size_t item_dim, std::size_t user_dim, double gamma, double lr);
  std::string_view name() const override { return "s_galm_ucb"; }
  double score(const ArmTower& tower, const UserQuery& q, ArmId arm, std::uint64_t) const override;
  double exploit(const ArmTower& tower, const UserQuery& q, ArmId arm, std::uint64_t) const override;
  void update(std::span<const Feedback> batch) override;
  void reset() override;
  std::unique_ptr<Policy> clone() const override { return std::make_unique<AdditiveSharedPolicy>(*this); }

  double score_context(UserId user, ArmId arm, const Eigen::Ref<const Vector>& x,
                       const Eigen::Ref<const Vector>& z, double beta) const;
  double gamma() const noexcept { return gamma_; }
  const GlmCoefficients& theta_x() const noexcept { return theta_x_; }
  const GlmCoefficients& theta_z() const noexcept { return theta_z_; }
  const std::unordered_map<UserId, DesignState>& item_designs() const noexcept { return a_x_; }
  const std::unordered_map<ArmId, DesignState>& user_designs() const noexcept { return a_z_; }

 private:
  std::size_t item_dim_;
  std::size_t user_dim_;
  double gamma_;
  GlmCoefficients theta_x_;
  GlmCoefficients theta_z_;
  std::unordered_map<UserId, DesignState> a_x_;  // keyed by user
  std::unordered_map<ArmId, DesignState> a_z_;   // keyed by item, created lazily
};

/// Column-major vec(x z^T): entry (i, j) lands at index i + j * dim(x).
Vector outer_vec(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& z);

/// Shared generalised bilinear UCB: sigmoid(x^T Theta z) + beta ||vec(x z^T)||_{W^{-1}}.
class BilinearSharedPolicy final : public Policy {
 public:
  BilinearSharedPolicy(std::size_t item_dim, std::size_t user_dim, double lr);
  std::string_view name() const override { return "s_gblm_ucb"; }
  double score(const ArmTower& tower, const UserQuery& q, ArmId arm, std::uint64_t) const override;
  double exploit(const ArmTower& tower, const UserQuery& q, ArmId arm, std::uint64_t) const override;
  void update(std::span<const Feedback> batch) override;
  void reset() override;
  std::unique_ptr<Policy> clone() const override { return std::make_unique<BilinearSharedPolicy>(*this); }

  double score_context(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& z, double beta) const;
  const Matrix& theta() const noexcept { return theta_; }
  void set_theta(const Matrix& t);
  const DesignState& design() const noexcept { return w_; }
  double learning_rate() const noexcept { return lr_; }

 private:
  std::size_t item_dim_;
  std::size_t user_dim_;
  double lr_;
  Matrix theta_;
  DesignState w_;
};

inline constexpr std::string_view kPolicyNames[] = {"random",      "greedy",     "glm_ucb",   "n_glm_ucb",
                                                    "dropout_ucb", "s_galm_ucb", "s_gblm_ucb"};

/// Builds a policy by its configuration name; throws ConfigError for unknown names.
std::unique_ptr<Policy> make_policy(std::string_view name, std::size_t arm_dim, std::size_t user_dim,
                                    std::size_t mc_samples, const PolicyParams& params);

}  // namespace nb
