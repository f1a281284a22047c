#include "newsbandit/policy.hpp"

#include <cmath>
#include <map>
#include <string>

#include "newsbandit/error.hpp"
#include "newsbandit/rng.hpp"

namespace nb {

Feedback make_feedback(const ArmTower& tower, UserId user, ArmId arm, const Vector& z, double reward) {
  return Feedback{user, arm, tower.arm_context(arm), tower.raw_context(arm), z, reward};
}

double RandomPolicy::score(const ArmTower&, const UserQuery&, ArmId, std::uint64_t stream) const {
  Rng rng(stream);
  return uniform01(rng);
}

double GreedyPolicy::score(const ArmTower& tower, const UserQuery& q, ArmId arm, std::uint64_t) const {
  return q.z.dot(tower.arm_context(arm));
}

DropoutUcbPolicy::DropoutUcbPolicy(std::size_t mc_samples) : mc_samples_(mc_samples) {
  if (mc_samples < 2) throw ConfigError("dropout_ucb: mc_samples must be at least 2");
}

DropoutUcbPolicy::Stats DropoutUcbPolicy::stats(const ArmTower& tower, UserId user, ArmId arm,
                                                std::uint64_t stream) const {
  Rng rng(stream);
  Stats st{0.0, 0.0, {}};
  st.samples.reserve(mc_samples_);
  for (std::size_t s = 0; s < mc_samples_; ++s) st.samples.push_back(tower.predict(user, arm, &rng));
  const double n = static_cast<double>(mc_samples_);
  for (double v : st.samples) st.mean += v;
  st.mean /= n;
  double var = 0.0;
  for (double v : st.samples) var += (v - st.mean) * (v - st.mean);
  st.stddev = std::sqrt(var / n);
  return st;
}

double DropoutUcbPolicy::score(const ArmTower& tower, const UserQuery& q, ArmId arm,
                               std::uint64_t stream) const {
  const auto st = stats(tower, q.user, arm, stream);
  return st.mean + q.beta * st.stddev;
}

double DropoutUcbPolicy::exploit(const ArmTower& tower, const UserQuery& q, ArmId arm,
                                 std::uint64_t stream) const {
  return stats(tower, q.user, arm, stream).mean;
}

// ---------------------------------------------------------------------------

DisjointGlmPolicy::DisjointGlmPolicy(std::size_t dim, double lr, bool neural)
    : dim_(dim), lr_(lr), neural_(neural) {
  GlmCoefficients probe(dim, lr);  // validates dim and lr
}

const DisjointGlmPolicy::UserState* DisjointGlmPolicy::user_state(UserId user) const {
  auto it = users_.find(user);
  return it == users_.end() ? nullptr : &it->second;
}

double DisjointGlmPolicy::score_context(UserId user, const Eigen::Ref<const Vector>& x, double beta) const {
  require_dim(x.size(), static_cast<long>(dim_), "glm_ucb context");
  if (const auto* st = user_state(user))
    return st->coef.predict(x) + beta * st->design.mahalanobis(x);
  return sigmoid(0.0) + beta * x.norm();
}

double DisjointGlmPolicy::score(const ArmTower& tower, const UserQuery& q, ArmId arm, std::uint64_t) const {
  return neural_ ? score_context(q.user, tower.arm_context(arm), q.beta)
                 : score_context(q.user, tower.raw_context(arm), q.beta);
}

double DisjointGlmPolicy::exploit(const ArmTower& tower, const UserQuery& q, ArmId arm, std::uint64_t) const {
  return neural_ ? score_context(q.user, tower.arm_context(arm), 0.0)
                 : score_context(q.user, tower.raw_context(arm), 0.0);
}

void DisjointGlmPolicy::update(std::span<const Feedback> batch) {
  if (batch.empty()) return;
  std::map<UserId, std::vector<GlmSample>> by_user;
  for (const auto& fb : batch) {
    const Vector& x = neural_ ? fb.x : fb.x_raw;
    require_dim(x.size(), static_cast<long>(dim_), "glm_ucb update");
    by_user[fb.user].push_back({x, fb.reward});
  }
  // Stage every touched user first so a rejected step leaves the policy untouched.
  std::map<UserId, UserState> staged;
  for (auto& [user, samples] : by_user) {
    auto it = users_.find(user);
    UserState st = it != users_.end() ? it->second : UserState{GlmCoefficients(dim_, lr_), DesignState(dim_)};
    for (const auto& s : samples) st.design.absorb(s.context);
    st.coef.step(samples);
    staged.emplace(user, std::move(st));
  }
  for (auto& [user, st] : staged) users_.insert_or_assign(user, std::move(st));
}

// ---------------------------------------------------------------------------

AdditiveSharedPolicy::AdditiveSharedPolicy(std::size_t item_dim, std::size_t user_dim, double gamma, double lr)
    : item_dim_(item_dim),
      user_dim_(user_dim),
      gamma_(gamma),
      theta_x_(item_dim, lr),
      theta_z_(user_dim, lr) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("s_galm_ucb: gamma must lie in [0, 1]");
}

void AdditiveSharedPolicy::reset() {
  theta_x_.reset();
  theta_z_.reset();
  a_x_.clear();
  a_z_.clear();
}

double AdditiveSharedPolicy::score_context(UserId user, ArmId arm, const Eigen::Ref<const Vector>& x,
                                           const Eigen::Ref<const Vector>& z, double beta) const {
  require_dim(x.size(), static_cast<long>(item_dim_), "s_galm_ucb item context");
  require_dim(z.size(), static_cast<long>(user_dim_), "s_galm_ucb user context");
  const double g = gamma_;
  const double exploit = sigmoid(g * x.dot(theta_x_.theta()) + (1.0 - g) * theta_z_.theta().dot(z));
  if (beta == 0.0) return exploit;
  auto ix = a_x_.find(user);
  auto iz = a_z_.find(arm);
  const double ux = ix != a_x_.end() ? ix->second.mahalanobis(x) : x.norm();
  const double uz = iz != a_z_.end() ? iz->second.mahalanobis(z) : z.norm();
  return exploit + beta * (g * ux + (1.0 - g) * uz);
}

double AdditiveSharedPolicy::score(const ArmTower& tower, const UserQuery& q, ArmId arm, std::uint64_t) const {
  return score_context(q.user, arm, tower.arm_context(arm), q.z, q.beta);
}

double AdditiveSharedPolicy::exploit(const ArmTower& tower, const UserQuery& q, ArmId arm,
                                     std::uint64_t) const {
  return score_context(q.user, arm, tower.arm_context(arm), q.z, 0.0);
}

void AdditiveSharedPolicy::update(std::span<const Feedback> batch) {
  if (batch.empty()) return;
  std::vector<GlmSample> item_samples;
  std::vector<GlmSample> user_samples;
  std::map<UserId, DesignState> staged_x;
  std::map<ArmId, DesignState> staged_z;
  for (const auto& fb : batch) {
    require_dim(fb.x.size(), static_cast<long>(item_dim_), "s_galm_ucb update item context");
    require_dim(fb.z.size(), static_cast<long>(user_dim_), "s_galm_ucb update user context");
    auto sx = staged_x.find(fb.user);
    if (sx == staged_x.end()) {
      auto it = a_x_.find(fb.user);
      sx = staged_x.emplace(fb.user, it != a_x_.end() ? it->second : DesignState(item_dim_)).first;
    }
    sx->second.absorb(fb.x);
    auto sz = staged_z.find(fb.arm);
    if (sz == staged_z.end()) {
      auto it = a_z_.find(fb.arm);
      sz = staged_z.emplace(fb.arm, it != a_z_.end() ? it->second : DesignState(user_dim_)).first;
    }
    sz->second.absorb(fb.z);
    item_samples.push_back({gamma_ * fb.x, fb.reward});
    user_samples.push_back({(1.0 - gamma_) * fb.z, fb.reward});
  }
  GlmCoefficients tx = theta_x_;
  GlmCoefficients tz = theta_z_;
  tx.step(item_samples);
  tz.step(user_samples);

  theta_x_ = std::move(tx);
  theta_z_ = std::move(tz);
  for (auto& [k, d] : staged_x) a_x_.insert_or_assign(k, std::move(d));
  for (auto& [k, d] : staged_z) a_z_.insert_or_assign(k, std::move(d));
}

// ---------------------------------------------------------------------------

Vector outer_vec(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& z) {
  Vector v(x.size() * z.size());
  for (Eigen::Index j = 0; j < z.size(); ++j) v.segment(j * x.size(), x.size()) = x * z[j];
  return v;
}

BilinearSharedPolicy::BilinearSharedPolicy(std::size_t item_dim, std::size_t user_dim, double lr)
    : item_dim_(item_dim),
      user_dim_(user_dim),
      lr_(lr),
      theta_(Matrix::Zero(item_dim, user_dim)),
      w_(item_dim * user_dim) {
  if (!(lr > 0.0)) throw ConfigError("s_gblm_ucb: learning rate must be positive");
}

void BilinearSharedPolicy::reset() {
  theta_.setZero();
  w_.reset();
}

void BilinearSharedPolicy::set_theta(const Matrix& t) {
  require_dim(t.rows(), static_cast<long>(item_dim_), "bilinear theta rows");
  require_dim(t.cols(), static_cast<long>(user_dim_), "bilinear theta cols");
  theta_ = t;
}

double BilinearSharedPolicy::score_context(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& z,
                                           double beta) const {
  require_dim(x.size(), static_cast<long>(item_dim_), "s_gblm_ucb item context");
  require_dim(z.size(), static_cast<long>(user_dim_), "s_gblm_ucb user context");
  const double exploit = sigmoid(x.dot(theta_ * z));
  if (beta == 0.0) return exploit;
  return exploit + beta * w_.mahalanobis(outer_vec(x, z));
}

double BilinearSharedPolicy::score(const ArmTower& tower, const UserQuery& q, ArmId arm, std::uint64_t) const {
  return score_context(tower.arm_context(arm), q.z, q.beta);
}

double BilinearSharedPolicy::exploit(const ArmTower& tower, const UserQuery& q, ArmId arm,
                                     std::uint64_t) const {
  return score_context(tower.arm_context(arm), q.z, 0.0);
}

void BilinearSharedPolicy::update(std::span<const Feedback> batch) {
  if (batch.empty()) return;
  DesignState w = w_;
  Matrix grad = Matrix::Zero(theta_.rows(), theta_.cols());
  for (const auto& fb : batch) {
    require_dim(fb.x.size(), static_cast<long>(item_dim_), "s_gblm_ucb update item context");
    require_dim(fb.z.size(), static_cast<long>(user_dim_), "s_gblm_ucb update user context");
    w.absorb(outer_vec(fb.x, fb.z));
    grad.noalias() += (sigmoid(fb.x.dot(theta_ * fb.z)) - fb.reward) * fb.x * fb.z.transpose();
  }
  if (!grad.allFinite()) throw NumericError("s_gblm_ucb: non-finite gradient");
  theta_.noalias() -= lr_ * grad;
  w_ = std::move(w);
}

// ---------------------------------------------------------------------------

std::unique_ptr<Policy> make_policy(std::string_view name, std::size_t arm_dim, std::size_t user_dim,
                                    std::size_t mc_samples, const PolicyParams& params) {
  if (name == "random") return std::make_unique<RandomPolicy>();
  if (name == "greedy") return std::make_unique<GreedyPolicy>();
  if (name == "glm_ucb") return std::make_unique<DisjointGlmPolicy>(arm_dim, params.lr_glm, false);
  if (name == "n_glm_ucb") return std::make_unique<DisjointGlmPolicy>(arm_dim, params.lr_glm, true);
  if (name == "dropout_ucb") return std::make_unique<DropoutUcbPolicy>(mc_samples);
  if (name == "s_galm_ucb")
    return std::make_unique<AdditiveSharedPolicy>(arm_dim, user_dim, params.gamma, params.lr_glm);
  if (name == "s_gblm_ucb") return std::make_unique<BilinearSharedPolicy>(arm_dim, user_dim, params.lr_bilinear);
  throw ConfigError("unknown policy '" + std::string(name) + "'");
}

}  // namespace nb
