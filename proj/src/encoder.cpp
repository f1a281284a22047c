#include "newsbandit/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_set>

#include "newsbandit/error.hpp"

namespace nb {

namespace {

void check_rate(double rate) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout rate must lie in [0, 1)");
}

// Inverted dropout on the first n components of v.
void apply_dropout(Eigen::Ref<Vector> v, Eigen::Index n, double rate, Rng& rng) {
  if (rate <= 0.0) return;
  const double keep_scale = 1.0 / (1.0 - rate);
  for (Eigen::Index k = 0; k < n; ++k) v[k] = uniform01(rng) < rate ? 0.0 : v[k] * keep_scale;
}

}  // namespace

EncoderModel::EncoderModel(RowMatrix base_vectors, std::size_t n_users, EncoderOptions opts)
    : base_(std::move(base_vectors)), history_(n_users), opts_(opts) {
  if (base_.rows() == 0 || base_.cols() == 0) throw ConfigError("encoder: empty item table");
  check_rate(opts_.dropout_rate);
  if (opts_.history_cap == 0) throw ConfigError("encoder: history cap must be positive");
  if (!(opts_.learning_rate > 0.0)) throw ConfigError("encoder: learning rate must be positive");
  projection_ = Matrix::Identity(base_.cols(), base_.cols());
  raw_.resize(base_.rows(), base_.cols() + 1);
  raw_.leftCols(base_.cols()) = base_;
  raw_.col(base_.cols()).setOnes();
  rebuild_cache();
}

void EncoderModel::set_dropout_rate(double rate) {
  check_rate(rate);
  opts_.dropout_rate = rate;
}

void EncoderModel::set_projection(const Matrix& p) {
  require_dim(p.rows(), base_.cols(), "encoder projection rows");
  require_dim(p.cols(), base_.cols(), "encoder projection cols");
  projection_ = p;
  rebuild_cache();
}

void EncoderModel::rebuild_cache() {
  projected_.resize(base_.rows(), base_.cols() + 1);
  projected_.leftCols(base_.cols()) = base_ * projection_.transpose();
  projected_.col(base_.cols()).setOnes();
}

void EncoderModel::check_item(ItemId item) const {
  if (item >= n_items()) throw LookupError("unknown item id " + std::to_string(item));
}

void EncoderModel::check_user(UserId user) const {
  if (user >= n_users()) throw LookupError("unknown user id " + std::to_string(user));
}

ConstRow EncoderModel::item_embedding(ItemId item) const {
  check_item(item);
  return ConstRow(projected_.row(item).data(), projected_.cols());
}

ConstRow EncoderModel::raw_item(ItemId item) const {
  check_item(item);
  return ConstRow(raw_.row(item).data(), raw_.cols());
}

Vector EncoderModel::encode_item(ItemId item, Rng* rng) const {
  Vector x = item_embedding(item);
  if (rng != nullptr) apply_dropout(x, x.size() - 1, opts_.dropout_rate, *rng);
  return x;
}

Vector EncoderModel::encode_user(UserId user, Rng* rng) const {
  check_user(user);
  const auto& h = history_[user];
  Vector z = Vector::Zero(static_cast<Eigen::Index>(dim()));
  if (!h.empty()) {
    // Same as averaging encode_item(i, rng) over the history, without the
    // per-item temporaries.
    const Eigen::Index n = z.size() - 1;
    const double rate = rng != nullptr ? opts_.dropout_rate : 0.0;
    const double keep_scale = 1.0 / (1.0 - rate);
    for (ItemId i : h) {
      const double* row = projected_.row(i).data();
      if (rate > 0.0) {
        for (Eigen::Index k = 0; k < n; ++k)
          if (!(uniform01(*rng) < rate)) z[k] += row[k] * keep_scale;
      } else {
        for (Eigen::Index k = 0; k < n; ++k) z[k] += row[k];
      }
    }
    z /= static_cast<double>(h.size());
  }
  z[z.size() - 1] = 1.0;
  return z;
}

double EncoderModel::predict_click(UserId user, ItemId item, Rng* rng) const {
  check_item(item);
  const Vector z = encode_user(user, rng);
  const Vector x = encode_item(item, rng);
  return z.dot(x);
}

EncoderModel::McStats EncoderModel::mc_dropout_stats(UserId user, ItemId item, Rng& rng) const {
  if (opts_.mc_samples < 2) throw ConfigError("mc_samples must be at least 2");
  McStats st{0.0, 0.0, {}};
  st.samples.reserve(opts_.mc_samples);
  for (std::size_t s = 0; s < opts_.mc_samples; ++s) st.samples.push_back(predict_click(user, item, &rng));
  const double n = static_cast<double>(st.samples.size());
  for (double v : st.samples) st.mean += v;
  st.mean /= n;
  double var = 0.0;
  for (double v : st.samples) var += (v - st.mean) * (v - st.mean);
  st.stddev = std::sqrt(var / n);
  return st;
}

const std::deque<ItemId>& EncoderModel::history(UserId user) const {
  check_user(user);
  return history_[user];
}

void EncoderModel::add_click(UserId user, ItemId item) {
  check_user(user);
  check_item(item);
  auto& h = history_[user];
  h.push_back(item);
  while (h.size() > opts_.history_cap) h.pop_front();
}

void EncoderModel::clear_history(UserId user) {
  check_user(user);
  history_[user].clear();
}

Vector EncoderModel::history_mean_base(UserId user, const ItemId* exclude) const {
  const auto& h = history_[user];
  Vector mean = Vector::Zero(base_.cols());
  bool skipped = false;
  std::size_t n = 0;
  for (ItemId i : h) {
    if (exclude != nullptr && !skipped && i == *exclude) {
      skipped = true;
      continue;
    }
    mean += base_.row(i).transpose();
    ++n;
  }
  if (n > 0) mean /= static_cast<double>(n);
  return mean;
}

double EncoderModel::loss(std::span<const Interaction> slice) const {
  if (slice.empty()) return 0.0;
  double total = 0.0;
  for (const auto& s : slice) {
    check_user(s.user);
    check_item(s.arm);
    const Vector h = history_mean_base(s.user, &s.arm);
    const Vector b = base_.row(s.arm).transpose();
    const double score = (projection_ * b).dot(projection_ * h) + 1.0;
    total += bce(sigmoid(score), s.label);
  }
  return total / static_cast<double>(slice.size());
}

double EncoderModel::train(std::span<const Interaction> slice) {
  if (slice.empty()) throw PreconditionError("train_encoder: empty interaction slice");
  const double before = loss(slice);
  if (!std::isfinite(before)) throw NumericError("train_encoder: non-finite loss");

  Matrix p = projection_;
  for (const auto& s : slice) {
    const Vector h = history_mean_base(s.user, &s.arm);
    const Vector b = base_.row(s.arm).transpose();
    const Vector xp = p * b;
    const Vector zp = p * h;
    const double g = sigmoid(xp.dot(zp) + 1.0) - s.label;
    if (g == 0.0) continue;
    p.noalias() -= opts_.learning_rate * g * (zp * b.transpose() + xp * h.transpose());
  }
  if (!p.allFinite()) throw NumericError("train_encoder: non-finite projection after update");
  projection_ = std::move(p);
  rebuild_cache();
  return before;
}

TopicModel::TopicModel(std::size_t n_topics, std::size_t dim, std::uint64_t seed, double learning_rate,
                       double dropout_rate, double init_scale)
    : lr_(learning_rate), dropout_rate_(dropout_rate) {
  if (n_topics == 0 || dim < 2) throw ConfigError("topic model: need at least one topic and dim >= 2");
  check_rate(dropout_rate);
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, init_scale);
  vecs_.resize(static_cast<Eigen::Index>(n_topics), static_cast<Eigen::Index>(dim - 1));
  for (Eigen::Index r = 0; r < vecs_.rows(); ++r)
    for (Eigen::Index c = 0; c < vecs_.cols(); ++c) vecs_(r, c) = normal(rng);
  rebuild_cache();
}

TopicModel::TopicModel(RowMatrix initial, double learning_rate, double dropout_rate)
    : vecs_(std::move(initial)), lr_(learning_rate), dropout_rate_(dropout_rate) {
  if (vecs_.rows() == 0 || vecs_.cols() == 0) throw ConfigError("topic model: empty initial table");
  check_rate(dropout_rate);
  rebuild_cache();
}

void TopicModel::set_dropout_rate(double rate) {
  check_rate(rate);
  dropout_rate_ = rate;
}

void TopicModel::rebuild_cache() {
  embedded_.resize(vecs_.rows(), vecs_.cols() + 1);
  embedded_.leftCols(vecs_.cols()) = vecs_;
  embedded_.col(vecs_.cols()).setOnes();
}

void TopicModel::check_topic(TopicId topic) const {
  if (topic >= n_topics()) throw LookupError("unknown topic id " + std::to_string(topic));
}

ConstRow TopicModel::topic_embedding(TopicId topic) const {
  check_topic(topic);
  return ConstRow(embedded_.row(topic).data(), embedded_.cols());
}

Vector TopicModel::encode_topic(TopicId topic, Rng* rng) const {
  Vector t = topic_embedding(topic);
  if (rng != nullptr) apply_dropout(t, t.size() - 1, dropout_rate_, *rng);
  return t;
}

double TopicModel::score_topic(const EncoderModel& users, UserId user, TopicId topic) const {
  const Vector z = users.encode_user(user);
  require_dim(z.size(), static_cast<long>(dim()), "score_topic");
  return z.dot(topic_embedding(topic));
}

double TopicModel::loss(const EncoderModel& users, std::span<const Interaction> examples) const {
  if (examples.empty()) return 0.0;
  double total = 0.0;
  for (const auto& e : examples) total += bce(sigmoid(score_topic(users, e.user, e.arm)), e.label);
  return total / static_cast<double>(examples.size());
}

void TopicModel::train_labelled(const EncoderModel& users, std::span<const Interaction> examples) {
  if (examples.empty()) throw PreconditionError("train_topic: empty slice");
  const double before = loss(users, examples);
  if (!std::isfinite(before)) throw NumericError("train_topic: non-finite loss");
  RowMatrix v = vecs_;
  for (const auto& e : examples) {
    check_topic(e.arm);
    const Vector z = users.encode_user(e.user);
    const auto zp = z.head(vecs_.cols());
    const double s = zp.dot(v.row(e.arm).transpose()) + 1.0;
    const double g = sigmoid(s) - e.label;
    v.row(e.arm) -= lr_ * g * zp.transpose();
  }
  if (!v.allFinite()) throw NumericError("train_topic: non-finite topic vectors after update");
  vecs_ = std::move(v);
  rebuild_cache();
}

std::size_t TopicModel::train(const EncoderModel& users, std::span<const Interaction> slice, Rng& rng) {
  if (slice.empty()) throw PreconditionError("train_topic: empty slice");
  std::vector<Interaction> examples;
  for (const auto& s : slice) {
    if (s.label < 0.5) continue;
    check_topic(s.arm);
    std::unordered_set<TopicId> clicked;
    for (const auto& o : slice)
      if (o.user == s.user && o.label >= 0.5) clicked.insert(o.arm);
    std::vector<TopicId> pool;
    for (TopicId t = 0; t < n_topics(); ++t)
      if (!clicked.contains(t)) pool.push_back(t);
    examples.push_back(s);
    if (!pool.empty()) {
      std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
      examples.push_back({s.user, pool[pick(rng)], 0.0});
    }
  }
  if (!examples.empty()) train_labelled(users, examples);
  return examples.size();
}

double TopicTower::predict(UserId user, ArmId arm, Rng* rng) const {
  const Vector z = users_.encode_user(user, rng);
  const Vector t = topics_.encode_topic(arm, rng);
  return z.dot(t);
}

}  // namespace nb
