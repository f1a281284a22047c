#pragma once

#include <cstddef>
#include <deque>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "newsbandit/glm.hpp"
#include "newsbandit/rng.hpp"
#include "newsbandit/types.hpp"

namespace nb {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstRow = Eigen::Map<const Vector>;

/// (user, arm, label) triple used to train the towers. Labels are {0,1} in the
/// bandit loop; fractional labels are accepted so tests can probe the gradient.
struct Interaction {
  UserId user;
  ArmId arm;
  double label;
};

struct EncoderOptions {
  double dropout_rate = 0.2;
  std::size_t mc_samples = 5;
  std::size_t history_cap = 50;
  double learning_rate = 0.01;
};

/// Desk-scale two-tower model: frozen item base vectors, a trainable linear
/// projection shared by both towers, and a mean-pooled user tower over the
/// user's most recent clicks. Embeddings carry a trailing bias slot fixed to 1.
class EncoderModel {
 public:
  EncoderModel(RowMatrix base_vectors, std::size_t n_users, EncoderOptions opts = {});

  std::size_t dim() const noexcept { return static_cast<std::size_t>(base_.cols()) + 1; }
  std::size_t n_items() const noexcept { return static_cast<std::size_t>(base_.rows()); }
  std::size_t n_users() const noexcept { return history_.size(); }
  const EncoderOptions& options() const noexcept { return opts_; }
  double dropout_rate() const noexcept { return opts_.dropout_rate; }
  void set_dropout_rate(double rate);

  const Matrix& projection() const noexcept { return projection_; }
  void set_projection(const Matrix& p);
  const RowMatrix& base_vectors() const noexcept { return base_; }

  /// Deterministic neural item embedding (cached; valid until the projection changes).
  ConstRow item_embedding(ItemId item) const;
  /// Table vector with bias appended, no projection (the non-neural GLM context).
  ConstRow raw_item(ItemId item) const;

  /// Pass `rng` to enable inverted dropout on the pre-bias components.
  Vector encode_item(ItemId item, Rng* rng = nullptr) const;
  Vector encode_user(UserId user, Rng* rng = nullptr) const;
  double predict_click(UserId user, ItemId item, Rng* rng = nullptr) const;

  struct McStats {
    double mean;
    double stddev;  // population (divide by n)
    std::vector<double> samples;
  };
  McStats mc_dropout_stats(UserId user, ItemId item, Rng& rng) const;

  const std::deque<ItemId>& history(UserId user) const;
  void add_click(UserId user, ItemId item);
  void clear_history(UserId user);

  /// One SGD pass of logistic loss on sigmoid(predict_click) over `slice`,
  /// updating only the projection. The user tower for each sample excludes one
  /// occurrence of the target item from the history. Returns the mean loss
  /// measured before the pass. Throws on an empty slice; on a non-finite loss the
  /// projection is left untouched and NumericError is raised.
  double train(std::span<const Interaction> slice);

  /// Mean BCE of sigmoid(predict_click) over `slice` (deterministic towers).
  double loss(std::span<const Interaction> slice) const;

 private:
  void check_item(ItemId item) const;
  void check_user(UserId user) const;
  void rebuild_cache();
  Vector history_mean_base(UserId user, const ItemId* exclude) const;

  RowMatrix base_;
  Matrix projection_;
  RowMatrix projected_;  // n_items x dim, bias column included
  RowMatrix raw_;        // n_items x dim
  std::vector<std::deque<ItemId>> history_;
  EncoderOptions opts_;
};

/// Trainable topic vectors scored against the item model's user tower.
class TopicModel {
 public:
  TopicModel(std::size_t n_topics, std::size_t dim, std::uint64_t seed, double learning_rate = 0.01,
             double dropout_rate = 0.2, double init_scale = 0.1);
  TopicModel(RowMatrix initial, double learning_rate = 0.01, double dropout_rate = 0.2);

  std::size_t dim() const noexcept { return static_cast<std::size_t>(vecs_.cols()) + 1; }
  std::size_t n_topics() const noexcept { return static_cast<std::size_t>(vecs_.rows()); }
  double dropout_rate() const noexcept { return dropout_rate_; }
  void set_dropout_rate(double rate);

  ConstRow topic_embedding(TopicId topic) const;
  Vector encode_topic(TopicId topic, Rng* rng = nullptr) const;

  /// z . [t; 1]
  double score_topic(const EncoderModel& users, UserId user, TopicId topic) const;

  /// Builds the 1:1 negative-sampled set from the positives in `slice` (a
  /// uniformly drawn topic the user did not click in the slice, label 0) and
  /// runs one SGD pass over it, updating topic vectors only. Returns the number
  /// of training examples used.
  std::size_t train(const EncoderModel& users, std::span<const Interaction> slice, Rng& rng);

  /// One SGD pass over explicitly labelled examples.
  void train_labelled(const EncoderModel& users, std::span<const Interaction> examples);
  double loss(const EncoderModel& users, std::span<const Interaction> examples) const;

 private:
  void check_topic(TopicId topic) const;
  void rebuild_cache();

  RowMatrix vecs_;
  RowMatrix embedded_;
  double lr_;
  double dropout_rate_;
};

/// Read-only view that a policy scores against: arm contexts x, user context z
/// and (stochastic) click predictions. One implementation per stage.
class ArmTower {
 public:
  virtual ~ArmTower() = default;
  virtual std::size_t arm_dim() const = 0;
  virtual std::size_t user_dim() const = 0;
  virtual std::size_t arm_count() const = 0;
  virtual ConstRow arm_context(ArmId arm) const = 0;
  virtual ConstRow raw_context(ArmId arm) const = 0;
  virtual Vector user_context(UserId user) const = 0;
  virtual double predict(UserId user, ArmId arm, Rng* rng) const = 0;
};

class ItemTower final : public ArmTower {
 public:
  explicit ItemTower(const EncoderModel& model) : model_(model) {}
  std::size_t arm_dim() const override { return model_.dim(); }
  std::size_t user_dim() const override { return model_.dim(); }
  std::size_t arm_count() const override { return model_.n_items(); }
  ConstRow arm_context(ArmId arm) const override { return model_.item_embedding(arm); }
  ConstRow raw_context(ArmId arm) const override { return model_.raw_item(arm); }
  Vector user_context(UserId user) const override { return model_.encode_user(user); }
  double predict(UserId user, ArmId arm, Rng* rng) const override {
    return model_.predict_click(user, arm, rng);
  }

 private:
  const EncoderModel& model_;
};

class TopicTower final : public ArmTower {
 public:
  TopicTower(const TopicModel& topics, const EncoderModel& users) : topics_(topics), users_(users) {}
  std::size_t arm_dim() const override { return topics_.dim(); }
  std::size_t user_dim() const override { return users_.dim(); }
  std::size_t arm_count() const override { return topics_.n_topics(); }
  ConstRow arm_context(ArmId arm) const override { return topics_.topic_embedding(arm); }
  ConstRow raw_context(ArmId arm) const override { return topics_.topic_embedding(arm); }
  Vector user_context(UserId user) const override { return users_.encode_user(user); }
  double predict(UserId user, ArmId arm, Rng* rng) const override;

 private:
  const TopicModel& topics_;
  const EncoderModel& users_;
};

}  // namespace nb
