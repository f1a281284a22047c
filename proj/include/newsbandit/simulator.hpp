#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "newsbandit/encoder.hpp"
#include "newsbandit/rng.hpp"
#include "newsbandit/types.hpp"

namespace nb {

/// Threshold reported for the full-scale news simulator. Kept for reference
/// only; synthetic and trained simulators always pick their own threshold.
inline constexpr double kReferenceNewsThreshold = 0.38414;
inline constexpr double kDefaultFlipProb = 0.1;

/// Latent-vector user-choice model: click probability sigmoid(<u, i>), turned
/// into a reward by thresholding and flipping.
struct GroundTruthModel {
  RowMatrix user_vecs;
  RowMatrix item_vecs;
  double threshold = 0.5;
  double flip_prob = kDefaultFlipProb;
  std::uint64_t seed = 0;

  std::size_t dim() const noexcept { return static_cast<std::size_t>(item_vecs.cols()); }
  std::size_t n_users() const noexcept { return static_cast<std::size_t>(user_vecs.rows()); }
  std::size_t n_items() const noexcept { return static_cast<std::size_t>(item_vecs.rows()); }
};

double click_prob(const GroundTruthModel& model, UserId user, ItemId item);

/// 1{click_prob >= threshold}, before any flipping.
int threshold_reward(const GroundTruthModel& model, UserId user, ItemId item);

/// Thresholded rewards for `recommended`, each flipped independently with
/// probability flip_prob.
std::vector<int> oracle(const GroundTruthModel& model, UserId user, std::span<const ItemId> recommended, Rng& rng);

struct LoggedInteraction {
  std::uint32_t impression;
  UserId user;
  ItemId item;
  int label;
};

/// Empirical exposure probability per logged (user, item):
/// #impressions of u containing i / #impressions of u.
class PropensityTable {
 public:
  std::optional<double> get(UserId user, ItemId item) const;
  void set(UserId user, ItemId item, double p);
  std::size_t size() const noexcept { return table_.size(); }
  const std::unordered_map<std::uint64_t, double>& raw() const noexcept { return table_; }

  static std::uint64_t key(UserId user, ItemId item) noexcept {
    return (static_cast<std::uint64_t>(user) << 32) | item;
  }

 private:
  std::unordered_map<std::uint64_t, double> table_;
};

PropensityTable estimate_propensity(std::span<const LoggedInteraction> logs);

/// Self-normalised inverse-propensity mean: sum(bce_j / P_j) / sum(1 / P_j).
double hajek_loss(std::span<const double> bce_values, std::span<const double> propensities);

struct SimTrainOptions {
  std::size_t dim = 8;
  std::size_t negatives = 4;  // K
  std::size_t epochs = 30;
  double learning_rate = 0.05;
  double init_scale = 0.1;
  bool debiased = true;  // false: every propensity treated as 1
  std::uint64_t seed = 1;
};

struct SimTrainResult {
  GroundTruthModel model;  // threshold left at 0.5 until select_threshold
  std::size_t groups = 0;
  std::size_t fallback_groups = 0;  // positives paired with a global negative
  double final_loss = 0.0;          // sum of per-group Hajek losses, last epoch
};

/// Fits user/item vectors by SGD on the Hajek-debiased BCE. Each positive is
/// grouped with K negatives from its impression (with replacement if the
/// impression has fewer; an unweighted global negative if it has none).
SimTrainResult train_simulator_debiased(std::span<const LoggedInteraction> logs, const PropensityTable& propensities,
                                        std::size_t n_users, std::size_t n_items, const SimTrainOptions& opts);

/// Expected BCE of `model` against the true probabilities of `truth` under
/// uniform exposure over all (user, item) pairs.
double uniform_exposure_bce(const GroundTruthModel& model, const GroundTruthModel& truth);

struct ClassificationStats {
  double precision;
  double recall;
  double f_score;
};

ClassificationStats classify(std::span<const double> probs, std::span<const int> labels, double threshold);

/// Threshold maximising F = 2PR/(P+R) among the distinct predicted values;
/// ties go to the smaller threshold. Needs both classes present.
double select_threshold(std::span<const double> probs, std::span<const int> labels);
double select_threshold(const GroundTruthModel& model, std::span<const LoggedInteraction> validation);

}  // namespace nb
