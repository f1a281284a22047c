#include "newsbandit/scoring.hpp"

#include <algorithm>
#include <exception>
#include <numeric>
#include <string>

#include "newsbandit/error.hpp"
#include "newsbandit/rng.hpp"

namespace nb {

BudgetLedger::BudgetLedger(std::size_t budget) : budget_(budget) {
  if (budget == 0) throw ConfigError("budget must be positive");
}

void BudgetLedger::charge(std::size_t evaluations) {
  if (evaluations > remaining())
    throw BudgetError("budget exhausted: " + std::to_string(spent_) + " + " + std::to_string(evaluations) +
                      " > " + std::to_string(budget_));
  spent_ += evaluations;
}

std::uint64_t candidate_stream(std::uint64_t stream_seed, ArmId arm) noexcept {
  return mix_seed(stream_seed, static_cast<std::uint64_t>(arm));
}

void score_candidates_serial(const ScoreRequest& req, std::span<const ArmId> arms, std::span<double> out) {
  require_dim(static_cast<long>(out.size()), static_cast<long>(arms.size()), "score output");
  for (std::size_t k = 0; k < arms.size(); ++k)
    out[k] = req.policy.score(req.tower, req.query, arms[k], candidate_stream(req.stream_seed, arms[k]));
}

void score_candidates_parallel(const ScoreRequest& req, std::span<const ArmId> arms, std::span<double> out) {
  require_dim(static_cast<long>(out.size()), static_cast<long>(arms.size()), "score output");
  const auto n = static_cast<std::ptrdiff_t>(arms.size());
  // Exceptions must not escape an OpenMP region; capture the first and rethrow.
  std::exception_ptr failure;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t k = 0; k < n; ++k) {
    try {
      out[k] = req.policy.score(req.tower, req.query, arms[k], candidate_stream(req.stream_seed, arms[k]));
    } catch (...) {
#pragma omp critical(nb_score_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
}

std::vector<double> score_candidates(const ScoreRequest& req, std::span<const ArmId> arms, BudgetLedger& ledger,
                                     bool parallel) {
  ledger.charge(arms.size());
  std::vector<double> out(arms.size());
  if (parallel && arms.size() > 1)
    score_candidates_parallel(req, arms, out);
  else
    score_candidates_serial(req, arms, out);
  return out;
}

std::size_t argmax_lowest_id(std::span<const ArmId> arms, std::span<const double> scores) {
  if (arms.empty()) throw PreconditionError("argmax over an empty candidate set");
  std::size_t best = 0;
  for (std::size_t k = 1; k < arms.size(); ++k)
    if (scores[k] > scores[best] || (scores[k] == scores[best] && arms[k] < arms[best])) best = k;
  return best;
}

std::vector<std::size_t> top_k_lowest_id(std::span<const ArmId> arms, std::span<const double> scores,
                                         std::size_t k) {
  std::vector<std::size_t> idx(arms.size());
  std::iota(idx.begin(), idx.end(), 0);
  k = std::min(k, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (scores[a] != scores[b]) return scores[a] > scores[b];
                      return arms[a] < arms[b];
                    });
  idx.resize(k);
  return idx;
}

}  // namespace nb
