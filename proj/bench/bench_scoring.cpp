// Serial reference vs OpenMP kernel for candidate scoring.

#include <benchmark/benchmark.h>

#include <numeric>

#include "newsbandit/encoder.hpp"
#include "newsbandit/policy.hpp"
#include "newsbandit/scoring.hpp"

namespace {

struct Fixture {
  nb::EncoderModel encoder;
  nb::ItemTower tower;
  std::unique_ptr<nb::Policy> policy;
  nb::UserQuery query;
  std::vector<nb::ArmId> arms;

  Fixture(const std::string& name, std::size_t n_items)
      : encoder(random_base(n_items), 4), tower(encoder),
        policy(nb::make_policy(name, encoder.dim(), encoder.dim(), 5, {})) {
    for (nb::ItemId i = 0; i < 20; ++i) encoder.add_click(0, i);
    query = {0, encoder.encode_user(0), 0.1};
    arms.resize(n_items);
    std::iota(arms.begin(), arms.end(), nb::ArmId{0});
    // Warm the policy so designs and coefficients are non-trivial.
    std::vector<nb::Feedback> batch;
    for (nb::ArmId a = 0; a < 50; ++a) batch.push_back(nb::make_feedback(tower, 0, a, query.z, a % 3 == 0));
    policy->update(batch);
  }

  static nb::RowMatrix random_base(std::size_t n) {
    nb::RowMatrix m(static_cast<Eigen::Index>(n), 8);
    nb::Rng rng(3);
    std::normal_distribution<double> g;
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = g(rng);
    return m;
  }
};

template <bool Parallel>
void bm_score(benchmark::State& state, const char* policy) {
  Fixture f(policy, static_cast<std::size_t>(state.range(0)));
  const nb::ScoreRequest req{*f.policy, f.tower, f.query, 42};
  std::vector<double> out(f.arms.size());
  for (auto _ : state) {
    if constexpr (Parallel)
      nb::score_candidates_parallel(req, f.arms, out);
    else
      nb::score_candidates_serial(req, f.arms, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void bm_serial(benchmark::State& state, const char* policy) { bm_score<false>(state, policy); }
void bm_parallel(benchmark::State& state, const char* policy) { bm_score<true>(state, policy); }

}  // namespace

BENCHMARK_CAPTURE(bm_serial, gblm, "s_gblm_ucb")->Arg(500)->Arg(5000);
BENCHMARK_CAPTURE(bm_parallel, gblm, "s_gblm_ucb")->Arg(500)->Arg(5000);
BENCHMARK_CAPTURE(bm_serial, galm, "s_galm_ucb")->Arg(500)->Arg(5000);
BENCHMARK_CAPTURE(bm_parallel, galm, "s_galm_ucb")->Arg(500)->Arg(5000);
BENCHMARK_CAPTURE(bm_serial, dropout, "dropout_ucb")->Arg(500)->Arg(5000);
BENCHMARK_CAPTURE(bm_parallel, dropout, "dropout_ucb")->Arg(500)->Arg(5000);

BENCHMARK_MAIN();
