#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>
#include <vector>

#include "mmrank/driver.h"
#include "mmrank/estep.h"
#include "mmrank/mstep.h"
#include "mmrank/report.h"
#include "test_util.h"

using namespace mmrank;
using mmrank::testing::geometric_support;

namespace {

// Two subgroups with opposite preferences over V = (4, 3).
ModelParams two_group_truth() {
  ModelParams p;
  p.alpha = {0.4, 0.3};
  p.fixed = {false, false};
  p.theta = {{geometric_support({0, 1, 2, 3}, 0.3), geometric_support({3, 2, 1, 0}, 0.3)},
             {geometric_support({0, 1, 2}, 0.3), geometric_support({2, 1, 0}, 0.3)}};
  return p;
}

RankDataset small_dataset(std::uint64_t seed, int T = 150) {
  const std::vector<int> levels{2, 2};
  return generate_dataset(two_group_truth(), T, levels, seed).data;
}

FitConfig small_config(int K) {
  FitConfig c;
  c.num_subgroups = K;
  c.outer_tol = 1e-8;
  return c;
}

// Same individuals in reverse row order.
RankDataset reversed(const RankDataset& data) {
  std::vector<int> rows(data.num_individuals());
  std::iota(rows.rbegin(), rows.rend(), 0);
  return data.select(rows);
}

}  // namespace

TEST_CASE("K=1 fit is the Plackett-Luce maximum likelihood estimate") {
  Rng rng = make_rng(2024);
  const std::vector<double> truth{0.5, 0.3, 0.2};
  std::vector<Ranking> obs;
  for (int i = 0; i < 500; ++i) obs.push_back(pl_sample(truth, 3, rng));
  const RankDataset data({3}, obs);

  FitConfig c = small_config(1);
  const FitResult f = fit(data, c);
  REQUIRE(f.converged);

  const auto mle = mmrank::testing::grid_search_mle_v3(obs);
  for (int v = 0; v < 3; ++v) CHECK(std::abs(f.params.theta[0][0][v] - mle[v]) <= 2e-3);

  double loglik = 0.0;
  for (const Ranking& x : obs) loglik += pl_log_mass(f.params.theta[0][0], x);
  CHECK(std::abs(f.elbo() - loglik) <= 1e-8);

  const auto grad = alpha_gradient(data, f.params, f.var);
  REQUIRE(grad.size() == 1);
  CHECK(grad[0] == 0.0);
}

TEST_CASE("fit is deterministic and independent of the thread count") {
  const RankDataset data = small_dataset(5);
  FitConfig c = small_config(2);
  c.seed = 9;
  const FitResult a = fit(data, c);
  const FitResult b = fit(data, c);
  c.num_threads = 3;
  const FitResult p = fit(data, c);
  CHECK(a.params == b.params);
  CHECK(a.var == b.var);
  CHECK(a.elbo_trace == b.elbo_trace);
  CHECK(a.params == p.params);
  CHECK(a.var == p.var);
  CHECK(a.elbo_trace == p.elbo_trace);

  c.seed = 10;
  c.num_threads = 1;
  CHECK_FALSE(fit(data, c).params == a.params);
}

TEST_CASE("outer ELBO trace is non-decreasing") {
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    const RankDataset data = small_dataset(seed);
    FitConfig c = small_config(static_cast<int>(2 + seed % 2));
    c.seed = seed;
    c.dirichlet_a = seed % 2 ? 0.6 : 1.5;
    const FitResult f = fit(data, c);
    CAPTURE(seed);
    CHECK(f.iters == static_cast<int>(f.elbo_trace.size()));
    for (std::size_t t = 1; t < f.elbo_trace.size(); ++t) {
      CHECK(f.elbo_trace[t] >= f.elbo_trace[t - 1] - 1e-6);
    }
  }
}

TEST_CASE("fixed subgroups keep their support vectors") {
  const RankDataset data = small_dataset(3);
  FitConfig c = small_config(4);
  c.fixed_subgroups = {{FixedSubgroupSpec::Kind::kUniform, 0.01},
                       {FixedSubgroupSpec::Kind::kPresentationOrdered, 0.05}};
  const FitResult f = fit(data, c);
  REQUIRE(f.params.fixed == std::vector<bool>{false, false, true, true});
  for (int j = 0; j < data.num_variables(); ++j) {
    const int V = data.num_alternatives(j);
    CHECK(f.params.theta[j][2] == make_fixed_theta(c.fixed_subgroups[0], V));
    CHECK(f.params.theta[j][3] == make_fixed_theta(c.fixed_subgroups[1], V));
  }
  // The fixed subgroups' membership weights are estimated.
  CHECK(f.params.alpha[2] != c.initial_alpha);
  CHECK(f.params.alpha[3] != c.initial_alpha);
}

TEST_CASE("multi_start_fit keeps the best of its random starts") {
  const RankDataset data = small_dataset(17, 80);
  FitConfig c = small_config(2);
  c.outer_tol = 1e-6;
  const std::vector<double> grid{0.6, 1.5};
  const MultiStartResult r = multi_start_fit(data, c, 3, grid);
  REQUIRE(r.elbos.size() == 6);
  CHECK(r.failed_fits == 0);
  CHECK(r.best.elbo() == *std::max_element(r.elbos.begin(), r.elbos.end()));

  // The winning start can be reproduced as a single fit.
  FitConfig single = c;
  single.dirichlet_a = r.best_dirichlet_a;
  const std::size_t a_index = r.best_dirichlet_a == 0.6 ? 0 : 1;
  single.seed = derive_seed(c.seed, 2, a_index, static_cast<std::uint64_t>(r.best_restart));
  CHECK(fit(data, single).params == r.best.params);

  FitConfig par = c;
  par.num_threads = 4;
  const MultiStartResult p = multi_start_fit(data, par, 3, grid);
  CHECK(p.elbos == r.elbos);
  CHECK(p.best.params == r.best.params);

  CHECK_THROWS_AS(multi_start_fit(data, c, 0, grid), std::invalid_argument);
  CHECK_THROWS_AS(multi_start_fit(data, c, 1, std::vector<double>{}), std::invalid_argument);
}

TEST_CASE("configuration validation") {
  const RankDataset data = small_dataset(1, 20);
  auto rejects = [&](FitConfig c) { CHECK_THROWS_AS(fit(data, c), std::invalid_argument); };
  FitConfig c = small_config(0);
  rejects(c);
  c = small_config(1);
  c.fixed_subgroups = {{}};
  rejects(c);
  c = small_config(2);
  c.outer_tol = 0.0;
  rejects(c);
  c = small_config(2);
  c.estep_tol = -1.0;
  rejects(c);
  c = small_config(2);
  c.dirichlet_a = 0.0;
  rejects(c);
  c = small_config(2);
  c.init = InitKind::kProvided;
  rejects(c);
  c.initial_params = two_group_truth();
  c.num_subgroups = 3;
  rejects(c);
  c = small_config(2);
  c.schedule.base = 1.0;
  rejects(c);
  c = small_config(2);
  c.line_search.tau0 = 1.0;
  rejects(c);

  c = small_config(2);
  c.init = InitKind::kProvided;
  c.initial_params = two_group_truth();
  CHECK_NOTHROW(fit(data, c));
}

TEST_CASE("random_init draws interior support vectors and places fixed groups last") {
  const RankDataset data = small_dataset(1, 20);
  FitConfig c = small_config(3);
  c.fixed_subgroups = {{FixedSubgroupSpec::Kind::kUniform, 0.01}};
  c.initial_alpha = 0.7;
  const ModelParams p = random_init(data, c);
  CHECK_NOTHROW(validate_params(p, data));
  CHECK(p.alpha == std::vector<double>(3, 0.7));
  CHECK(p.fixed == std::vector<bool>{false, false, true});
  CHECK(p.theta[0][2] == std::vector<double>(4, 0.25));
  CHECK(p == random_init(data, c));
  c.seed = 2;
  CHECK_FALSE(p == random_init(data, c));
}

TEST_CASE("two-step initialization") {
  SUBCASE("identical individuals give the same support vectors in both runs") {
    const Ranking x{{2, 0}, 4};
    const Ranking y{{1}, 3};
    std::vector<Ranking> obs;
    for (int i = 0; i < 40; ++i) {
      obs.push_back(x);
      obs.push_back(y);
    }
    const RankDataset data({4, 3}, obs);
    FitConfig c = small_config(2);
    c.init = InitKind::kTwoStep;
    const TwoStepResult r = two_step_fit(data, c);
    for (int j = 0; j < 2; ++j) {
      for (int k = 0; k < 2; ++k) {
        for (std::size_t v = 0; v < r.first.params.theta[j][k].size(); ++v) {
          CHECK(std::abs(r.first.params.theta[j][k][v] - r.second.params.theta[j][k][v]) <= 1e-4);
        }
      }
    }
    CHECK(two_step_init(data, c) == r.second.params);
    CHECK(fit(data, c).params == r.second.params);
  }

  SUBCASE("the second run usually reaches a larger ELBO") {
    int better = 0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      const RankDataset data = small_dataset(100 + seed, 100);
      FitConfig c = small_config(2);
      c.seed = seed;
      const TwoStepResult r = two_step_fit(data, c);
      better += r.second.elbo() >= r.first.elbo();
    }
    CHECK(better >= 16);
  }
}

TEST_CASE("label permutation equivariance") {
  const RankDataset data = small_dataset(8);
  FitConfig c = small_config(3);
  c.seed = 4;
  c.initial_alpha = 0.3;
  // Summation order differs between labelings, so results agree up to the
  // solver tolerances over a bounded run.
  c.max_outer_iters = 30;
  const ModelParams start = random_init(data, c);
  const std::vector<int> perm{2, 0, 1};
  ModelParams permuted = start;
  for (int k = 0; k < 3; ++k) {
    permuted.alpha[k] = start.alpha[perm[k]];
    for (int j = 0; j < 2; ++j) permuted.theta[j][k] = start.theta[j][perm[k]];
  }
  const FitResult a = run_em(data, c, start);
  const FitResult b = run_em(data, c, permuted);
  CHECK(a.iters == b.iters);
  for (int k = 0; k < 3; ++k) {
    CHECK(b.params.alpha[k] == doctest::Approx(a.params.alpha[perm[k]]).epsilon(1e-6));
    for (int j = 0; j < 2; ++j) {
      for (std::size_t v = 0; v < a.params.theta[j][k].size(); ++v) {
        CHECK(std::abs(b.params.theta[j][k][v] - a.params.theta[j][perm[k]][v]) <= 1e-7);
      }
    }
  }
}

TEST_CASE("held-out ELBO on the training set matches the training ELBO") {
  const RankDataset data = small_dataset(12);
  FitConfig c = small_config(2);
  c.estep_tol = 1e-10;
  const HeldOutResult h = held_out(data, data, c);
  CHECK(std::abs(h.test_elbo - h.train_fit.elbo()) <= 1e-6 * std::abs(h.train_fit.elbo()));
  CHECK(held_out_elbo(data, data, c) == h.test_elbo);

  const RankDataset other({4, 4}, {Ranking{{0}, 4}, Ranking{{1}, 4}});
  CHECK_THROWS_AS(held_out(data, other, c), std::invalid_argument);
}

TEST_CASE("split_half partitions individuals independently of row order") {
  const RankDataset data = small_dataset(2, 101);
  const auto [train, test] = split_half(data, 77);
  CHECK(train.size() == 50);
  CHECK(test.size() == 51);
  std::set<int> all(train.begin(), train.end());
  all.insert(test.begin(), test.end());
  CHECK(all.size() == 101);

  const RankDataset rev = reversed(data);
  const auto [train_r, test_r] = split_half(rev, 77);
  for (std::size_t n = 0; n < train.size(); ++n) CHECK(rev.id(train_r[n]) == data.id(train[n]));
  for (std::size_t n = 0; n < test.size(); ++n) CHECK(rev.id(test_r[n]) == data.id(test[n]));

  CHECK(split_half(data, 78).first != train);
}

TEST_CASE("select_k") {
  const RankDataset data = small_dataset(21, 120);
  FitConfig c = small_config(1);
  c.outer_tol = 1e-6;

  const std::vector<int> one{1};
  const SelectKResult single = select_k(data, one, 2, 5, c);
  CHECK(single.best_k == 1);
  REQUIRE(single.table.size() == 1);
  CHECK(single.table[0].best_restart >= 0);

  const std::vector<int> ks{1, 2, 3};
  const SelectKResult r = select_k(data, ks, 2, 5, c);
  REQUIRE(r.table.size() == 3);
  double best = -INFINITY;
  for (std::size_t n = 0; n < ks.size(); ++n) {
    CHECK(r.table[n].num_subgroups == ks[n]);
    CHECK(r.table[n].failed_fits == 0);
    CHECK(r.table[n].best_params.num_subgroups() == ks[n]);
    best = std::max(best, r.table[n].best_held_out_elbo);
  }
  CHECK(r.table[static_cast<std::size_t>(r.best_k - 1)].best_held_out_elbo == best);

  const SelectKResult rev = select_k(reversed(data), ks, 2, 5, c);
  CHECK(rev.best_k == r.best_k);
  for (std::size_t n = 0; n < ks.size(); ++n) {
    CHECK(rev.table[n].best_held_out_elbo == r.table[n].best_held_out_elbo);
    CHECK(rev.table[n].best_params == r.table[n].best_params);
  }

  c.num_threads = 3;
  const SelectKResult par = select_k(data, ks, 2, 5, c);
  for (std::size_t n = 0; n < ks.size(); ++n) {
    CHECK(par.table[n].best_held_out_elbo == r.table[n].best_held_out_elbo);
  }

  CHECK_THROWS_AS(select_k(data, std::vector<int>{}, 2, 5, c), std::invalid_argument);
  CHECK_THROWS_AS(select_k(data, ks, 0, 5, c), std::invalid_argument);
}

TEST_CASE("empirical_quantile interpolates between order statistics") {
  const std::vector<double> x{4.0, 1.0, 3.0, 2.0};
  CHECK(empirical_quantile(x, 0.0) == 1.0);
  CHECK(empirical_quantile(x, 1.0) == 4.0);
  CHECK(empirical_quantile(x, 0.5) == doctest::Approx(2.5));
  CHECK(empirical_quantile(x, 0.25) == doctest::Approx(1.75));
  CHECK(empirical_quantile({7.0}, 0.3) == 7.0);
  CHECK_THROWS_AS(empirical_quantile({}, 0.5), std::invalid_argument);
}

TEST_CASE("bootstrap intervals") {
  SUBCASE("identical individuals give zero-width intervals") {
    // One individual duplicated, so every resample is the same dataset.
    std::vector<Ranking> same;
    for (int i = 0; i < 30; ++i) {
      same.push_back(Ranking{{2, 1}, 4});
      same.push_back(Ranking{{0}, 3});
    }
    const RankDataset data({4, 3}, same);
    FitConfig c = small_config(1);
    const FitResult f = fit(data, c);
    REQUIRE(f.converged);
    const BootstrapResult b = bootstrap_ci(data, f, 10, 0.95, c);
    CHECK(b.replicates_used + b.replicates_dropped == 10);
    REQUIRE(b.replicates_used > 0);
    for (const Interval& iv : b.alpha) CHECK(iv.upper - iv.lower == 0.0);
    for (const Interval& iv : b.relative_frequency) CHECK(iv.upper - iv.lower == 0.0);
    for (const auto& per_k : b.theta) {
      for (const auto& per_v : per_k) {
        for (const Interval& iv : per_v) CHECK(iv.upper - iv.lower == 0.0);
      }
    }
  }

  SUBCASE("intervals are ordered, bracket the estimate and do not depend on threads") {
    const RankDataset data = small_dataset(31, 200);
    FitConfig c = small_config(2);
    c.init = InitKind::kProvided;
    c.initial_params = two_group_truth();
    const FitResult f = fit(data, c);
    const BootstrapResult b = bootstrap_ci(data, f, 40, 0.9, c);
    CHECK(b.level == 0.9);
    CHECK(b.alpha_draws.size() == static_cast<std::size_t>(b.replicates_used));
    int total = 0;
    int bracketed = 0;
    for (int k = 0; k < 2; ++k) {
      CHECK(b.alpha[k].lower <= b.alpha[k].upper);
      CHECK(b.relative_frequency[k].lower <= b.relative_frequency[k].upper);
      ++total;
      bracketed += b.alpha[k].lower <= f.params.alpha[k] && f.params.alpha[k] <= b.alpha[k].upper;
    }
    for (int j = 0; j < 2; ++j) {
      for (int k = 0; k < 2; ++k) {
        for (std::size_t v = 0; v < b.theta[j][k].size(); ++v) {
          const Interval& iv = b.theta[j][k][v];
          CHECK(iv.lower <= iv.upper);
          const double est = f.params.theta[j][k][v];
          ++total;
          bracketed += iv.lower <= est && est <= iv.upper;
        }
      }
    }
    CHECK(bracketed >= 0.95 * total);

    FitConfig pc = c;
    pc.num_threads = 3;
    const BootstrapResult bp = bootstrap_ci(data, f, 40, 0.9, pc);
    CHECK(bp.alpha_draws == b.alpha_draws);

    CHECK_THROWS_AS(bootstrap_ci(data, f, 1, 0.95, c), std::invalid_argument);
    CHECK_THROWS_AS(bootstrap_ci(data, f, 10, 1.0, c), std::invalid_argument);
  }

  SUBCASE("warm-started replicate fits do not fall below their first iterate") {
    const RankDataset data = small_dataset(41, 200);
    FitConfig c = small_config(2);
    const FitResult f = fit(data, c);
    for (std::uint64_t b = 0; b < 5; ++b) {
      Rng rng = make_rng(99, b);
      std::vector<int> rows(data.num_individuals());
      for (int& r : rows) r = static_cast<int>(uniform01(rng) * data.num_individuals());
      const RankDataset sample = data.select(rows);
      VariationalParams var = VariationalParams::uniform(sample, 2);
      for (int i = 0; i < sample.num_individuals(); ++i) {
        const auto phi = f.var.phi_row(rows[i]);
        std::copy(phi.begin(), phi.end(), var.phi_row(i).begin());
        for (int s = 0; s < sample.num_slots(i); ++s) {
          const auto d = f.var.delta_row(data.slot_begin(rows[i]) + s);
          std::copy(d.begin(), d.end(), var.delta_row(sample.slot_begin(i) + s).begin());
        }
      }
      const FitResult r = run_em(sample, c, f.params, var);
      REQUIRE_FALSE(r.elbo_trace.empty());
      CHECK(r.elbo() >= r.elbo_trace.front() - 1e-6);
    }
  }
}

TEST_CASE("goodness of fit under uniform preferences") {
  std::vector<Ranking> obs;
  Rng rng = make_rng(6);
  for (int i = 0; i < 1000; ++i) obs.push_back(mmrank::testing::random_ranking(5, 2, rng));
  const RankDataset data({5}, obs);
  ModelParams p;
  p.alpha = {1.0};
  p.fixed = {false};
  p.theta = {{std::vector<double>(5, 0.2)}};
  const GoodnessOfFit gof = goodness_of_fit(p, data, 1000, 3);
  REQUIRE(gof.simulated.size() == 1000);
  for (const auto& sim : gof.simulated) {
    REQUIRE(sim.size() == 1);
    REQUIRE(sim[0].size() == 5);
    CHECK(std::accumulate(sim[0].begin(), sim[0].end(), 0) == 1000);
  }
  // Each count is Binomial(1000, 0.2): mean 200, sd sqrt(160).
  const double se = std::sqrt(160.0 / 1000.0);
  for (int v = 0; v < 5; ++v) {
    double mean = 0.0;
    for (const auto& sim : gof.simulated) mean += sim[0][v];
    mean /= 1000.0;
    CHECK(std::abs(mean - 200.0) <= 3.0 * se);
  }
  CHECK(gof.observed == first_choice_counts(data));

  const GoodnessOfFit par = goodness_of_fit(p, data, 1000, 3, 4);
  CHECK(par.simulated == gof.simulated);
  CHECK_THROWS_AS(goodness_of_fit(p, data, 0, 3), std::invalid_argument);
}

TEST_CASE("band_coverage counts observed cells inside the central band") {
  GoodnessOfFit gof;
  for (int s = 0; s <= 100; ++s) gof.simulated.push_back({{s, 100 - s}});
  gof.observed = {{50, 1}};
  // Bands are [2.5, 97.5] for both cells: the first is inside, the second not.
  CHECK(band_coverage(gof, 0.95) == 0.5);
  gof.observed = {{50, 50}};
  CHECK(band_coverage(gof, 0.95) == 1.0);
}

TEST_CASE("report summaries") {
  SUBCASE("relative frequencies") {
    const std::vector<double> alpha{0.05, 0.048, 0.024, 0.014, 0.02};
    const auto rf = relative_frequencies(alpha);
    const std::vector<double> rounded{0.321, 0.308, 0.154, 0.090, 0.128};
    double sum = 0.0;
    for (int k = 0; k < 5; ++k) {
      CHECK(rf[k] == doctest::Approx(alpha[k] / 0.156).epsilon(1e-14));
      CHECK(std::abs(rf[k] - rounded[k]) <= 5e-4);
      sum += rf[k];
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-15));
  }

  SUBCASE("support ratios") {
    ModelParams p;
    p.alpha = {1.0, 1.0};
    p.fixed = {false, true};
    SupportVector sharp(7, (1.0 - 5.719 / 7.0) / 6.0);
    sharp[0] = 5.719 / 7.0;
    p.theta = {{sharp, std::vector<double>(7, 1.0 / 7.0)}};
    const VariationalParams var{2, {1.0, 1.0}, {}};
    const Report r = report_summaries(p, var, 1);
    CHECK(std::abs(r.support_ratio[0][0][0] - 5.719) <= 1e-12);
    CHECK(r.log10_support_ratio[0][0][0] == doctest::Approx(std::log10(5.719)));
    for (int v = 0; v < 7; ++v) {
      CHECK(r.support_ratio[0][1][v] == doctest::Approx(1.0).epsilon(1e-15));
      CHECK(std::abs(r.log10_support_ratio[0][1][v]) <= 1e-15);
    }
  }

  SUBCASE("memberships, modes and correlations") {
    ModelParams p;
    p.alpha = {1.0, 1.0, 1.0};
    p.fixed = {false, false, false};
    p.theta = {{{0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5}}};
    VariationalParams var{3, {2.0, 1.0, 1.0,  //
                              1.0, 6.0, 1.0,  //
                              1.0, 1.0, 2.0,  //
                              3.0, 3.0, 2.0},
                          {}};
    const Report r = report_summaries(p, var, 4);
    CHECK(r.memberships[0] == std::vector<double>{0.5, 0.25, 0.25});
    CHECK(r.memberships[1] == std::vector<double>{0.125, 0.75, 0.125});
    CHECK(r.modal_subgroup == std::vector<int>{0, 1, 2, 0});
    CHECK(r.modal_membership[1] == 0.75);
    CHECK(r.modal_membership[3] == 0.375);
    // Pearson correlation computed directly from the membership columns.
    for (int a = 0; a < 3; ++a) {
      CHECK(r.membership_correlation[a][a] == doctest::Approx(1.0));
      for (int b = 0; b < 3; ++b) {
        double ma = 0.0, mb = 0.0;
        for (const auto& m : r.memberships) {
          ma += m[a] / 4.0;
          mb += m[b] / 4.0;
        }
        double sab = 0.0, saa = 0.0, sbb = 0.0;
        for (const auto& m : r.memberships) {
          sab += (m[a] - ma) * (m[b] - mb);
          saa += (m[a] - ma) * (m[a] - ma);
          sbb += (m[b] - mb) * (m[b] - mb);
        }
        CHECK(r.membership_correlation[a][b] == doctest::Approx(sab / std::sqrt(saa * sbb)));
      }
    }

    const VariationalParams flat{3, std::vector<double>(6, 1.0), {}};
    const Report constant = report_summaries(p, flat, 2);
    CHECK(std::isnan(constant.membership_correlation[0][1]));
  }

  SUBCASE("report from a fit result") {
    const RankDataset data = small_dataset(4, 50);
    const FitResult f = fit(data, small_config(2));
    const Report r = report_summaries(f);
    CHECK(r.memberships.size() == 50);
    CHECK(r.relative_frequency == relative_frequencies(f.params.alpha));
  }
}

TEST_CASE("conditional memberships") {
  const std::vector<std::vector<double>> m{{0.6, 0.2, 0.2},
                                           {0.1, 0.1, 0.8},
                                           {0.3, 0.2, 0.5},
                                           {0.25, 0.25, 0.5}};
  const std::vector<int> subset{0, 1};
  const ConditionalMemberships c = conditional_memberships(m, subset);
  // Exactly half the membership outside the subset is still kept.
  CHECK(c.kept == std::vector<int>{0, 2, 3});
  REQUIRE(c.memberships.size() == 3);
  CHECK(c.memberships[0][0] == doctest::Approx(0.75));
  CHECK(c.memberships[0][1] == doctest::Approx(0.25));
  CHECK(c.memberships[1][0] == doctest::Approx(0.6));
  CHECK(c.memberships[2][1] == doctest::Approx(0.5));
  CHECK(conditional_memberships(m, subset, 0.9).kept == std::vector<int>{0, 1, 2, 3});
  CHECK_THROWS_AS(conditional_memberships(m, std::vector<int>{}), std::invalid_argument);
}
