// Copyright 2026 The biotune Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "biotune/engine.hpp"
#include "biotune/surrogate.hpp"

namespace biotune {
namespace {

std::vector<FitnessRecord> with_phis(const std::vector<double>& phis) {
  std::vector<FitnessRecord> pop;
  for (std::size_t i = 0; i < phis.size(); ++i) {
    FitnessRecord r;
    r.genotype_id = i;
    r.genotype = Genotype({0.1 * static_cast<double>(i % 10), 0.5});
    r.phi = phis[i];
    pop.push_back(r);
  }
  return pop;
}

PartitionPlan plan_with_folds(std::size_t folds) {
  std::vector<LabeledSample> labels;
  for (int i = 0; i < 30; ++i) labels.emplace_back("s" + std::to_string(i), "c" + std::to_string(i % 3));
  return build_partition(labels, folds, 0);
}

std::vector<double> genes_of(const Genotype& g) { return {g.genes().begin(), g.genes().end()}; }

// --- initialization ---------------------------------------------------------

TEST(InitializePopulationTest, ShapeAndDeterminism) {
  EngineConfig config;
  config.rng_seed = 99;
  const auto a = initialize_population(config, 17);
  const auto b = initialize_population(config, 17);
  ASSERT_EQ(a.size(), 10u);
  for (const auto& g : a) EXPECT_EQ(g.size(), 18u);
  EXPECT_EQ(a, b);
}

TEST(InitializePopulationTest, UniformMean) {
  Rng rng(4);
  double sum = 0;
  std::size_t n = 0;
  for (const auto& g : initialize_population(1000, 9, rng)) {
    for (double v : g.genes()) {
      sum += v;
      ++n;
    }
  }
  ASSERT_EQ(n, 10000u);
  EXPECT_GE(sum / static_cast<double>(n), 0.48);
  EXPECT_LE(sum / static_cast<double>(n), 0.52);
}

// --- selection ----------------------------------------------------------------

TEST(SelectElitesTest, Examples) {
  const auto pop = with_phis({0.3, 0.1, 0.2});
  EXPECT_EQ(select_elite_indices(pop, 2), (std::vector<std::size_t>{1, 2}));
  const auto ties = with_phis({0.5, 0.5, 0.5, 0.5});
  EXPECT_EQ(select_elite_indices(ties, 3), (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_THROW(select_elite_indices(pop, 3), ConfigError);
}

TEST(SelectElitesTest, MatchesFullSort) {
  Rng rng(12);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> phis(10);
    for (double& p : phis) p = rng.uniform();
    const auto pop = with_phis(phis);
    auto sorted = phis;
    std::sort(sorted.begin(), sorted.end());
    const auto elites = select_elite_indices(pop, 3);
    for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(pop[elites[k]].phi, sorted[k]);
  }
}

// --- operators ----------------------------------------------------------------

TEST(ExploitationTest, ZeroRadiusIsIdentity) {
  Rng rng(1);
  const Genotype elite({0.2, 0.7, 0.4});
  EXPECT_EQ(exploitation(elite, 0.0, rng), elite);
  EXPECT_THROW(exploitation(elite, -0.1, rng), ConfigError);
}

TEST(ExploitationTest, ClampsAtFloor) {
  Rng rng(2);
  const Genotype zeros({0.0, 0.0, 0.0, 0.0});
  for (int i = 0; i < 200; ++i) {
    const auto child = exploitation(zeros, 0.3, rng);
    for (double v : child.genes()) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 0.3);
    }
  }
}

TEST(ExploitationTest, StaysWithinRadius) {
  Rng rng(3);
  const Genotype elite({0.5, 0.1, 0.95, 0.6});
  for (int i = 0; i < 1000; ++i) {
    const auto child = exploitation(elite, 0.25, rng);
    for (std::size_t k = 0; k < elite.size(); ++k) EXPECT_LE(std::abs(child[k] - elite[k]), 0.25);
  }
}

TEST(ExploitationTest, RadiusShrinks) {
  EngineConfig config;
  EXPECT_EQ(exploitation_radius(config, 0), 0.25);
  EXPECT_NEAR(exploitation_radius(config, 5), 0.125, 1e-15);
  EXPECT_GT(exploitation_radius(config, 9), 0.0);
}

TEST(CrossoverTest, IdenticalParents) {
  Rng rng(4);
  const Genotype p({0.3, 0.6, 0.9});
  EXPECT_EQ(crossover(p, p, rng), p);
  EXPECT_THROW(crossover(p, Genotype({0.1, 0.2}), rng), ConfigError);
}

TEST(CrossoverTest, GenesComeFromParentsAtEvenOdds) {
  Rng rng(5);
  const Genotype a({0.1, 0.2, 0.3, 0.4, 0.5});
  const Genotype b({0.9, 0.8, 0.7, 0.6, 0.55});
  std::vector<int> from_a(a.size(), 0);
  const int trials = 10000;
  for (int t = 0; t < trials; ++t) {
    const auto child = crossover(a, b, rng);
    for (std::size_t k = 0; k < a.size(); ++k) {
      ASSERT_TRUE(child[k] == a[k] || child[k] == b[k]);
      from_a[k] += child[k] == a[k];
    }
  }
  for (int c : from_a) {
    EXPECT_GE(c / static_cast<double>(trials), 0.47);
    EXPECT_LE(c / static_cast<double>(trials), 0.53);
  }
}

TEST(MutationTest, RateZeroAndClamping) {
  Rng rng(6);
  const Genotype g({0.0, 0.5, 1.0});
  EXPECT_EQ(mutation(g, 0.0, 0.25, rng), g);
  for (int i = 0; i < 500; ++i) {
    const auto m = mutation(g, 1.0, 5.0, rng);
    for (double v : m.genes()) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
  EXPECT_THROW(mutation(g, 1.5, 0.25, rng), ConfigError);
  EXPECT_THROW(mutation(g, 0.5, 0.0, rng), ConfigError);
}

TEST(MutationTest, MutatedFraction) {
  Rng rng(7);
  std::vector<double> genes(100, 0.5);
  const Genotype g(genes);
  std::size_t changed = 0;
  for (int t = 0; t < 100; ++t) {
    const auto m = mutation(g, 0.5, 0.25, rng);
    for (std::size_t k = 0; k < g.size(); ++k) changed += m[k] != g[k];
  }
  EXPECT_GE(changed / 10000.0, 0.47);
  EXPECT_LE(changed / 10000.0, 0.53);
}

TEST(AdaptationTest, CountZeroIsNoOp) {
  Rng rng(8);
  const auto pop = with_phis({0.4, 0.2, 0.9});
  const auto out = adapt(pop, 0, rng);
  EXPECT_TRUE(out.replaced.empty());
  for (std::size_t i = 0; i < pop.size(); ++i) EXPECT_EQ(out.population[i], pop[i].genotype);
}

TEST(AdaptationTest, ReplacesExactlyTheWorst) {
  Rng rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> phis(10);
    for (double& p : phis) p = rng.uniform();
    const auto pop = with_phis(phis);
    const std::size_t count = 1 + rng.below(7);
    const auto out = adapt(pop, count, rng);
    std::vector<std::size_t> order(10);
    std::iota(order.begin(), order.end(), 0u);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return phis[a] > phis[b]; });
    std::set<std::size_t> expected(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(count));
    EXPECT_EQ(std::set<std::size_t>(out.replaced.begin(), out.replaced.end()), expected);
    for (std::size_t i = 0; i < 10; ++i) {
      if (!expected.count(i)) {
        EXPECT_EQ(out.population[i], pop[i].genotype);
      }
    }
  }
}

TEST(AdaptationTest, FullReplacementOfNonElites) {
  Rng rng(10);
  const auto pop = with_phis({0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0});
  const auto out = adapt(pop, 10 - 3, rng);
  EXPECT_EQ(std::set<std::size_t>(out.replaced.begin(), out.replaced.end()),
            (std::set<std::size_t>{3, 4, 5, 6, 7, 8, 9}));
  EXPECT_THROW(adapt(pop, 10, rng), ConfigError);
}

// --- engine -------------------------------------------------------------------

TEST(EngineConfigTest, DefaultsAndValidation) {
  EngineConfig c;
  EXPECT_EQ(c.population_size, 10u);
  EXPECT_EQ(c.elite_count, 3u);
  EXPECT_EQ(c.max_generations, 10u);
  EXPECT_EQ(c.seed_count, 3u);
  EXPECT_EQ(c.perturbation_scale, 0.25);
  EXPECT_EQ(c.exploitation_children(), 4u);
  EXPECT_EQ(c.crossover_children(), 3u);
  c.elite_count = 10;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.perturbation_scale = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(EngineTest, PlanMustMatchFoldCount) {
  const auto plan = plan_with_folds(2);
  auto ep = surrogate_sphere(std::vector<double>(4, 0.5));
  EXPECT_THROW(Engine(EngineConfig{}, BlockSpec::uniform(3, 0.01), plan, *ep), ConfigError);
}

TEST(EngineTest, DeterministicRanking) {
  const auto plan = plan_with_folds(3);
  const auto spec = BlockSpec::uniform(5, 0.01);
  auto run_once = [&] {
    auto ep = surrogate_mask_match(random_mask_match_target(spec.base_rates, 3, 0.02));
    EngineConfig c;
    c.rng_seed = 77;
    Engine e(c, spec, plan, *ep);
    return e.run();
  };
  const auto a = run_once();
  const auto b = run_once();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].genotype_id, b[i].genotype_id);
    EXPECT_EQ(a[i].genotype, b[i].genotype);
    EXPECT_EQ(a[i].phi, b[i].phi);
  }
}

TEST(EngineTest, BestPhiNonIncreasingOnFoldIndependentLandscape) {
  const auto plan = plan_with_folds(3);
  const auto spec = BlockSpec::uniform(8, 0.01);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed + 100);
    auto ep = surrogate_sphere(genes_of(random_genotype(8, rng)));
    EngineConfig c;
    c.rng_seed = seed;
    Engine e(c, spec, plan, *ep);
    e.run();
    for (std::size_t g = 1; g < e.reports().size(); ++g) {
      EXPECT_LE(e.reports()[g].best_phi, e.reports()[g - 1].best_phi);
    }
  }
}

TEST(EngineTest, GenerationStructure) {
  const auto plan = plan_with_folds(3);
  const auto spec = BlockSpec::uniform(6, 0.01);
  auto ep = surrogate_sphere(std::vector<double>(7, 0.3));
  EngineConfig c;
  c.rng_seed = 5;
  Engine e(c, spec, plan, *ep);
  std::set<GenotypeId> ids;
  std::size_t reports = 0;
  e.run([&](const GenerationReport& r) {
    EXPECT_EQ(r.generation, reports);
    EXPECT_EQ(r.fold_index, fold_for_generation(r.generation, 3));
    EXPECT_EQ(r.population_phis.size(), 10u);
    EXPECT_TRUE(std::is_sorted(r.population_phis.begin(), r.population_phis.end()));
    EXPECT_EQ(r.best_phi, r.population_phis.front());
    EXPECT_EQ(r.elite_ids.size(), 3u);
    ++reports;
  });
  EXPECT_EQ(reports, 10u);
  EXPECT_TRUE(e.finished());
  EXPECT_THROW(e.step(), ConfigError);
  // History holds fresh evaluations only: at most 10 initial + 8 offspring per
  // generation get new ids; cache hits reuse an earlier evaluation.
  std::uint64_t fresh = 0;
  for (const auto& r : e.reports()) fresh += r.evaluations;
  for (const auto& r : e.history()) {
    EXPECT_FALSE(r.cached);
    ids.insert(r.genotype_id);
  }
  EXPECT_EQ(fresh, e.history().size());
  EXPECT_LE(ids.size(), 10u + 10u * 8u);
  EXPECT_GT(ids.size(), 10u + 10u * 6u);
  const auto ranked = e.ranked();
  EXPECT_TRUE(std::is_sorted(ranked.begin(), ranked.end(),
                             [](const auto& a, const auto& b) { return a.phi < b.phi; }));
}

TEST(EngineTest, RequestBudget) {
  const auto plan = plan_with_folds(3);
  const auto spec = BlockSpec::uniform(4, 0.01);
  auto ep = surrogate_sphere(std::vector<double>(5, 0.6));
  EngineConfig c;
  Engine e(c, spec, plan, *ep);
  e.run();
  const std::size_t per_generation = c.population_size + (c.population_size - c.elite_count) + c.adaptation_count;
  const auto retry = static_cast<std::uint64_t>(1 + ep->info().retry_budget);
  EXPECT_LE(e.evaluator().requests_sent(), c.max_generations * per_generation * c.seed_count * retry);
}

TEST(EngineTest, BeatsBestOfHundredRandom) {
  const auto plan = plan_with_folds(3);
  const auto spec = BlockSpec::uniform(17, 1e-3);
  const auto target = random_mask_match_target(spec.base_rates, 2026);
  auto ep = surrogate_mask_match(target);
  EngineConfig c;
  c.rng_seed = 1;
  Engine e(c, spec, plan, *ep);
  const auto ea = e.run();
  auto ep2 = surrogate_mask_match(target);
  const auto rs = random_search(c, spec, plan, *ep2, 100, 31);
  EXPECT_EQ(rs.size(), 100u);
  EXPECT_LE(ea.front().phi, rs.front().phi);
}

TEST(EngineTest, SnapshotRestoreContinuesIdentically) {
  const auto plan = plan_with_folds(3);
  const auto spec = BlockSpec::uniform(6, 0.01);
  const auto target = random_mask_match_target(spec.base_rates, 8, 0.03);
  EngineConfig c;
  c.rng_seed = 21;

  auto ep_a = surrogate_mask_match(target);
  Engine whole(c, spec, plan, *ep_a);
  whole.run();

  auto ep_b = surrogate_mask_match(target);
  Engine first(c, spec, plan, *ep_b);
  for (int g = 0; g < 4; ++g) first.step();
  const auto state = first.snapshot();

  auto ep_c = surrogate_mask_match(target);
  Engine second(c, spec, plan, *ep_c);
  second.restore(state);
  second.run();

  const auto a = whole.ranked();
  const auto b = second.ranked();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].genotype_id, b[i].genotype_id);
    EXPECT_EQ(a[i].phi, b[i].phi);
  }
  EXPECT_EQ(whole.evaluator().requests_sent(), second.evaluator().requests_sent());
}

// Fails every request from a given point on, to check rollback.
class BreakingEndpoint : public TrainerEndpoint {
 public:
  explicit BreakingEndpoint(std::size_t healthy_requests) : healthy_(healthy_requests) {}
  EndpointInfo info() const override { return {EndpointKind::surrogate, 4, 1.0, 0}; }
  std::vector<JobResult> run_batch(std::span<const Job> jobs) override {
    if (served_ + jobs.size() > healthy_) throw TrainerFailure("trainer died");
    served_ += jobs.size();
    std::vector<JobResult> out;
    for (const auto& j : jobs) {
      JobResult r;
      r.outcome = Outcome::ok;
      r.response.request_id = j.request.request_id;
      r.response.validation_accuracy = sphere_accuracy(std::vector<double>(j.genotype.size(), 0.5), j.genotype.genes());
      out.push_back(r);
    }
    return out;
  }

 private:
  std::size_t healthy_;
  std::size_t served_ = 0;
};

TEST(EngineTest, FailedStepLeavesStateUntouched) {
  const auto plan = plan_with_folds(3);
  BreakingEndpoint ep(100);
  EngineConfig c;
  Engine e(c, BlockSpec::uniform(3, 0.01), plan, ep);
  e.step();
  const auto before = e.snapshot();
  EXPECT_THROW(e.step(), TrainerFailure);
  const auto after = e.snapshot();
  EXPECT_EQ(after.next_generation, before.next_generation);
  EXPECT_EQ(after.rng_state, before.rng_state);
  EXPECT_EQ(after.history.size(), before.history.size());
  EXPECT_EQ(after.next_id, before.next_id);
  EXPECT_EQ(after.requests_sent, before.requests_sent);
}

TEST(TrialSeedsTest, StableAndDistinct) {
  const auto a = trial_seeds(5, 3);
  EXPECT_EQ(a, trial_seeds(5, 3));
  EXPECT_EQ(std::set<std::int64_t>(a.begin(), a.end()).size(), 3u);
  for (auto s : a) EXPECT_GE(s, 0);
  EXPECT_NE(a, trial_seeds(6, 3));
}

}  // namespace
}  // namespace biotune
