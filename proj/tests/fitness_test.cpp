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
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "biotune/fitness.hpp"
#include "biotune/surrogate.hpp"

namespace biotune {
namespace {

// Endpoint whose per-job outcome is decided by a callback; records traffic.
class ScriptedEndpoint : public TrainerEndpoint {
 public:
  using Rule = std::function<JobResult(const Job&)>;

  ScriptedEndpoint(Rule rule, std::size_t capacity = 4, int retry_budget = 1)
      : rule_(std::move(rule)), capacity_(capacity), retry_budget_(retry_budget) {}

  EndpointInfo info() const override { return {EndpointKind::external_process, capacity_, 1.0, retry_budget_}; }

  std::vector<JobResult> run_batch(std::span<const Job> jobs) override {
    largest_batch = std::max(largest_batch, jobs.size());
    std::vector<JobResult> out;
    for (const auto& job : jobs) {
      requests.push_back(job.request);
      out.push_back(rule_(job));
    }
    return out;
  }

  std::vector<protocol::EvaluateRequest> requests;
  std::size_t largest_batch = 0;

 private:
  Rule rule_;
  std::size_t capacity_;
  int retry_budget_;
};

JobResult ok(const Job& job, double acc) {
  JobResult r;
  r.outcome = Outcome::ok;
  r.response.request_id = job.request.request_id;
  r.response.validation_accuracy = acc;
  r.response.epochs_run = 4;
  return r;
}

JobResult failed(const std::string& why) {
  JobResult r;
  r.outcome = Outcome::failed;
  r.diagnostic = why;
  return r;
}

PartitionPlan small_plan() {
  std::vector<LabeledSample> labels;
  for (int i = 0; i < 12; ++i) labels.emplace_back("s" + std::to_string(i), i % 2 ? "odd" : "even");
  return build_partition(labels, 3, 0);
}

const std::vector<std::int64_t> kSeeds{11, 22, 33};

TEST(PhiTest, Examples) {
  EXPECT_NEAR(phi_from_accuracies(std::vector<double>{0.9, 0.8, 1.0}), 0.1, 1e-12);
  EXPECT_EQ(phi_from_accuracies(std::vector<double>{0.0, 0.0, 0.0}), 1.0);
  EXPECT_THROW(phi_from_accuracies(std::vector<double>{}), ConfigError);
}

TEST(PhiTest, PermutationInvariantAndBounded) {
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    std::vector<double> acc(1 + rng.below(6));
    for (double& a : acc) a = rng.uniform();
    const double phi = phi_from_accuracies(acc);
    EXPECT_GE(phi, 0.0);
    EXPECT_LE(phi, 1.0);
    std::reverse(acc.begin(), acc.end());
    EXPECT_NEAR(phi_from_accuracies(acc), phi, 1e-12);
  }
}

TEST(TrainingBudgetTest, Validation) {
  EXPECT_NO_THROW(TrainingBudget{}.validate());
  EXPECT_EQ(TrainingBudget{}.max_epochs, 30);
  EXPECT_EQ(TrainingBudget{}.patience, 3);
  EXPECT_THROW((TrainingBudget{3, 4, "x"}.validate()), ConfigError);
  EXPECT_THROW((TrainingBudget{0, 0, "x"}.validate()), ConfigError);
}

TEST(FitnessEvaluatorTest, OneRequestPerSeedWithDecodedRates) {
  const auto plan = small_plan();
  ScriptedEndpoint ep([](const Job& j) { return ok(j, 0.5 + 0.01 * static_cast<double>(j.request.seed % 10)); });
  BlockSpec spec;
  spec.base_rates = {0.001, 0.001};
  FitnessEvaluator eval(ep, spec, TrainingBudget{}, plan);
  const auto rec = eval.evaluate_one({7, Genotype({0.8, 0.2, 0.5})}, 1, kSeeds, 2);
  ASSERT_EQ(ep.requests.size(), 3u);
  for (std::size_t s = 0; s < 3; ++s) {
    const auto& r = ep.requests[s];
    EXPECT_EQ(r.seed, kSeeds[s]);
    EXPECT_EQ(r.genotype_id, "7");
    EXPECT_EQ(r.frozen_mask, (std::vector<std::uint8_t>{1, 0}));
    EXPECT_NEAR(r.block_rates[0], 0.003981071705534972507702523, 1e-15);
    EXPECT_EQ(r.block_rates[1], 0.0);
    EXPECT_EQ(r.fold_index, 1);
    EXPECT_EQ(r.train_sample_ids, plan.fold(1));
    EXPECT_EQ(r.max_epochs, 30);
    EXPECT_EQ(r.patience, 3);
  }
  EXPECT_EQ(rec.seed_accuracies, (std::vector<double>{0.51, 0.52, 0.53}));
  EXPECT_NEAR(rec.phi, 1.0 - (0.51 + 0.52 + 0.53) / 3.0, 1e-12);
  EXPECT_EQ(rec.generation, 2u);
  EXPECT_EQ(rec.fold_index, 1u);
  EXPECT_EQ(rec.epochs_run, (std::vector<std::int64_t>{4, 4, 4}));
  EXPECT_FALSE(rec.any_failed());
}

TEST(FitnessEvaluatorTest, FoldReferenceMode) {
  const auto plan = small_plan();
  ScriptedEndpoint ep([](const Job& j) { return ok(j, 0.5); });
  EvaluationOptions opts;
  opts.fold_transfer = FoldTransfer::reference;
  opts.plan_ref = "cifar-plan";
  FitnessEvaluator eval(ep, BlockSpec::uniform(2, 0.01), TrainingBudget{}, plan, opts);
  eval.evaluate_one({0, Genotype({0.8, 0.2, 0.5})}, 2, kSeeds, 0);
  EXPECT_EQ(ep.requests[0].fold_ref, "cifar-plan#2");
  EXPECT_TRUE(ep.requests[0].train_sample_ids.empty());
}

TEST(FitnessEvaluatorTest, RetryThenSucceed) {
  const auto plan = small_plan();
  std::map<std::int64_t, int> attempts;
  ScriptedEndpoint ep([&](const Job& j) {
    return attempts[j.request.seed]++ == 0 && j.request.seed == 22 ? failed("flaky") : ok(j, 0.6);
  });
  FitnessEvaluator eval(ep, BlockSpec::uniform(2, 0.01), TrainingBudget{}, plan);
  const auto rec = eval.evaluate_one({0, Genotype({0.8, 0.2, 0.5})}, 0, kSeeds, 0);
  EXPECT_EQ(ep.requests.size(), 4u);
  EXPECT_FALSE(rec.any_failed());
  EXPECT_NEAR(rec.phi, 0.4, 1e-12);
  EXPECT_NE(ep.requests[1].request_id, ep.requests[3].request_id);
}

TEST(FitnessEvaluatorTest, ExhaustedRetriesArePenalized) {
  const auto plan = small_plan();
  ScriptedEndpoint ep([](const Job& j) { return j.request.seed == 33 ? failed("always") : ok(j, 0.9); }, 4, 2);
  FitnessEvaluator eval(ep, BlockSpec::uniform(2, 0.01), TrainingBudget{}, plan);
  const auto rec = eval.evaluate_one({0, Genotype({0.8, 0.2, 0.5})}, 0, kSeeds, 0);
  EXPECT_EQ(ep.requests.size(), 2u + 3u);  // two good seeds, three attempts at the bad one
  EXPECT_EQ(rec.seed_failed, (std::vector<std::uint8_t>{0, 0, 1}));
  EXPECT_EQ(rec.seed_accuracies[2], 0.0);
  EXPECT_NEAR(rec.phi, 1.0 - 1.8 / 3.0, 1e-12);
  EXPECT_EQ(eval.penalized_seeds(), 1u);
  // Penalized results are retried from scratch next time.
  eval.evaluate_one({0, Genotype({0.8, 0.2, 0.5})}, 0, kSeeds, 1);
  EXPECT_EQ(ep.requests.size(), 10u);
}

TEST(FitnessEvaluatorTest, RaisePolicyCarriesGenotypeId) {
  const auto plan = small_plan();
  ScriptedEndpoint ep([](const Job&) { return failed("boom"); }, 4, 0);
  EvaluationOptions opts;
  opts.failure_policy = FailurePolicy::raise;
  FitnessEvaluator eval(ep, BlockSpec::uniform(2, 0.01), TrainingBudget{}, plan, opts);
  try {
    eval.evaluate_one({42, Genotype({0.8, 0.2, 0.5})}, 0, kSeeds, 0);
    FAIL() << "expected EvaluationError";
  } catch (const EvaluationError& e) {
    EXPECT_EQ(e.genotype_id(), "42");
  }
}

TEST(FitnessEvaluatorTest, AccuracyOutOfRangeIsProtocolError) {
  const auto plan = small_plan();
  ScriptedEndpoint ep([](const Job& j) { return ok(j, 1.3); });
  FitnessEvaluator eval(ep, BlockSpec::uniform(2, 0.01), TrainingBudget{}, plan);
  EXPECT_THROW(eval.evaluate_one({0, Genotype({0.8, 0.2, 0.5})}, 0, kSeeds, 0), ProtocolError);
}

TEST(FitnessEvaluatorTest, CacheKeyedByGenesFoldAndSeeds) {
  const auto plan = small_plan();
  ScriptedEndpoint ep([](const Job& j) { return ok(j, 0.7); });
  FitnessEvaluator eval(ep, BlockSpec::uniform(2, 0.01), TrainingBudget{}, plan);
  const Genotype g({0.8, 0.2, 0.5});
  eval.evaluate_one({0, g}, 0, kSeeds, 0);
  EXPECT_EQ(ep.requests.size(), 3u);
  const auto hit = eval.evaluate_one({5, g}, 0, kSeeds, 1);
  EXPECT_TRUE(hit.cached);
  EXPECT_EQ(hit.genotype_id, 5u);
  EXPECT_EQ(hit.generation, 1u);
  EXPECT_EQ(ep.requests.size(), 3u);
  eval.evaluate_one({0, g}, 1, kSeeds, 1);  // other fold: not a hit
  EXPECT_EQ(ep.requests.size(), 6u);
  eval.evaluate_one({0, g}, 0, std::vector<std::int64_t>{1}, 1);  // other seeds: not a hit
  EXPECT_EQ(ep.requests.size(), 7u);
  eval.evaluate_one({0, Genotype({0.8, 0.2, 0.5000000001})}, 0, kSeeds, 1);
  EXPECT_EQ(ep.requests.size(), 10u);
}

TEST(FitnessEvaluatorTest, CapacityIsNeverExceeded) {
  const auto plan = small_plan();
  ScriptedEndpoint ep([](const Job& j) { return ok(j, 0.5); }, 3);
  FitnessEvaluator eval(ep, BlockSpec::uniform(2, 0.01), TrainingBudget{}, plan);
  std::vector<Candidate> cands;
  Rng rng(1);
  for (GenotypeId i = 0; i < 7; ++i) cands.push_back({i, Genotype({rng.uniform(), rng.uniform(), rng.uniform()})});
  const auto recs = eval.evaluate(cands, 0, kSeeds, 0);
  EXPECT_EQ(recs.size(), 7u);
  EXPECT_EQ(ep.requests.size(), 21u);
  EXPECT_EQ(ep.largest_batch, 3u);
  EXPECT_EQ(eval.requests_sent(), 21u);
}

TEST(FitnessEvaluatorTest, SphereOptimumHasZeroPhi) {
  const auto plan = small_plan();
  const std::vector<double> opt{0.3, 0.7, 0.1, 0.45};
  auto ep = surrogate_sphere(opt);
  FitnessEvaluator eval(*ep, BlockSpec::uniform(3, 0.01), TrainingBudget{}, plan);
  EXPECT_EQ(eval.evaluate_one({0, Genotype(opt)}, 0, kSeeds, 0).phi, 0.0);
  // Antipodal corner: accuracy 1 - sum(max(o, 1-o)^2)/len.
  const Genotype far({1.0, 0.0, 1.0, 1.0});
  const double d2 = 0.7 * 0.7 + 0.7 * 0.7 + 0.9 * 0.9 + 0.55 * 0.55;
  EXPECT_NEAR(eval.evaluate_one({1, far}, 0, kSeeds, 0).phi, d2 / 4.0, 1e-12);
}

TEST(FitnessEvaluatorTest, MaskMatchOptimumHasZeroPhi) {
  const auto plan = small_plan();
  std::vector<double> base(6, 1e-3);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto target = random_mask_match_target(base, seed);
    auto ep = surrogate_mask_match(target);
    FitnessEvaluator eval(*ep, BlockSpec::uniform(6, 1e-3), TrainingBudget{}, plan);
    EXPECT_NEAR(eval.evaluate_one({0, target.optimal_genotype()}, 0, kSeeds, 0).phi, 0.0, 1e-12);
  }
}

TEST(MaskMatchTest, AllFrozenAgainstAllTrainedTarget) {
  MaskMatchTarget t;
  t.mask = {1, 1, 1, 1};
  t.exponents = {0, 0, 0, 0};
  t.base_rates = {1, 1, 1, 1};
  protocol::EvaluateRequest req;
  req.frozen_mask = {0, 0, 0, 0};
  req.block_rates = {0, 0, 0, 0};
  EXPECT_EQ(mask_match_accuracy(t, req), 0.0);
}

TEST(MaskMatchTest, DeterministicNoise) {
  const std::vector<double> base(4, 1e-3);
  const auto target = random_mask_match_target(base, 9, 0.05);
  auto ep = surrogate_mask_match(target);
  const auto plan = small_plan();
  FitnessEvaluator a(*ep, BlockSpec::uniform(4, 1e-3), TrainingBudget{}, plan);
  FitnessEvaluator b(*ep, BlockSpec::uniform(4, 1e-3), TrainingBudget{}, plan);
  const Genotype g({0.6, 0.4, 0.9, 0.1, 0.3});
  const auto ra = a.evaluate_one({0, g}, 1, kSeeds, 0);
  const auto rb = b.evaluate_one({0, g}, 1, kSeeds, 0);
  EXPECT_EQ(ra.seed_accuracies, rb.seed_accuracies);
  EXPECT_NE(ra.seed_accuracies[0], ra.seed_accuracies[1]);
}

}  // namespace
}  // namespace biotune
