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

#pragma once

#include <algorithm>
#include <bit>
#include <chrono>
#include <cstdint>
#include <deque>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "biotune/endpoint.hpp"
#include "biotune/errors.hpp"
#include "biotune/genotype.hpp"
#include "biotune/partitioner.hpp"
#include "biotune/protocol.hpp"

namespace biotune {

using GenotypeId = std::uint64_t;

struct TrainingBudget {
  std::int64_t max_epochs = 30;
  std::int64_t patience = 3;
  std::string loss{protocol::kDefaultLoss};

  void validate() const {
    if (max_epochs < 1) throw ConfigError("must be >= 1", "budget.max_epochs");
    if (patience < 1) throw ConfigError("must be >= 1", "budget.patience");
    if (patience > max_epochs) throw ConfigError("must not exceed max_epochs", "budget.patience");
  }
};

/// Result of evaluating one individual on one fold over all seeds.
struct FitnessRecord {
  GenotypeId genotype_id = 0;
  Genotype genotype;
  double phi = 1.0;  // 1 - mean accuracy; minimized
  std::vector<double> seed_accuracies;
  std::vector<std::int64_t> epochs_run;
  std::vector<std::uint8_t> seed_failed;  // 1 where the seed was penalized
  std::uint64_t generation = 0;
  std::size_t fold_index = 0;
  double wall_time = 0.0;  // seconds
  bool cached = false;     // served from the evaluation cache

  double mean_accuracy() const { return 1.0 - phi; }
  bool any_failed() const {
    return std::find(seed_failed.begin(), seed_failed.end(), 1) != seed_failed.end();
  }
};

/// 1 - mean(accuracies).
inline double phi_from_accuracies(std::span<const double> accuracies) {
  if (accuracies.empty()) throw ConfigError("at least one seed accuracy is required");
  const double sum = std::accumulate(accuracies.begin(), accuracies.end(), 0.0);
  return 1.0 - sum / static_cast<double>(accuracies.size());
}

enum class FailurePolicy {
  penalize,  // exhausted seed counts as accuracy 0 and is flagged
  raise,     // exhausted seed throws EvaluationError
};

/// How a generation's fold reaches the trainer.
enum class FoldTransfer {
  sample_ids,  // the fold's sample ids are sent inline
  reference,   // a "<plan_ref>#<fold>" name the trainer resolves itself
};

struct EvaluationOptions {
  FailurePolicy failure_policy = FailurePolicy::penalize;
  FoldTransfer fold_transfer = FoldTransfer::sample_ids;
  std::string plan_ref = "plan";
};

struct Candidate {
  GenotypeId id = 0;
  Genotype genotype;
};

/// Identity of an evaluation for caching: exact gene bits, fold and seeds.
struct CacheKey {
  std::vector<std::uint64_t> gene_bits;
  std::size_t fold = 0;
  std::vector<std::int64_t> seeds;

  static CacheKey of(const Genotype& g, std::size_t fold, std::span<const std::int64_t> seeds) {
    CacheKey key;
    for (double v : g.genes()) key.gene_bits.push_back(std::bit_cast<std::uint64_t>(v));
    key.fold = fold;
    key.seeds.assign(seeds.begin(), seeds.end());
    return key;
  }

  friend auto operator<=>(const CacheKey&, const CacheKey&) = default;
};

/// Turns genotypes into fitness records by fanning out one request per seed
/// to a TrainerEndpoint, never exceeding the endpoint's capacity.
class FitnessEvaluator {
 public:
  FitnessEvaluator(TrainerEndpoint& endpoint, BlockSpec spec, TrainingBudget budget, const PartitionPlan& plan,
                   EvaluationOptions options = {})
      : endpoint_(&endpoint), spec_(std::move(spec)), budget_(std::move(budget)), plan_(&plan),
        options_(std::move(options)) {
    spec_.validate();
    budget_.validate();
  }

  /// Evaluates every candidate on `fold` with each of `seeds`.
  std::vector<FitnessRecord> evaluate(std::span<const Candidate> candidates, std::size_t fold,
                                      std::span<const std::int64_t> seeds, std::uint64_t generation) {
    if (seeds.empty()) throw ConfigError("at least one seed is required", "engine.seed_count");
    if (fold >= plan_->fold_count) throw ConfigError("fold index out of range");

    std::vector<FitnessRecord> records(candidates.size());
    std::vector<std::size_t> fresh;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      auto& rec = records[i];
      rec.genotype_id = candidates[i].id;
      rec.genotype = candidates[i].genotype;
      rec.generation = generation;
      rec.fold_index = fold;
      const auto hit = cache_.find(CacheKey::of(candidates[i].genotype, fold, seeds));
      if (hit != cache_.end()) {
        rec.phi = hit->second.phi;
        rec.seed_accuracies = hit->second.seed_accuracies;
        rec.epochs_run = hit->second.epochs_run;
        rec.seed_failed = hit->second.seed_failed;
        rec.cached = true;
        continue;
      }
      rec.seed_accuracies.assign(seeds.size(), 0.0);
      rec.epochs_run.assign(seeds.size(), 0);
      rec.seed_failed.assign(seeds.size(), 0);
      fresh.push_back(i);
    }
    if (fresh.empty()) return records;

    struct Pending {
      std::size_t record;
      std::size_t seed_index;
      int attempt;
    };
    std::deque<Pending> queue;
    for (std::size_t i : fresh) {
      for (std::size_t s = 0; s < seeds.size(); ++s) queue.push_back({i, s, 0});
    }

    // Decoding once per candidate keeps the wire payload identical across seeds.
    std::map<std::size_t, FineTuneConfig> decoded;
    for (std::size_t i : fresh) decoded.emplace(i, decode(candidates[i].genotype, spec_));

    const auto capacity = std::max<std::size_t>(1, endpoint_->info().capacity);
    const int retry_budget = std::max(0, endpoint_->info().retry_budget);
    while (!queue.empty()) {
      std::vector<Pending> batch;
      std::vector<Job> jobs;
      while (!queue.empty() && batch.size() < capacity) {
        const auto p = queue.front();
        queue.pop_front();
        batch.push_back(p);
        jobs.push_back(make_job(candidates[p.record], decoded.at(p.record), fold, seeds[p.seed_index], generation,
                                p.attempt));
      }
      const auto started = std::chrono::steady_clock::now();
      auto results = endpoint_->run_batch(jobs);
      const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
      requests_sent_ += jobs.size();
      if (results.size() != jobs.size()) {
        throw TrainerFailure("endpoint returned " + std::to_string(results.size()) + " results for " +
                             std::to_string(jobs.size()) + " jobs");
      }

      for (std::size_t k = 0; k < batch.size(); ++k) {
        const auto& p = batch[k];
        auto& rec = records[p.record];
        rec.wall_time += elapsed / static_cast<double>(batch.size());
        const auto& result = results[k];
        if (result.outcome == Outcome::ok) {
          const double acc = result.response.validation_accuracy;
          if (!(acc >= 0.0 && acc <= 1.0)) {
            throw ProtocolError("validation_accuracy outside [0, 1] for genotype " + std::to_string(rec.genotype_id),
                                "validation_accuracy=" + std::to_string(acc));
          }
          rec.seed_accuracies[p.seed_index] = acc;
          rec.epochs_run[p.seed_index] = result.response.epochs_run;
          continue;
        }
        if (p.attempt < retry_budget) {
          queue.push_back({p.record, p.seed_index, p.attempt + 1});
          continue;
        }
        if (options_.failure_policy == FailurePolicy::raise) {
          throw EvaluationError("seed " + std::to_string(seeds[p.seed_index]) + " failed after " +
                                    std::to_string(p.attempt + 1) + " attempts: " + result.diagnostic,
                                std::to_string(rec.genotype_id));
        }
        rec.seed_accuracies[p.seed_index] = 0.0;
        rec.seed_failed[p.seed_index] = 1;
        ++penalized_seeds_;
      }
    }

    for (std::size_t i : fresh) {
      auto& rec = records[i];
      rec.phi = phi_from_accuracies(rec.seed_accuracies);
      // Penalized results are not cached so a later request gets a fresh try.
      if (!rec.any_failed()) cache_.insert_or_assign(CacheKey::of(rec.genotype, fold, seeds), rec);
    }
    return records;
  }

  FitnessRecord evaluate_one(const Candidate& candidate, std::size_t fold, std::span<const std::int64_t> seeds,
                             std::uint64_t generation) {
    return evaluate(std::span<const Candidate>(&candidate, 1), fold, seeds, generation).front();
  }

  std::uint64_t requests_sent() const noexcept { return requests_sent_; }
  std::uint64_t penalized_seeds() const noexcept { return penalized_seeds_; }
  const BlockSpec& spec() const noexcept { return spec_; }
  const TrainingBudget& budget() const noexcept { return budget_; }

  const std::map<CacheKey, FitnessRecord>& cache() const noexcept { return cache_; }
  void restore_cache(std::map<CacheKey, FitnessRecord> cache) { cache_ = std::move(cache); }
  void restore_counters(std::uint64_t requests_sent, std::uint64_t penalized) {
    requests_sent_ = requests_sent;
    penalized_seeds_ = penalized;
  }

 private:
  Job make_job(const Candidate& c, const FineTuneConfig& config, std::size_t fold, std::int64_t seed,
               std::uint64_t generation, int attempt) const {
    Job job;
    auto& r = job.request;
    r.genotype_id = std::to_string(c.id);
    r.request_id = "g" + std::to_string(generation) + "-i" + r.genotype_id + "-s" + std::to_string(seed) + "-a" +
                   std::to_string(attempt);
    r.block_rates = config.rates;
    r.frozen_mask = config.mask;
    r.fold_index = static_cast<std::int64_t>(fold);
    if (options_.fold_transfer == FoldTransfer::reference) {
      r.fold_ref = options_.plan_ref + "#" + std::to_string(fold);
    } else {
      r.train_sample_ids = plan_->fold(fold);
    }
    r.seed = seed;
    r.max_epochs = budget_.max_epochs;
    r.patience = budget_.patience;
    r.loss = budget_.loss;
    job.genotype = c.genotype;
    return job;
  }

  TrainerEndpoint* endpoint_;
  BlockSpec spec_;
  TrainingBudget budget_;
  const PartitionPlan* plan_;
  EvaluationOptions options_;
  std::map<CacheKey, FitnessRecord> cache_;
  std::uint64_t requests_sent_ = 0;
  std::uint64_t penalized_seeds_ = 0;
};

}  // namespace biotune
