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
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "biotune/endpoint.hpp"
#include "biotune/errors.hpp"
#include "biotune/fitness.hpp"
#include "biotune/genotype.hpp"
#include "biotune/partitioner.hpp"
#include "biotune/random.hpp"

namespace biotune {

struct EngineConfig {
  std::size_t population_size = 10;
  std::size_t elite_count = 3;
  std::size_t max_generations = 10;
  std::size_t seed_count = 3;
  double perturbation_scale = 0.25;
  std::uint64_t rng_seed = 0;
  std::size_t fold_count = 3;
  /// Per-gene probability used when mutating crossover children. Zero
  /// selects 1 / genotype length.
  double mutation_rate = 0.0;
  /// Worst parents replaced by fresh random genotypes each generation.
  std::size_t adaptation_count = 1;

  void validate() const {
    if (population_size < 2) throw ConfigError("must be >= 2", "engine.population_size");
    if (elite_count < 1) throw ConfigError("must be >= 1", "engine.elite_count");
    if (elite_count >= population_size) throw ConfigError("must be < population_size", "engine.elite_count");
    if (max_generations < 1) throw ConfigError("must be >= 1", "engine.max_generations");
    if (seed_count < 1) throw ConfigError("must be >= 1", "engine.seed_count");
    if (!(perturbation_scale > 0.0 && perturbation_scale <= 1.0)) {
      throw ConfigError("must be in (0, 1]", "engine.perturbation_scale");
    }
    if (fold_count < 1) throw ConfigError("must be >= 1", "engine.fold_count");
    if (!(mutation_rate >= 0.0 && mutation_rate <= 1.0)) throw ConfigError("must be in [0, 1]", "engine.mutation_rate");
    if (adaptation_count > population_size - elite_count) {
      throw ConfigError("must be <= population_size - elite_count", "engine.adaptation_count");
    }
  }

  std::size_t exploitation_children() const { return (population_size - elite_count + 1) / 2; }
  std::size_t crossover_children() const { return population_size - elite_count - exploitation_children(); }
};

struct GenerationReport {
  std::uint64_t generation = 0;
  std::size_t fold_index = 0;
  double best_phi = 1.0;
  GenotypeId best_genotype_id = 0;
  Genotype best_genotype;
  std::vector<double> population_phis;  // survivors, ascending
  std::vector<GenotypeId> elite_ids;    // elites selected from this generation's parents
  std::uint64_t evaluations = 0;        // fresh individual evaluations this generation
  std::uint64_t requests = 0;           // trainer requests this generation

  double mean_phi() const {
    return population_phis.empty() ? 1.0
                                   : std::accumulate(population_phis.begin(), population_phis.end(), 0.0) /
                                         static_cast<double>(population_phis.size());
  }
};

// ---------------------------------------------------------------------------
// Operators

inline Genotype random_genotype(std::size_t block_count, Rng& rng) {
  std::vector<double> genes(block_count + 1);
  for (double& g : genes) g = rng.uniform();
  return Genotype(std::move(genes));
}

/// population_size genotypes with i.i.d. U[0,1] genes.
inline std::vector<Genotype> initialize_population(std::size_t population_size, std::size_t block_count, Rng& rng) {
  if (block_count < 1) throw ConfigError("at least one block is required");
  std::vector<Genotype> population;
  population.reserve(population_size);
  for (std::size_t i = 0; i < population_size; ++i) population.push_back(random_genotype(block_count, rng));
  return population;
}

inline std::vector<Genotype> initialize_population(const EngineConfig& config, std::size_t block_count) {
  Rng rng(config.rng_seed);
  return initialize_population(config.population_size, block_count, rng);
}

namespace detail {

/// Indices ordered best first: ascending phi, ties by ascending genotype id.
inline std::vector<std::size_t> rank_order(std::span<const FitnessRecord> population) {
  std::vector<std::size_t> order(population.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (population[a].phi != population[b].phi) return population[a].phi < population[b].phi;
    return population[a].genotype_id < population[b].genotype_id;
  });
  return order;
}

}  // namespace detail

/// Indices of the `elite_count` lowest-phi individuals, best first.
inline std::vector<std::size_t> select_elite_indices(std::span<const FitnessRecord> population,
                                                     std::size_t elite_count) {
  if (elite_count >= population.size()) {
    throw ConfigError("elite_count must be smaller than the population (" + std::to_string(population.size()) + ")",
                      "engine.elite_count");
  }
  auto order = detail::rank_order(population);
  order.resize(elite_count);
  return order;
}

inline std::vector<Genotype> select_elites(std::span<const FitnessRecord> population, std::size_t elite_count) {
  std::vector<Genotype> elites;
  for (std::size_t i : select_elite_indices(population, elite_count)) elites.push_back(population[i].genotype);
  return elites;
}

/// Local search around an elite: uniform noise on [-radius, radius] per gene, clamped.
inline Genotype exploitation(const Genotype& elite, double radius, Rng& rng) {
  if (!(radius >= 0.0)) throw ConfigError("exploitation radius must be >= 0");
  std::vector<double> genes(elite.genes().begin(), elite.genes().end());
  for (double& g : genes) g = std::clamp(g + rng.uniform(-radius, radius), 0.0, 1.0);
  return Genotype(std::move(genes));
}

/// Radius shrinks linearly from perturbation_scale at generation 0.
inline double exploitation_radius(const EngineConfig& config, std::uint64_t generation) {
  return config.perturbation_scale *
         (1.0 - static_cast<double>(generation) / static_cast<double>(config.max_generations));
}

/// Uniform crossover.
inline Genotype crossover(const Genotype& a, const Genotype& b, Rng& rng) {
  if (a.size() != b.size()) throw ConfigError("crossover parents differ in length");
  std::vector<double> genes(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) genes[i] = rng.bernoulli(0.5) ? a[i] : b[i];
  return Genotype(std::move(genes));
}

/// Each gene, with probability `rate`, gets N(0, scale^2) noise; then clamped.
inline Genotype mutation(const Genotype& genotype, double rate, double scale, Rng& rng) {
  if (!(rate >= 0.0 && rate <= 1.0)) throw ConfigError("mutation rate must be in [0, 1]");
  if (!(scale > 0.0)) throw ConfigError("mutation scale must be > 0");
  std::vector<double> genes(genotype.genes().begin(), genotype.genes().end());
  for (double& g : genes) {
    if (rng.bernoulli(rate)) g = std::clamp(g + rng.normal(0.0, scale), 0.0, 1.0);
  }
  return Genotype(std::move(genes));
}

struct AdaptationResult {
  std::vector<Genotype> population;   // same order as the input
  std::vector<std::size_t> replaced;  // input indices that were resampled, worst first
};

/// Replaces the `count` worst individuals (largest phi; ties: larger id is
/// worse) with fresh uniform genotypes.
inline AdaptationResult adapt(std::span<const FitnessRecord> population, std::size_t count, Rng& rng) {
  if (count >= population.size() && count != 0) {
    throw ConfigError("adaptation count must be smaller than the population");
  }
  AdaptationResult out;
  for (const auto& r : population) out.population.push_back(r.genotype);
  auto order = detail::rank_order(population);
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t i = order[order.size() - 1 - k];
    out.population[i] = random_genotype(population[i].genotype.block_count(), rng);
    out.replaced.push_back(i);
  }
  return out;
}

inline std::vector<Genotype> adaptation(std::span<const FitnessRecord> population, std::size_t count, Rng& rng) {
  return adapt(population, count, rng).population;
}

/// Default operator set. Swap in another type with the same members to try
/// alternative variation schemes.
struct StandardOperators {
  Genotype exploit(const Genotype& elite, double radius, Rng& rng) const { return exploitation(elite, radius, rng); }
  Genotype cross(const Genotype& a, const Genotype& b, Rng& rng) const { return crossover(a, b, rng); }
  Genotype mutate(const Genotype& g, double rate, double scale, Rng& rng) const { return mutation(g, rate, scale, rng); }
  AdaptationResult adapt(std::span<const FitnessRecord> pop, std::size_t count, Rng& rng) const {
    return biotune::adapt(pop, count, rng);
  }
};

/// Seeds handed to the trainer; fixed for the whole run so that fitness
/// values stay comparable across generations.
inline std::vector<std::int64_t> trial_seeds(std::uint64_t rng_seed, std::size_t count) {
  std::vector<std::int64_t> seeds;
  for (std::size_t i = 0; i < count; ++i) {
    seeds.push_back(static_cast<std::int64_t>(mix64(hash_combine(rng_seed, i)) & 0x7fffffffULL));
  }
  return seeds;
}

/// Ascending phi; ties by generation, then genotype id.
inline void sort_ranked(std::vector<FitnessRecord>& records) {
  std::stable_sort(records.begin(), records.end(), [](const FitnessRecord& a, const FitnessRecord& b) {
    if (a.phi != b.phi) return a.phi < b.phi;
    if (a.generation != b.generation) return a.generation < b.generation;
    return a.genotype_id < b.genotype_id;
  });
}

/// Everything needed to continue a run exactly where it stopped.
struct EngineState {
  std::uint64_t next_generation = 0;
  std::string rng_state;
  GenotypeId next_id = 0;
  std::vector<FitnessRecord> population;  // survivors of the last finished generation
  std::vector<FitnessRecord> history;     // every fresh evaluation, in order
  std::vector<GenerationReport> reports;
  std::map<CacheKey, FitnessRecord> cache;
  std::uint64_t requests_sent = 0;
  std::uint64_t penalized_seeds = 0;
};

/// Generational loop. Per generation g:
///   1. evaluate the population on fold g mod fold_count
///   2. pick elites
///   3. offspring: exploitation of elites, crossover of elites followed by
///      mutation, and fresh genotypes replacing the worst parents
///   4. evaluate offspring on the same fold
///   5. survivors = the elites plus the best of the remaining parents and
///      offspring, population_size in total
template <typename Operators = StandardOperators>
class BasicEngine {
 public:
  using GenerationCallback = std::function<void(const GenerationReport&)>;

  BasicEngine(EngineConfig config, BlockSpec spec, const PartitionPlan& plan, TrainerEndpoint& endpoint,
              TrainingBudget budget = {}, EvaluationOptions options = {}, Operators ops = {})
      : config_(std::move(config)), plan_(&plan),
        evaluator_(endpoint, std::move(spec), std::move(budget), plan, std::move(options)), ops_(std::move(ops)),
        rng_(config_.rng_seed), seeds_(trial_seeds(config_.rng_seed, config_.seed_count)) {
    config_.validate();
    if (plan.fold_count != config_.fold_count) {
      throw ConfigError("partition has " + std::to_string(plan.fold_count) + " folds", "engine.fold_count");
    }
    mutation_rate_ = config_.mutation_rate > 0.0
                         ? config_.mutation_rate
                         : 1.0 / static_cast<double>(evaluator_.spec().block_count() + 1);
  }

  bool finished() const noexcept { return next_generation_ >= config_.max_generations; }
  std::uint64_t next_generation() const noexcept { return next_generation_; }

  /// Runs one generation. On any exception the engine is left exactly as it
  /// was before the call.
  GenerationReport step() {
    if (finished()) throw ConfigError("run already finished");
    const EngineState backup = snapshot();
    try {
      return step_unchecked();
    } catch (...) {
      restore(backup);
      throw;
    }
  }

  /// Runs the remaining generations and returns every evaluation ranked.
  std::vector<FitnessRecord> run(const GenerationCallback& on_generation = {}) {
    while (!finished()) {
      const auto report = step();
      if (on_generation) on_generation(report);
    }
    return ranked();
  }

  std::vector<FitnessRecord> ranked() const {
    auto records = history_;
    sort_ranked(records);
    return records;
  }

  EngineState snapshot() const {
    EngineState s;
    s.next_generation = next_generation_;
    s.rng_state = rng_.state();
    s.next_id = next_id_;
    s.population = population_;
    s.history = history_;
    s.reports = reports_;
    s.cache = evaluator_.cache();
    s.requests_sent = evaluator_.requests_sent();
    s.penalized_seeds = evaluator_.penalized_seeds();
    return s;
  }

  void restore(const EngineState& s) {
    next_generation_ = s.next_generation;
    rng_.restore(s.rng_state);
    next_id_ = s.next_id;
    population_ = s.population;
    history_ = s.history;
    reports_ = s.reports;
    evaluator_.restore_cache(s.cache);
    evaluator_.restore_counters(s.requests_sent, s.penalized_seeds);
  }

  const EngineConfig& config() const noexcept { return config_; }
  const std::vector<GenerationReport>& reports() const noexcept { return reports_; }
  const std::vector<FitnessRecord>& history() const noexcept { return history_; }
  const std::vector<FitnessRecord>& population() const noexcept { return population_; }
  const std::vector<std::int64_t>& seeds() const noexcept { return seeds_; }
  const FitnessEvaluator& evaluator() const noexcept { return evaluator_; }
  double mutation_rate() const noexcept { return mutation_rate_; }

 private:
  GenerationReport step_unchecked() {
    const std::uint64_t g = next_generation_;
    const std::size_t fold = fold_for_generation(g, config_.fold_count);
    const std::size_t blocks = evaluator_.spec().block_count();
    const auto requests_before = evaluator_.requests_sent();

    std::vector<Candidate> parents_in;
    if (g == 0) {
      for (auto& genotype : initialize_population(config_.population_size, blocks, rng_)) {
        parents_in.push_back({next_id_++, std::move(genotype)});
      }
    } else {
      for (const auto& r : population_) parents_in.push_back({r.genotype_id, r.genotype});
    }

    GenerationReport report;
    report.generation = g;
    report.fold_index = fold;

    auto parents = evaluator_.evaluate(parents_in, fold, seeds_, g);
    record(parents, report);

    const auto elite_idx = select_elite_indices(parents, config_.elite_count);
    for (std::size_t i : elite_idx) report.elite_ids.push_back(parents[i].genotype_id);

    std::vector<Candidate> offspring;
    const double radius = exploitation_radius(config_, g);
    for (std::size_t k = 0; k < config_.exploitation_children(); ++k) {
      const auto& elite = parents[elite_idx[k % elite_idx.size()]].genotype;
      offspring.push_back({next_id_++, ops_.exploit(elite, radius, rng_)});
    }
    for (std::size_t k = 0; k < config_.crossover_children(); ++k) {
      const auto& [a, b] = pick_pair(parents, elite_idx);
      auto child = ops_.cross(a, b, rng_);
      offspring.push_back({next_id_++, ops_.mutate(child, mutation_rate_, config_.perturbation_scale, rng_)});
    }
    const auto adapted = ops_.adapt(parents, config_.adaptation_count, rng_);
    std::vector<std::uint8_t> dropped(parents.size(), 0);
    for (std::size_t i : adapted.replaced) {
      dropped[i] = 1;
      offspring.push_back({next_id_++, adapted.population[i]});
    }

    auto children = evaluator_.evaluate(offspring, fold, seeds_, g);
    record(children, report);

    std::vector<FitnessRecord> pool;
    for (std::size_t i = 0; i < parents.size(); ++i) {
      if (!dropped[i]) pool.push_back(std::move(parents[i]));
    }
    for (auto& c : children) pool.push_back(std::move(c));
    // Truncation over the union, except that this generation's elites always
    // carry over: more offspring than free slots could otherwise crowd one out.
    std::vector<std::uint8_t> keep(pool.size(), 0);
    std::size_t kept = 0;
    for (std::size_t i = 0; i < pool.size(); ++i) {
      if (std::find(report.elite_ids.begin(), report.elite_ids.end(), pool[i].genotype_id) != report.elite_ids.end()) {
        keep[i] = 1;
        ++kept;
      }
    }
    const auto order = detail::rank_order(pool);
    for (std::size_t i : order) {
      if (kept >= config_.population_size) break;
      if (!keep[i]) {
        keep[i] = 1;
        ++kept;
      }
    }
    std::vector<FitnessRecord> survivors;
    for (std::size_t i : order) {
      if (keep[i]) survivors.push_back(pool[i]);
    }

    report.best_phi = survivors.front().phi;
    report.best_genotype_id = survivors.front().genotype_id;
    report.best_genotype = survivors.front().genotype;
    for (const auto& s : survivors) report.population_phis.push_back(s.phi);
    report.requests = evaluator_.requests_sent() - requests_before;

    population_ = std::move(survivors);
    reports_.push_back(report);
    ++next_generation_;
    return report;
  }

  void record(const std::vector<FitnessRecord>& records, GenerationReport& report) {
    for (const auto& r : records) {
      if (r.cached) continue;
      history_.push_back(r);
      ++report.evaluations;
    }
  }

  /// Two distinct elites when there are at least two; otherwise the single
  /// elite is paired with a random parent.
  std::pair<const Genotype&, const Genotype&> pick_pair(const std::vector<FitnessRecord>& parents,
                                                        const std::vector<std::size_t>& elite_idx) {
    if (elite_idx.size() >= 2) {
      const auto i = rng_.below(elite_idx.size());
      auto j = rng_.below(elite_idx.size() - 1);
      if (j >= i) ++j;
      return {parents[elite_idx[i]].genotype, parents[elite_idx[j]].genotype};
    }
    return {parents[elite_idx[0]].genotype, parents[rng_.below(parents.size())].genotype};
  }

  EngineConfig config_;
  const PartitionPlan* plan_;
  FitnessEvaluator evaluator_;
  Operators ops_;
  Rng rng_;
  std::vector<std::int64_t> seeds_;
  double mutation_rate_ = 0.0;
  std::uint64_t next_generation_ = 0;
  GenotypeId next_id_ = 0;
  std::vector<FitnessRecord> population_;
  std::vector<FitnessRecord> history_;
  std::vector<GenerationReport> reports_;
};

using Engine = BasicEngine<>;

/// Baseline: `evaluations` uniform genotypes, evaluated population_size at a
/// time on the same fold schedule and seeds as the engine. Returns every
/// record ranked.
inline std::vector<FitnessRecord> random_search(const EngineConfig& config, const BlockSpec& spec,
                                                const PartitionPlan& plan, TrainerEndpoint& endpoint,
                                                std::size_t evaluations, std::uint64_t rng_seed,
                                                TrainingBudget budget = {}) {
  FitnessEvaluator evaluator(endpoint, spec, std::move(budget), plan);
  Rng rng(rng_seed);
  const auto seeds = trial_seeds(config.rng_seed, config.seed_count);
  std::vector<FitnessRecord> all;
  GenotypeId id = 0;
  for (std::uint64_t g = 0; all.size() < evaluations; ++g) {
    std::vector<Candidate> batch;
    while (batch.size() < config.population_size && all.size() + batch.size() < evaluations) {
      batch.push_back({id++, random_genotype(spec.block_count(), rng)});
    }
    for (auto& r : evaluator.evaluate(batch, fold_for_generation(g, plan.fold_count), seeds, g)) {
      all.push_back(std::move(r));
    }
  }
  sort_ranked(all);
  return all;
}

}  // namespace biotune
