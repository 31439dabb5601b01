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
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "biotune/endpoint.hpp"
#include "biotune/errors.hpp"
#include "biotune/genotype.hpp"
#include "biotune/random.hpp"

// In-process fitness landscapes with known optima. They stand in for a real
// trainer so the whole search loop can be exercised without an ML framework.
// Every surrogate is a pure function of (job, seed, fold_index).
namespace biotune {

class SurrogateEndpoint : public TrainerEndpoint {
 public:
  using Landscape = std::function<double(const Job&)>;

  SurrogateEndpoint(std::string name, Landscape landscape, std::size_t capacity = 8)
      : name_(std::move(name)), landscape_(std::move(landscape)), capacity_(capacity) {
    if (capacity_ < 1) throw ConfigError("must be >= 1", "trainer.capacity");
  }

  EndpointInfo info() const override {
    return EndpointInfo{EndpointKind::surrogate, capacity_, 0.0, 0};
  }

  std::vector<JobResult> run_batch(std::span<const Job> jobs) override {
    std::vector<JobResult> results;
    results.reserve(jobs.size());
    for (const auto& job : jobs) {
      JobResult r;
      r.outcome = Outcome::ok;
      r.response.request_id = job.request.request_id;
      r.response.status = protocol::Status::ok;
      r.response.validation_accuracy = std::clamp(landscape_(job), 0.0, 1.0);
      r.response.epochs_run = job.request.max_epochs;
      results.push_back(std::move(r));
    }
    return results;
  }

  const std::string& name() const noexcept { return name_; }

 private:
  std::string name_;
  Landscape landscape_;
  std::size_t capacity_;
};

/// Known optimal freeze pattern plus target log10 rate multipliers.
struct MaskMatchTarget {
  std::vector<std::uint8_t> mask;
  /// log10(rate / base_rate) the landscape rewards for each trained block,
  /// within (-1, 1].
  std::vector<double> exponents;
  std::vector<double> base_rates;
  double noise = 0.0;
  /// Maximum accuracy lost to rate mismatch. Kept small so that the expected
  /// mismatch of an untuned block costs less than one wrong mask bit;
  /// otherwise freezing everything is a trap no search can leave.
  double rate_penalty = 0.1;

  std::size_t block_count() const noexcept { return mask.size(); }

  void validate() const {
    if (mask.empty()) throw ConfigError("mask_match needs at least one block", "trainer.target_mask");
    if (exponents.size() != mask.size() || base_rates.size() != mask.size()) {
      throw ConfigError("target mask, exponents and base rates must have equal length", "trainer");
    }
    for (double e : exponents) {
      if (!(e > -1.0 && e <= 1.0)) throw ConfigError("exponent outside (-1, 1]", "trainer.target_exponents");
    }
    if (!(noise >= 0.0)) throw ConfigError("must be >= 0", "trainer.noise");
    if (!(rate_penalty >= 0.0 && rate_penalty <= 1.0)) throw ConfigError("must be in [0, 1]", "trainer.rate_penalty");
  }

  /// A genotype at the global optimum. Trained blocks get the gene whose
  /// weight equals the target exponent; frozen blocks get 0; the threshold
  /// sits halfway below the smallest trained gene.
  Genotype optimal_genotype() const {
    std::vector<double> genes(mask.size() + 1, 0.0);
    double smallest = 1.0;
    for (std::size_t b = 0; b < mask.size(); ++b) {
      if (mask[b]) {
        genes[b] = 0.5 + exponents[b] / 2.0;
        smallest = std::min(smallest, genes[b]);
      }
    }
    genes.back() = smallest / 2.0;
    return Genotype(std::move(genes));
  }
};

namespace detail {

inline std::uint64_t noise_seed(const Job& job) {
  std::uint64_t h = mix64(static_cast<std::uint64_t>(job.request.seed));
  h = hash_combine(h, static_cast<std::uint64_t>(job.request.fold_index));
  for (double r : job.request.block_rates) h = hash_combine(h, std::bit_cast<std::uint64_t>(r));
  return h;
}

}  // namespace detail

/// Accuracy at the trainer's view of the configuration:
///   1 - hamming(mask, target)/n - rate_penalty * mean_trained |log10(rate/base) - target| / 2
/// plus seeded Gaussian noise, clamped to [0, 1].
inline double mask_match_accuracy(const MaskMatchTarget& target, const protocol::EvaluateRequest& req,
                                  std::uint64_t noise_seed = 0) {
  const std::size_t n = target.block_count();
  if (req.frozen_mask.size() != n) throw ConfigError("request has the wrong number of blocks");
  std::size_t mismatches = 0;
  double deviation = 0.0;
  std::size_t trained = 0;
  for (std::size_t b = 0; b < n; ++b) {
    if (req.frozen_mask[b] != target.mask[b]) ++mismatches;
    if (req.frozen_mask[b]) {
      const double exponent = std::log10(req.block_rates[b] / target.base_rates[b]);
      deviation += std::min(1.0, std::abs(exponent - target.exponents[b]) / 2.0);
      ++trained;
    }
  }
  double acc = 1.0 - static_cast<double>(mismatches) / static_cast<double>(n);
  if (trained > 0) acc -= target.rate_penalty * deviation / static_cast<double>(trained);
  if (target.noise > 0.0) {
    Rng rng(noise_seed);
    acc += rng.normal(0.0, target.noise);
  }
  return std::clamp(acc, 0.0, 1.0);
}

inline std::unique_ptr<SurrogateEndpoint> surrogate_mask_match(MaskMatchTarget target, std::size_t capacity = 8) {
  target.validate();
  auto landscape = [target = std::move(target)](const Job& job) {
    return mask_match_accuracy(target, job.request, detail::noise_seed(job));
  };
  return std::make_unique<SurrogateEndpoint>("mask_match", std::move(landscape), capacity);
}

/// Random instance: each block trained with probability 1/2 (at least one
/// trained), exponents uniform on [-0.8, 0.8].
inline MaskMatchTarget random_mask_match_target(std::span<const double> base_rates, std::uint64_t seed,
                                                double noise = 0.0) {
  Rng rng(seed);
  MaskMatchTarget t;
  t.base_rates.assign(base_rates.begin(), base_rates.end());
  for (std::size_t b = 0; b < base_rates.size(); ++b) {
    t.mask.push_back(rng.bernoulli(0.5) ? 1 : 0);
    t.exponents.push_back(rng.uniform(-0.8, 0.8));
  }
  if (std::find(t.mask.begin(), t.mask.end(), 1) == t.mask.end()) t.mask[rng.below(t.mask.size())] = 1;
  t.noise = noise;
  return t;
}

/// Smooth landscape over raw genes: 1 - |genes - optimum|^2 / len.
inline double sphere_accuracy(std::span<const double> optimum, std::span<const double> genes) {
  if (optimum.size() != genes.size()) throw ConfigError("genotype length differs from the sphere optimum");
  double d2 = 0.0;
  for (std::size_t i = 0; i < genes.size(); ++i) d2 += (genes[i] - optimum[i]) * (genes[i] - optimum[i]);
  return 1.0 - d2 / static_cast<double>(genes.size());
}

inline std::unique_ptr<SurrogateEndpoint> surrogate_sphere(std::vector<double> optimum, std::size_t capacity = 8) {
  for (double v : optimum) {
    if (!(v >= 0.0 && v <= 1.0)) throw ConfigError("optimum outside [0, 1]", "trainer.optimum");
  }
  auto landscape = [optimum = std::move(optimum)](const Job& job) {
    return sphere_accuracy(optimum, job.genotype.genes());
  };
  return std::make_unique<SurrogateEndpoint>("sphere", std::move(landscape), capacity);
}

}  // namespace biotune
