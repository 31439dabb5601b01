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
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "biotune/errors.hpp"

namespace biotune {

/// Importance genes for blocks 0..B followed by the freezing-threshold gene.
///
/// Invariants: at least two genes, every gene finite and within [0, 1].
class Genotype {
 public:
  Genotype() = default;

  explicit Genotype(std::vector<double> genes) : genes_(std::move(genes)) {
    if (genes_.size() < 2) {
      throw ConfigError("genotype needs at least one block gene and the threshold gene");
    }
    for (std::size_t i = 0; i < genes_.size(); ++i) {
      const double g = genes_[i];
      if (!std::isfinite(g) || g < 0.0 || g > 1.0) {
        throw ConfigError("gene " + std::to_string(i) + " outside [0, 1]");
      }
    }
  }

  /// Clamps every gene into [0, 1] instead of rejecting.
  static Genotype clamped(std::vector<double> genes) {
    for (double& g : genes) g = std::isnan(g) ? 0.0 : std::clamp(g, 0.0, 1.0);
    return Genotype(std::move(genes));
  }

  std::size_t block_count() const noexcept { return genes_.empty() ? 0 : genes_.size() - 1; }
  std::size_t size() const noexcept { return genes_.size(); }

  std::span<const double> genes() const noexcept { return genes_; }
  std::span<const double> block_genes() const noexcept {
    return std::span<const double>(genes_).first(block_count());
  }
  double threshold() const { return genes_.back(); }
  double operator[](std::size_t i) const { return genes_[i]; }

  friend bool operator==(const Genotype&, const Genotype&) = default;

 private:
  std::vector<double> genes_;
};

/// Block grouping supplied by the run configuration.
struct BlockSpec {
  std::vector<std::string> names;
  std::vector<double> base_rates;
  /// Optional; empty means "unknown" and reporting falls back to one unit per block.
  std::vector<std::uint64_t> param_counts;

  std::size_t block_count() const noexcept { return base_rates.size(); }

  void validate() const {
    if (base_rates.empty()) throw ConfigError("at least one block is required", "blocks");
    if (!names.empty() && names.size() != base_rates.size()) {
      throw ConfigError("expected " + std::to_string(base_rates.size()) + " names, got " +
                            std::to_string(names.size()),
                        "blocks.names");
    }
    for (std::size_t b = 0; b < base_rates.size(); ++b) {
      if (!std::isfinite(base_rates[b]) || base_rates[b] <= 0.0) {
        throw ConfigError("must be finite and > 0", "blocks.base_rates[" + std::to_string(b) + "]");
      }
    }
    if (!param_counts.empty() && param_counts.size() != base_rates.size()) {
      throw ConfigError("expected " + std::to_string(base_rates.size()) + " entries",
                        "blocks.param_counts");
    }
  }

  std::string name(std::size_t b) const {
    return b < names.size() ? names[b] : "block" + std::to_string(b);
  }

  /// Uniform base rate for every block.
  static BlockSpec uniform(std::size_t blocks, double base_rate) {
    BlockSpec spec;
    spec.base_rates.assign(blocks, base_rate);
    for (std::size_t b = 0; b < blocks; ++b) spec.names.push_back("block" + std::to_string(b));
    return spec;
  }
};

/// Decoded phenotype. All vectors have one entry per block.
struct FineTuneConfig {
  std::vector<std::uint8_t> mask;  // 1 = fine-tuned, 0 = frozen
  std::vector<double> weights;     // importance weight, [0.1, 10]
  std::vector<double> eta;         // mask * weight
  std::vector<double> rates;       // eta * base rate

  std::size_t block_count() const noexcept { return mask.size(); }

  friend bool operator==(const FineTuneConfig&, const FineTuneConfig&) = default;
};

/// Block b is trained iff its gene is strictly above the threshold gene.
inline std::vector<std::uint8_t> selection_mask(const Genotype& genotype) {
  const double threshold = genotype.threshold();
  std::vector<std::uint8_t> mask;
  mask.reserve(genotype.block_count());
  for (double g : genotype.block_genes()) mask.push_back(g > threshold ? 1 : 0);
  return mask;
}

/// Maps a gene in [0, 1] onto a multiplier in [0.1, 10] on a log scale.
inline double importance_weight(double gene) { return std::pow(10.0, 2.0 * (gene - 0.5)); }

inline std::vector<double> importance_weights(const Genotype& genotype) {
  std::vector<double> weights;
  weights.reserve(genotype.block_count());
  for (double g : genotype.block_genes()) weights.push_back(importance_weight(g));
  return weights;
}

inline FineTuneConfig decode(const Genotype& genotype, const BlockSpec& spec) {
  if (genotype.block_count() != spec.block_count()) {
    throw ConfigError("genotype has " + std::to_string(genotype.size()) + " genes but the block spec needs " +
                      std::to_string(spec.block_count() + 1));
  }
  FineTuneConfig config;
  config.mask = selection_mask(genotype);
  config.weights = importance_weights(genotype);
  const std::size_t n = spec.block_count();
  config.eta.resize(n);
  config.rates.resize(n);
  for (std::size_t b = 0; b < n; ++b) {
    config.eta[b] = config.mask[b] ? config.weights[b] : 0.0;
    config.rates[b] = config.eta[b] * spec.base_rates[b];
  }
  return config;
}

/// Share of parameters left trainable by `mask`.
inline double trainable_fraction(std::span<const std::uint8_t> mask,
                                 std::span<const std::uint64_t> param_counts) {
  if (mask.size() != param_counts.size()) {
    throw ConfigError("mask has " + std::to_string(mask.size()) + " blocks but " +
                      std::to_string(param_counts.size()) + " parameter counts were given");
  }
  std::uint64_t total = 0;
  std::uint64_t trainable = 0;
  for (std::size_t b = 0; b < mask.size(); ++b) {
    total += param_counts[b];
    if (mask[b]) trainable += param_counts[b];
  }
  if (total == 0) throw ConfigError("trainable fraction undefined: all parameter counts are zero");
  if (trainable == total) return 1.0;
  return static_cast<double>(trainable) / static_cast<double>(total);
}

inline double trainable_fraction(const FineTuneConfig& config,
                                 std::span<const std::uint64_t> param_counts) {
  return trainable_fraction(config.mask, param_counts);
}

/// Configured parameter counts, or one unit per block when none are configured.
inline std::vector<std::uint64_t> effective_param_counts(const BlockSpec& spec) {
  if (!spec.param_counts.empty()) return spec.param_counts;
  return std::vector<std::uint64_t>(spec.block_count(), 1);
}

}  // namespace biotune
