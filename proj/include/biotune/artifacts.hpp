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

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "biotune/checkpoint.hpp"
#include "biotune/csv.hpp"
#include "biotune/engine.hpp"
#include "biotune/fitness.hpp"
#include "biotune/genotype.hpp"

// CSV artifacts of a run. Numbers are written in shortest round-trip form, so
// genes read back from topk.csv decode to exactly the masks, weights and
// rates written next to them.
namespace biotune::artifacts {

inline constexpr const char* kGenerations = "generations.csv";
inline constexpr const char* kTopK = "topk.csv";
inline constexpr const char* kHeatmap = "heatmap.csv";
inline constexpr const char* kParams = "params.csv";
inline constexpr const char* kEvaluations = "evaluations.csv";
inline constexpr const char* kCheckpoint = "checkpoint.json";
inline constexpr const char* kResolvedConfig = "config.resolved.json";

/// Best record of each distinct genotype, best first, at most `k` entries.
inline std::vector<FitnessRecord> top_k(const std::vector<FitnessRecord>& ranked, std::size_t k) {
  std::vector<FitnessRecord> out;
  std::set<GenotypeId> seen;
  for (const auto& r : ranked) {
    if (out.size() >= k) break;
    if (seen.insert(r.genotype_id).second) out.push_back(r);
  }
  return out;
}

inline std::string generations_csv(const std::vector<GenerationReport>& reports) {
  std::string text = "generation,fold_index,best_phi,best_accuracy,mean_phi,best_genotype_id,evaluations,requests\n";
  for (const auto& g : reports) {
    csv::Row row;
    row << g.generation << static_cast<std::uint64_t>(g.fold_index) << g.best_phi << 1.0 - g.best_phi << g.mean_phi()
        << g.best_genotype_id << g.evaluations << g.requests;
    text += row.str() + "\n";
  }
  return text;
}

inline std::string topk_csv(const std::vector<FitnessRecord>& top, const BlockSpec& spec) {
  const std::size_t n = spec.block_count();
  csv::Row header;
  header << "rank" << "genotype_id" << "generation" << "fold_index" << "phi" << "mean_accuracy" << "failed_seeds";
  for (std::size_t b = 0; b < n; ++b) header << "gene_" + std::to_string(b);
  header << "threshold";
  for (const char* prefix : {"mask_", "weight_", "eta_", "rate_"}) {
    for (std::size_t b = 0; b < n; ++b) header << prefix + std::to_string(b);
  }
  std::string text = header.str() + "\n";
  std::uint64_t rank = 1;
  for (const auto& r : top) {
    const auto cfg = decode(r.genotype, spec);
    std::uint64_t failed = 0;
    for (auto f : r.seed_failed) failed += f;
    csv::Row row;
    row << rank++ << r.genotype_id << r.generation << static_cast<std::uint64_t>(r.fold_index) << r.phi
        << r.mean_accuracy() << failed;
    for (double g : r.genotype.genes()) row << g;
    for (auto m : cfg.mask) row << static_cast<int>(m);
    for (double w : cfg.weights) row << w;
    for (double e : cfg.eta) row << e;
    for (double x : cfg.rates) row << x;
    text += row.str() + "\n";
  }
  return text;
}

/// Per-block effective multiplier of each top configuration: 0 for frozen
/// blocks, otherwise within [0.1, 10].
inline std::string heatmap_csv(const std::vector<FitnessRecord>& top, const BlockSpec& spec) {
  csv::Row header;
  header << "rank" << "genotype_id";
  for (std::size_t b = 0; b < spec.block_count(); ++b) header << spec.name(b);
  std::string text = header.str() + "\n";
  std::uint64_t rank = 1;
  for (const auto& r : top) {
    const auto cfg = decode(r.genotype, spec);
    csv::Row row;
    row << rank++ << r.genotype_id;
    for (double e : cfg.eta) row << e;
    text += row.str() + "\n";
  }
  return text;
}

inline std::string params_csv(const std::vector<FitnessRecord>& top, const BlockSpec& spec) {
  const auto counts = effective_param_counts(spec);
  std::uint64_t total = 0;
  for (auto c : counts) total += c;
  std::string text = "rank,genotype_id,trainable_params,total_params,trainable_fraction\n";
  std::uint64_t rank = 1;
  for (const auto& r : top) {
    const auto mask = selection_mask(r.genotype);
    std::uint64_t trainable = 0;
    for (std::size_t b = 0; b < mask.size(); ++b) {
      if (mask[b]) trainable += counts[b];
    }
    csv::Row row;
    row << rank++ << r.genotype_id << trainable << total << trainable_fraction(mask, counts);
    text += row.str() + "\n";
  }
  return text;
}

inline std::string evaluations_csv(const std::vector<FitnessRecord>& history) {
  std::string text = "genotype_id,generation,fold_index,phi,mean_accuracy,seed_accuracies,failed_seeds,wall_time\n";
  for (const auto& r : history) {
    std::string accs;
    for (std::size_t i = 0; i < r.seed_accuracies.size(); ++i) {
      if (i) accs += ';';
      accs += csv::format(r.seed_accuracies[i]);
    }
    std::uint64_t failed = 0;
    for (auto f : r.seed_failed) failed += f;
    csv::Row row;
    row << r.genotype_id << r.generation << static_cast<std::uint64_t>(r.fold_index) << r.phi << r.mean_accuracy()
        << accs << failed << r.wall_time;
    text += row.str() + "\n";
  }
  return text;
}

/// Writes all CSV artifacts for the current engine state into `dir`.
inline void write_all(const std::filesystem::path& dir, const EngineState& state, const BlockSpec& spec,
                      std::size_t k) {
  auto ranked = state.history;
  sort_ranked(ranked);
  const auto top = top_k(ranked, k);
  write_file_atomic(dir / kGenerations, generations_csv(state.reports));
  write_file_atomic(dir / kTopK, topk_csv(top, spec));
  write_file_atomic(dir / kHeatmap, heatmap_csv(top, spec));
  write_file_atomic(dir / kParams, params_csv(top, spec));
  write_file_atomic(dir / kEvaluations, evaluations_csv(state.history));
}

}  // namespace biotune::artifacts
