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
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "biotune/errors.hpp"
#include "biotune/random.hpp"

namespace biotune {

using SampleId = std::string;
using ClassLabel = std::string;
using LabeledSample = std::pair<SampleId, ClassLabel>;

/// Class-stratified folds of the training set.
///
/// Folds are pairwise disjoint, cover every sample, and for each class the
/// per-fold counts differ by at most one.
struct PartitionPlan {
  std::size_t fold_count = 0;
  std::vector<std::vector<SampleId>> folds;
  std::map<SampleId, ClassLabel> class_of;
  /// Classes with fewer samples than folds. Still valid, reported as a warning.
  std::vector<ClassLabel> sparse_classes;

  const std::vector<SampleId>& fold(std::size_t index) const { return folds.at(index); }
  std::size_t sample_count() const noexcept { return class_of.size(); }
};

/// Fold trained on at generation `generation`. The schedule has period `fold_count`.
constexpr std::size_t fold_for_generation(std::uint64_t generation, std::size_t fold_count) {
  return fold_count == 0 ? 0 : static_cast<std::size_t>(generation % fold_count);
}

/// Per-class seeded shuffle followed by a round-robin deal into folds. The
/// deal cursor carries over from one class to the next so that overall fold
/// sizes are balanced too.
inline PartitionPlan build_partition(std::span<const LabeledSample> labels, std::size_t fold_count,
                                     std::uint64_t seed) {
  if (fold_count < 1) throw ConfigError("must be >= 1", "partition.fold_count");
  if (labels.empty()) throw ConfigError("no labeled samples", "partition.labels");

  PartitionPlan plan;
  plan.fold_count = fold_count;
  plan.folds.resize(fold_count);

  std::map<ClassLabel, std::vector<SampleId>> by_class;
  for (const auto& [id, label] : labels) {
    if (!plan.class_of.emplace(id, label).second) {
      throw ConfigError("duplicate sample id '" + id + "'", "partition.labels");
    }
    by_class[label].push_back(id);
  }

  Rng rng(seed);
  std::size_t cursor = 0;
  for (auto& [label, ids] : by_class) {
    // Sort first so the plan does not depend on input order.
    std::sort(ids.begin(), ids.end());
    rng.shuffle(std::span<SampleId>(ids));
    if (ids.size() < fold_count) plan.sparse_classes.push_back(label);
    for (auto& id : ids) {
      plan.folds[cursor].push_back(std::move(id));
      cursor = (cursor + 1) % fold_count;
    }
  }
  return plan;
}

inline PartitionPlan build_partition(const std::vector<LabeledSample>& labels, std::size_t fold_count,
                                     std::uint64_t seed) {
  return build_partition(std::span<const LabeledSample>(labels), fold_count, seed);
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace detail

/// Parses `sample_id,class_label` lines. Blank lines and lines starting with
/// '#' are skipped. A first line of exactly "sample_id,class_label" is
/// treated as a header.
inline std::vector<LabeledSample> parse_labels(std::istream& in, const std::string& source = "labels") {
  std::vector<LabeledSample> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto text = detail::trim(line);
    if (text.empty() || text.front() == '#') continue;
    const auto comma = text.find(',');
    if (comma == std::string_view::npos) {
      throw ConfigError("expected 'sample_id,class_label'", source + ":" + std::to_string(line_no));
    }
    const auto id = detail::trim(text.substr(0, comma));
    const auto label = detail::trim(text.substr(comma + 1));
    if (id.empty() || label.empty()) {
      throw ConfigError("empty sample id or label", source + ":" + std::to_string(line_no));
    }
    if (out.empty() && id == "sample_id" && label == "class_label") continue;
    out.emplace_back(std::string(id), std::string(label));
  }
  return out;
}

inline std::vector<LabeledSample> load_labels(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open labels file '" + path + "'", "partition.labels_file");
  return parse_labels(in, path);
}

}  // namespace biotune
