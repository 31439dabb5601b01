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
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "biotune/partitioner.hpp"

namespace biotune {
namespace {

std::vector<LabeledSample> make_labels(const std::vector<std::pair<std::string, int>>& classes) {
  std::vector<LabeledSample> labels;
  int next = 0;
  for (const auto& [label, count] : classes) {
    for (int i = 0; i < count; ++i) labels.emplace_back("id" + std::to_string(next++), label);
  }
  return labels;
}

std::map<ClassLabel, std::vector<std::size_t>> class_counts(const PartitionPlan& plan) {
  std::map<ClassLabel, std::vector<std::size_t>> counts;
  for (std::size_t f = 0; f < plan.fold_count; ++f) {
    for (const auto& id : plan.folds[f]) {
      auto& c = counts[plan.class_of.at(id)];
      c.resize(plan.fold_count, 0);
      ++c[f];
    }
  }
  return counts;
}

TEST(BuildPartitionTest, TwoBalancedClassesIntoTwoFolds) {
  const auto plan = build_partition(make_labels({{"A", 5}, {"B", 5}}), 2, 3);
  ASSERT_EQ(plan.folds.size(), 2u);
  EXPECT_EQ(plan.folds[0].size(), 5u);
  EXPECT_EQ(plan.folds[1].size(), 5u);
  for (const auto& [label, counts] : class_counts(plan)) {
    EXPECT_LE(std::max(counts[0], counts[1]) - std::min(counts[0], counts[1]), 1u) << label;
    EXPECT_EQ(counts[0] + counts[1], 5u);
  }
}

TEST(BuildPartitionTest, SingleFoldHoldsEverything) {
  const auto labels = make_labels({{"A", 4}, {"B", 3}});
  const auto plan = build_partition(labels, 1, 0);
  ASSERT_EQ(plan.folds.size(), 1u);
  EXPECT_EQ(plan.folds[0].size(), labels.size());
}

TEST(BuildPartitionTest, SevenSamplesThreeFolds) {
  const auto plan = build_partition(make_labels({{"A", 7}}), 3, 11);
  std::vector<std::size_t> sizes;
  for (const auto& f : plan.folds) sizes.push_back(f.size());
  std::sort(sizes.begin(), sizes.end());
  EXPECT_EQ(sizes, (std::vector<std::size_t>{2, 2, 3}));
}

TEST(BuildPartitionTest, SparseClassIsReportedButValid) {
  const auto plan = build_partition(make_labels({{"A", 9}, {"rare", 2}}), 4, 5);
  EXPECT_EQ(plan.sparse_classes, std::vector<ClassLabel>{"rare"});
  const auto counts = class_counts(plan).at("rare");
  EXPECT_LE(*std::max_element(counts.begin(), counts.end()), 1u);
}

TEST(BuildPartitionTest, Errors) {
  EXPECT_THROW(build_partition(make_labels({{"A", 3}}), 0, 0), ConfigError);
  EXPECT_THROW(build_partition(std::vector<LabeledSample>{}, 2, 0), ConfigError);
  EXPECT_THROW(build_partition(std::vector<LabeledSample>{{"x", "A"}, {"x", "B"}}, 2, 0), ConfigError);
}

TEST(BuildPartitionTest, DeterministicAndOrderIndependent) {
  auto labels = make_labels({{"A", 13}, {"B", 8}, {"C", 21}});
  const auto a = build_partition(labels, 3, 42);
  std::reverse(labels.begin(), labels.end());
  const auto b = build_partition(labels, 3, 42);
  EXPECT_EQ(a.folds, b.folds);
  const auto c = build_partition(labels, 3, 43);
  EXPECT_NE(a.folds, c.folds);
}

TEST(BuildPartitionTest, PropertiesOverRandomLabelSets) {
  Rng rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t classes = 1 + rng.below(10);
    const std::size_t n = 1 + rng.below(800);
    const std::size_t folds = 1 + rng.below(10);
    std::vector<LabeledSample> labels;
    for (std::size_t i = 0; i < n; ++i) labels.emplace_back("s" + std::to_string(i), "c" + std::to_string(rng.below(classes)));
    const auto plan = build_partition(labels, folds, trial);

    std::vector<SampleId> all;
    for (const auto& f : plan.folds) all.insert(all.end(), f.begin(), f.end());
    std::sort(all.begin(), all.end());
    std::vector<SampleId> expected;
    for (const auto& [id, label] : labels) expected.push_back(id);
    std::sort(expected.begin(), expected.end());
    ASSERT_EQ(all, expected);

    for (const auto& [label, counts] : class_counts(plan)) {
      const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
      ASSERT_LE(*hi - *lo, 1u) << label;
    }
  }
}

TEST(FoldScheduleTest, Examples) {
  EXPECT_EQ(fold_for_generation(5, 3), 2u);
  EXPECT_EQ(fold_for_generation(0, 4), 0u);
  EXPECT_EQ(fold_for_generation(9, 3), 0u);
  static_assert(fold_for_generation(7, 7) == 0);
}

TEST(FoldScheduleTest, Periodic) {
  for (std::size_t n = 1; n <= 10; ++n) {
    for (std::uint64_t g = 0; g < 50; ++g) EXPECT_EQ(fold_for_generation(g, n), fold_for_generation(g + n, n));
  }
}

TEST(ParseLabelsTest, HeaderCommentsAndBlanks) {
  std::istringstream in("sample_id,class_label\n# comment\n\nimg1, cat\nimg2,dog\r\n");
  const auto labels = parse_labels(in);
  ASSERT_EQ(labels.size(), 2u);
  EXPECT_EQ(labels[0], (LabeledSample{"img1", "cat"}));
  EXPECT_EQ(labels[1], (LabeledSample{"img2", "dog"}));
}

TEST(ParseLabelsTest, ErrorsNameTheLine) {
  std::istringstream in("a,x\nbroken line\n");
  try {
    parse_labels(in, "labels.csv");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "labels.csv:2");
  }
  std::istringstream empty_label("a,\n");
  EXPECT_THROW(parse_labels(empty_label), ConfigError);
}

}  // namespace
}  // namespace biotune
