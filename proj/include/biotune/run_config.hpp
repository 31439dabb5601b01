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
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "biotune/digest.hpp"
#include "biotune/engine.hpp"
#include "biotune/errors.hpp"
#include "biotune/fitness.hpp"
#include "biotune/genotype.hpp"
#include "biotune/partitioner.hpp"

namespace biotune {

namespace fs = std::filesystem;

struct PartitionSource {
  std::size_t fold_count = 3;
  std::optional<fs::path> labels_file;
  std::vector<LabeledSample> inline_labels;
  std::size_t synthetic_samples = 0;
  std::size_t synthetic_classes = 0;
  std::optional<std::uint64_t> seed;  // defaults to engine.rng_seed
  FoldTransfer transfer = FoldTransfer::sample_ids;
  std::string plan_ref = "plan";
};

struct TrainerConfig {
  enum class Kind { external, sphere, mask_match };
  Kind kind = Kind::sphere;

  // external
  std::vector<std::string> command;
  std::size_t capacity = 1;
  double timeout_seconds = 3600.0;
  int retry_budget = 1;
  FailurePolicy failure_policy = FailurePolicy::penalize;

  // sphere
  std::vector<double> optimum;  // empty: drawn from target_seed

  // mask_match
  std::vector<std::uint8_t> target_mask;  // empty: drawn from target_seed
  std::vector<double> target_exponents;
  double noise = 0.0;
  double rate_penalty = 0.1;

  std::uint64_t target_seed = 0;
};

/// Parsed and validated run configuration. Every default from the
/// reference setup is pre-filled, so a minimal file names only blocks and
/// the trainer.
struct RunConfig {
  EngineConfig engine;
  BlockSpec blocks;
  TrainingBudget budget;
  PartitionSource partition;
  TrainerConfig trainer;
  fs::path output_dir = "biotune-run";
  std::size_t top_k = 5;

  fs::path source_path;  // the file this was loaded from, absolute
  nlohmann::json resolved;  // canonical form; basis of the digest

  std::string digest() const { return Fnv1a().update(resolved.dump()).hex(); }
};

namespace detail {

using nlohmann::json;

/// Walks one JSON object, tracking the dotted path for error messages and
/// rejecting keys nobody asked for.
class ObjectReader {
 public:
  ObjectReader(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ConfigError("must be an object", path_.empty() ? "<root>" : path_);
  }

  std::string key_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  bool has(const std::string& key) {
    seen_.insert(key);
    return obj_.contains(key) && !obj_.at(key).is_null();
  }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    return obj_.at(key);
  }

  template <typename T>
  T get(const std::string& key, T fallback) {
    if (!has(key)) return fallback;
    return as<T>(obj_.at(key), key_path(key));
  }

  template <typename T>
  T require(const std::string& key) {
    if (!has(key)) throw ConfigError("is required", key_path(key));
    return as<T>(obj_.at(key), key_path(key));
  }

  ObjectReader child(const std::string& key) {
    seen_.insert(key);
    static const json empty = json::object();
    if (!obj_.contains(key) || obj_.at(key).is_null()) return ObjectReader(empty, key_path(key));
    return ObjectReader(obj_.at(key), key_path(key));
  }

  void finish() const {
    for (const auto& [key, value] : obj_.items()) {
      if (!seen_.count(key)) throw ConfigError("unknown key", key_path(key));
    }
  }

  template <typename T>
  static T as(const json& v, const std::string& where) {
    try {
      if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
        if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
          throw ConfigError("must be a non-negative integer", where);
        }
      } else if constexpr (std::is_same_v<T, int> || std::is_same_v<T, std::int64_t>) {
        if (!v.is_number_integer()) throw ConfigError("must be an integer", where);
      } else if constexpr (std::is_same_v<T, double>) {
        if (!v.is_number()) throw ConfigError("must be a number", where);
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw ConfigError("must be a string", where);
      } else if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ConfigError("must be true or false", where);
      }
      return v.get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("wrong type (") + e.what() + ")", where);
    }
  }

 private:
  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

inline fs::path resolve(const fs::path& base_dir, const fs::path& p) {
  return p.is_absolute() ? p : (base_dir / p).lexically_normal();
}

inline void check_name(const std::string& name, const std::string& where) {
  if (name.empty() || name.find_first_of(",\"\n\r") != std::string::npos) {
    throw ConfigError("block names must be non-empty and free of commas, quotes and newlines", where);
  }
}

}  // namespace detail

/// Parses a configuration document. Relative paths are taken relative to
/// `base_dir`.
inline RunConfig parse_run_config(const nlohmann::json& doc, const fs::path& base_dir) {
  using detail::ObjectReader;
  RunConfig cfg;
  ObjectReader root(doc, "");

  {
    auto e = root.child("engine");
    auto& ec = cfg.engine;
    ec.population_size = e.get<std::size_t>("population_size", ec.population_size);
    ec.elite_count = e.get<std::size_t>("elite_count", ec.elite_count);
    ec.max_generations = e.get<std::size_t>("max_generations", ec.max_generations);
    ec.seed_count = e.get<std::size_t>("seed_count", ec.seed_count);
    ec.perturbation_scale = e.get<double>("perturbation_scale", ec.perturbation_scale);
    ec.rng_seed = e.get<std::uint64_t>("rng_seed", ec.rng_seed);
    ec.mutation_rate = e.get<double>("mutation_rate", ec.mutation_rate);
    ec.adaptation_count = e.get<std::size_t>("adaptation_count", ec.adaptation_count);
    if (e.has("fold_count")) {
      throw ConfigError("set the fold count under partition.fold_count", "engine.fold_count");
    }
    e.finish();
  }

  {
    auto b = root.child("blocks");
    auto& spec = cfg.blocks;
    if (b.has("names")) spec.names = b.require<std::vector<std::string>>("names");
    for (std::size_t i = 0; i < spec.names.size(); ++i) {
      detail::check_name(spec.names[i], "blocks.names[" + std::to_string(i) + "]");
    }
    if (b.has("base_rates")) {
      spec.base_rates = b.require<std::vector<double>>("base_rates");
      if (b.has("base_rate")) throw ConfigError("give either base_rates or base_rate", "blocks.base_rate");
    } else {
      const double rate = b.require<double>("base_rate");
      const std::size_t count = b.get<std::size_t>("count", spec.names.size());
      if (count == 0) throw ConfigError("give names or count together with base_rate", "blocks.count");
      spec.base_rates.assign(count, rate);
    }
    if (b.has("count") && b.get<std::size_t>("count", 0) != spec.base_rates.size()) {
      throw ConfigError("does not match the number of base rates", "blocks.count");
    }
    if (spec.names.empty()) {
      for (std::size_t i = 0; i < spec.base_rates.size(); ++i) spec.names.push_back("block" + std::to_string(i));
    }
    if (b.has("param_counts")) spec.param_counts = b.require<std::vector<std::uint64_t>>("param_counts");
    b.finish();
    spec.validate();
  }

  {
    auto t = root.child("budget");
    cfg.budget.max_epochs = t.get<std::int64_t>("max_epochs", cfg.budget.max_epochs);
    cfg.budget.patience = t.get<std::int64_t>("patience", cfg.budget.patience);
    cfg.budget.loss = t.get<std::string>("loss", cfg.budget.loss);
    t.finish();
    cfg.budget.validate();
  }

  {
    auto p = root.child("partition");
    auto& ps = cfg.partition;
    ps.fold_count = p.get<std::size_t>("fold_count", ps.fold_count);
    int sources = 0;
    if (p.has("labels_file")) {
      ps.labels_file = detail::resolve(base_dir, p.require<std::string>("labels_file"));
      ++sources;
    }
    if (p.has("labels")) {
      const auto& labels = p.raw("labels");
      if (!labels.is_object()) throw ConfigError("must map sample ids to class labels", "partition.labels");
      for (const auto& [id, label] : labels.items()) {
        ps.inline_labels.emplace_back(id, ObjectReader::as<std::string>(label, "partition.labels." + id));
      }
      ++sources;
    }
    if (p.has("synthetic")) {
      auto s = p.child("synthetic");
      ps.synthetic_samples = s.require<std::size_t>("samples");
      ps.synthetic_classes = s.get<std::size_t>("classes", 2);
      s.finish();
      if (ps.synthetic_samples == 0 || ps.synthetic_classes == 0) {
        throw ConfigError("samples and classes must be positive", "partition.synthetic");
      }
      ++sources;
    }
    if (sources != 1) {
      throw ConfigError("give exactly one of labels_file, labels, synthetic", "partition");
    }
    if (p.has("seed")) ps.seed = p.require<std::uint64_t>("seed");
    const auto transfer = p.get<std::string>("transfer", "sample_ids");
    if (transfer == "sample_ids") {
      ps.transfer = FoldTransfer::sample_ids;
    } else if (transfer == "reference") {
      ps.transfer = FoldTransfer::reference;
    } else {
      throw ConfigError("must be 'sample_ids' or 'reference'", "partition.transfer");
    }
    ps.plan_ref = p.get<std::string>("plan_ref", ps.plan_ref);
    p.finish();
    if (ps.fold_count < 1) throw ConfigError("must be >= 1", "partition.fold_count");
    cfg.engine.fold_count = ps.fold_count;
  }

  {
    auto t = root.child("trainer");
    auto& tc = cfg.trainer;
    const auto kind = t.require<std::string>("kind");
    tc.target_seed = t.get<std::uint64_t>("target_seed", cfg.engine.rng_seed);
    if (kind == "external") {
      tc.kind = TrainerConfig::Kind::external;
      tc.command = t.require<std::vector<std::string>>("command");
      if (tc.command.empty()) throw ConfigError("must not be empty", "trainer.command");
      tc.capacity = t.get<std::size_t>("capacity", tc.capacity);
      tc.timeout_seconds = t.get<double>("timeout_seconds", tc.timeout_seconds);
      tc.retry_budget = t.get<int>("retry_budget", tc.retry_budget);
      const auto policy = t.get<std::string>("failure_policy", "penalize");
      if (policy == "penalize") {
        tc.failure_policy = FailurePolicy::penalize;
      } else if (policy == "raise") {
        tc.failure_policy = FailurePolicy::raise;
      } else {
        throw ConfigError("must be 'penalize' or 'raise'", "trainer.failure_policy");
      }
      if (tc.capacity < 1) throw ConfigError("must be >= 1", "trainer.capacity");
      if (!(tc.timeout_seconds > 0.0)) throw ConfigError("must be > 0", "trainer.timeout_seconds");
      if (tc.retry_budget < 0) throw ConfigError("must be >= 0", "trainer.retry_budget");
    } else if (kind == "sphere") {
      tc.kind = TrainerConfig::Kind::sphere;
      if (t.has("optimum")) {
        tc.optimum = t.require<std::vector<double>>("optimum");
        if (tc.optimum.size() != cfg.blocks.block_count() + 1) {
          throw ConfigError("needs one entry per block plus the threshold gene", "trainer.optimum");
        }
      }
      tc.capacity = t.get<std::size_t>("capacity", 8);
    } else if (kind == "mask_match") {
      tc.kind = TrainerConfig::Kind::mask_match;
      if (t.has("target_mask")) {
        for (int m : t.require<std::vector<int>>("target_mask")) {
          if (m != 0 && m != 1) throw ConfigError("entries must be 0 or 1", "trainer.target_mask");
          tc.target_mask.push_back(static_cast<std::uint8_t>(m));
        }
        tc.target_exponents = t.require<std::vector<double>>("target_exponents");
      }
      tc.noise = t.get<double>("noise", tc.noise);
      tc.rate_penalty = t.get<double>("rate_penalty", tc.rate_penalty);
      tc.capacity = t.get<std::size_t>("capacity", 8);
      if (!tc.target_mask.empty() && tc.target_mask.size() != cfg.blocks.block_count()) {
        throw ConfigError("needs one entry per block", "trainer.target_mask");
      }
    } else {
      throw ConfigError("must be 'external', 'sphere' or 'mask_match'", "trainer.kind");
    }
    t.finish();
  }

  cfg.output_dir = detail::resolve(base_dir, root.get<std::string>("output_dir", cfg.output_dir.string()));
  cfg.top_k = root.get<std::size_t>("top_k", cfg.top_k);
  if (cfg.top_k < 1) throw ConfigError("must be >= 1", "top_k");
  root.finish();
  cfg.engine.validate();

  // Canonical form: every effective value, so the digest changes whenever
  // anything that affects the trajectory changes.
  auto& r = cfg.resolved;
  r["engine"] = {{"population_size", cfg.engine.population_size},
                 {"elite_count", cfg.engine.elite_count},
                 {"max_generations", cfg.engine.max_generations},
                 {"seed_count", cfg.engine.seed_count},
                 {"perturbation_scale", cfg.engine.perturbation_scale},
                 {"rng_seed", cfg.engine.rng_seed},
                 {"mutation_rate", cfg.engine.mutation_rate},
                 {"adaptation_count", cfg.engine.adaptation_count}};
  r["blocks"] = {{"names", cfg.blocks.names}, {"base_rates", cfg.blocks.base_rates}};
  if (!cfg.blocks.param_counts.empty()) r["blocks"]["param_counts"] = cfg.blocks.param_counts;
  r["budget"] = {{"max_epochs", cfg.budget.max_epochs}, {"patience", cfg.budget.patience}, {"loss", cfg.budget.loss}};
  auto& rp = r["partition"];
  rp["fold_count"] = cfg.partition.fold_count;
  if (cfg.partition.labels_file) rp["labels_file"] = cfg.partition.labels_file->string();
  if (!cfg.partition.inline_labels.empty()) {
    nlohmann::json labels = nlohmann::json::object();
    for (const auto& [id, label] : cfg.partition.inline_labels) labels[id] = label;
    rp["labels"] = labels;
  }
  if (cfg.partition.synthetic_samples > 0) {
    rp["synthetic"] = {{"samples", cfg.partition.synthetic_samples}, {"classes", cfg.partition.synthetic_classes}};
  }
  if (cfg.partition.seed) rp["seed"] = *cfg.partition.seed;
  rp["transfer"] = cfg.partition.transfer == FoldTransfer::reference ? "reference" : "sample_ids";
  rp["plan_ref"] = cfg.partition.plan_ref;
  auto& rt = r["trainer"];
  const auto& tc = cfg.trainer;
  switch (tc.kind) {
    case TrainerConfig::Kind::external:
      rt = {{"kind", "external"},
            {"command", tc.command},
            {"capacity", tc.capacity},
            {"timeout_seconds", tc.timeout_seconds},
            {"retry_budget", tc.retry_budget},
            {"failure_policy", tc.failure_policy == FailurePolicy::raise ? "raise" : "penalize"}};
      break;
    case TrainerConfig::Kind::sphere:
      rt = {{"kind", "sphere"}, {"capacity", tc.capacity}, {"target_seed", tc.target_seed}};
      if (!tc.optimum.empty()) rt["optimum"] = tc.optimum;
      break;
    case TrainerConfig::Kind::mask_match: {
      rt = {{"kind", "mask_match"},
            {"noise", tc.noise},
            {"rate_penalty", tc.rate_penalty},
            {"capacity", tc.capacity},
            {"target_seed", tc.target_seed}};
      if (!tc.target_mask.empty()) {
        rt["target_mask"] = std::vector<int>(tc.target_mask.begin(), tc.target_mask.end());
        rt["target_exponents"] = tc.target_exponents;
      }
      break;
    }
  }
  r["output_dir"] = cfg.output_dir.string();
  r["top_k"] = cfg.top_k;
  return cfg;
}

inline RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("not valid JSON: ") + e.what(), path.string());
  }
  const auto absolute = fs::absolute(path).lexically_normal();
  auto cfg = parse_run_config(doc, absolute.parent_path());
  cfg.source_path = absolute;
  return cfg;
}

/// Labels from whichever source the configuration names.
inline std::vector<LabeledSample> load_partition_labels(const PartitionSource& src) {
  if (src.labels_file) return load_labels(src.labels_file->string());
  if (!src.inline_labels.empty()) return src.inline_labels;
  std::vector<LabeledSample> labels;
  const std::size_t width = std::to_string(src.synthetic_samples).size();
  for (std::size_t i = 0; i < src.synthetic_samples; ++i) {
    auto id = std::to_string(i);
    id.insert(0, width - id.size(), '0');
    labels.emplace_back("s" + id, "c" + std::to_string(i % src.synthetic_classes));
  }
  return labels;
}

inline std::string plan_digest(const PartitionPlan& plan) {
  Fnv1a h;
  h.field(std::to_string(plan.fold_count));
  for (const auto& fold : plan.folds) {
    h.field("fold");
    for (const auto& id : fold) h.field(id).field(plan.class_of.at(id));
  }
  return h.hex();
}

}  // namespace biotune
