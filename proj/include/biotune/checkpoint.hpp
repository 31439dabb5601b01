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
#include <string>
#include <system_error>
#include <vector>

#include <nlohmann/json.hpp>

#include "biotune/engine.hpp"
#include "biotune/errors.hpp"
#include "biotune/fitness.hpp"

namespace biotune {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  std::filesystem::path config_path;
  std::string config_digest;
  std::string plan_digest;
  bool finished = false;
  EngineState state;
};

namespace detail {

using nlohmann::json;

inline json to_json(const FitnessRecord& r) {
  std::vector<double> genes(r.genotype.genes().begin(), r.genotype.genes().end());
  return json{{"genotype_id", r.genotype_id},
              {"genes", genes},
              {"phi", r.phi},
              {"seed_accuracies", r.seed_accuracies},
              {"epochs_run", r.epochs_run},
              {"seed_failed", r.seed_failed},
              {"generation", r.generation},
              {"fold_index", r.fold_index},
              {"wall_time", r.wall_time},
              {"cached", r.cached}};
}

inline FitnessRecord record_from_json(const json& j) {
  FitnessRecord r;
  r.genotype_id = j.at("genotype_id").get<GenotypeId>();
  r.genotype = Genotype(j.at("genes").get<std::vector<double>>());
  r.phi = j.at("phi").get<double>();
  r.seed_accuracies = j.at("seed_accuracies").get<std::vector<double>>();
  r.epochs_run = j.at("epochs_run").get<std::vector<std::int64_t>>();
  r.seed_failed = j.at("seed_failed").get<std::vector<std::uint8_t>>();
  r.generation = j.at("generation").get<std::uint64_t>();
  r.fold_index = j.at("fold_index").get<std::size_t>();
  r.wall_time = j.at("wall_time").get<double>();
  r.cached = j.at("cached").get<bool>();
  return r;
}

inline json to_json(const GenerationReport& g) {
  std::vector<double> genes(g.best_genotype.genes().begin(), g.best_genotype.genes().end());
  return json{{"generation", g.generation},
              {"fold_index", g.fold_index},
              {"best_phi", g.best_phi},
              {"best_genotype_id", g.best_genotype_id},
              {"best_genes", genes},
              {"population_phis", g.population_phis},
              {"elite_ids", g.elite_ids},
              {"evaluations", g.evaluations},
              {"requests", g.requests}};
}

inline GenerationReport report_from_json(const json& j) {
  GenerationReport g;
  g.generation = j.at("generation").get<std::uint64_t>();
  g.fold_index = j.at("fold_index").get<std::size_t>();
  g.best_phi = j.at("best_phi").get<double>();
  g.best_genotype_id = j.at("best_genotype_id").get<GenotypeId>();
  g.best_genotype = Genotype(j.at("best_genes").get<std::vector<double>>());
  g.population_phis = j.at("population_phis").get<std::vector<double>>();
  g.elite_ids = j.at("elite_ids").get<std::vector<GenotypeId>>();
  g.evaluations = j.at("evaluations").get<std::uint64_t>();
  g.requests = j.at("requests").get<std::uint64_t>();
  return g;
}

}  // namespace detail

/// JSON form. Doubles are written in shortest round-trip form, so a
/// reloaded state is bit-identical.
inline nlohmann::json checkpoint_to_json(const Checkpoint& c) {
  using detail::json;
  const auto& s = c.state;
  json j;
  j["format"] = "biotune-checkpoint";
  j["version"] = kCheckpointVersion;
  j["config_path"] = c.config_path.string();
  j["config_digest"] = c.config_digest;
  j["plan_digest"] = c.plan_digest;
  j["finished"] = c.finished;
  json st;
  st["next_generation"] = s.next_generation;
  st["rng_state"] = s.rng_state;
  st["next_id"] = s.next_id;
  st["requests_sent"] = s.requests_sent;
  st["penalized_seeds"] = s.penalized_seeds;
  st["population"] = json::array();
  for (const auto& r : s.population) st["population"].push_back(detail::to_json(r));
  st["history"] = json::array();
  for (const auto& r : s.history) st["history"].push_back(detail::to_json(r));
  st["reports"] = json::array();
  for (const auto& g : s.reports) st["reports"].push_back(detail::to_json(g));
  st["cache"] = json::array();
  for (const auto& [key, r] : s.cache) {
    st["cache"].push_back(json{{"fold", key.fold}, {"seeds", key.seeds}, {"record", detail::to_json(r)}});
  }
  j["state"] = std::move(st);
  return j;
}

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "biotune-checkpoint") throw CheckpointError("not a biotune checkpoint");
    if (j.at("version").get<int>() != kCheckpointVersion) throw CheckpointError("unsupported checkpoint version");
    Checkpoint c;
    c.config_path = j.at("config_path").get<std::string>();
    c.config_digest = j.at("config_digest").get<std::string>();
    c.plan_digest = j.at("plan_digest").get<std::string>();
    c.finished = j.at("finished").get<bool>();
    const auto& st = j.at("state");
    auto& s = c.state;
    s.next_generation = st.at("next_generation").get<std::uint64_t>();
    s.rng_state = st.at("rng_state").get<std::string>();
    s.next_id = st.at("next_id").get<GenotypeId>();
    s.requests_sent = st.at("requests_sent").get<std::uint64_t>();
    s.penalized_seeds = st.at("penalized_seeds").get<std::uint64_t>();
    for (const auto& r : st.at("population")) s.population.push_back(detail::record_from_json(r));
    for (const auto& r : st.at("history")) s.history.push_back(detail::record_from_json(r));
    for (const auto& g : st.at("reports")) s.reports.push_back(detail::report_from_json(g));
    for (const auto& e : st.at("cache")) {
      auto rec = detail::record_from_json(e.at("record"));
      auto key = CacheKey::of(rec.genotype, e.at("fold").get<std::size_t>(), e.at("seeds").get<std::vector<std::int64_t>>());
      s.cache.emplace(std::move(key), std::move(rec));
    }
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("corrupt checkpoint: ") + e.what());
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("corrupt checkpoint: ") + e.what());
  }
}

/// Writes `content` to a sibling temporary file, then renames it over `path`.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write '" + tmp.string() + "'");
    out << content;
    out.flush();
    if (!out) throw Error("write to '" + tmp.string() + "' failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error("cannot rename '" + tmp.string() + "': " + ec.message());
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  write_file_atomic(path, checkpoint_to_json(c).dump() + "\n");
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path.string() + "'");
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw CheckpointError("checkpoint '" + path.string() + "' is not valid JSON");
  return checkpoint_from_json(j);
}

}  // namespace biotune
