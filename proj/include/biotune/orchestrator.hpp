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

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "biotune/artifacts.hpp"
#include "biotune/checkpoint.hpp"
#include "biotune/csv.hpp"
#include "biotune/endpoint.hpp"
#include "biotune/engine.hpp"
#include "biotune/errors.hpp"
#include "biotune/partitioner.hpp"
#include "biotune/process.hpp"
#include "biotune/run_config.hpp"
#include "biotune/surrogate.hpp"

// Run lifecycle behind the `run`, `resume` and `report` commands.
namespace biotune {

enum class ExitCode : int {
  success = 0,
  config_error = 2,
  trainer_failure = 3,
  internal_error = 4,
};

enum class LogLevel { debug, info, warn, error };

using LogSink = std::function<void(LogLevel, std::string_view)>;

struct RunOptions {
  /// Stop (with a resumable checkpoint) once this many generations in total
  /// are done. Used to simulate an interrupted run.
  std::optional<std::size_t> stop_after_generations;
  LogSink log;
};

namespace detail {

inline void emit(const LogSink& sink, LogLevel level, std::string_view message) {
  if (sink) sink(level, message);
}

inline std::unique_ptr<TrainerEndpoint> make_endpoint(const RunConfig& cfg, const LogSink& log) {
  const auto& tc = cfg.trainer;
  switch (tc.kind) {
    case TrainerConfig::Kind::external: {
      auto channel = std::make_unique<ProcessChannel>(tc.command);
      EndpointInfo info{EndpointKind::external_process, tc.capacity, tc.timeout_seconds, tc.retry_budget};
      return std::make_unique<StreamEndpoint>(std::move(channel), info,
                                              [log](std::string_view m) { emit(log, LogLevel::warn, m); });
    }
    case TrainerConfig::Kind::sphere: {
      auto optimum = tc.optimum;
      if (optimum.empty()) {
        Rng rng(tc.target_seed);
        const auto g = random_genotype(cfg.blocks.block_count(), rng);
        optimum.assign(g.genes().begin(), g.genes().end());
      }
      return surrogate_sphere(std::move(optimum), tc.capacity);
    }
    case TrainerConfig::Kind::mask_match: {
      MaskMatchTarget target;
      if (tc.target_mask.empty()) {
        target = random_mask_match_target(cfg.blocks.base_rates, tc.target_seed, tc.noise);
      } else {
        target.mask = tc.target_mask;
        target.exponents = tc.target_exponents;
        target.base_rates = cfg.blocks.base_rates;
        target.noise = tc.noise;
      }
      target.rate_penalty = tc.rate_penalty;
      return surrogate_mask_match(std::move(target), tc.capacity);
    }
  }
  throw ConfigError("unknown trainer kind", "trainer.kind");
}

/// Everything a run needs, wired together. Not movable: the engine holds
/// references to the plan and the endpoint.
class Session {
 public:
  Session(RunConfig cfg, const LogSink& log) : config(std::move(cfg)) {
    const auto labels = load_partition_labels(config.partition);
    plan = build_partition(labels, config.partition.fold_count, config.partition.seed.value_or(config.engine.rng_seed));
    for (const auto& c : plan.sparse_classes) {
      emit(log, LogLevel::warn,
           "class '" + c + "' has fewer samples than folds; some folds get none of it");
    }
    endpoint = make_endpoint(config, log);
    EvaluationOptions options;
    options.failure_policy = config.trainer.failure_policy;
    options.fold_transfer = config.partition.transfer;
    options.plan_ref = config.partition.plan_ref;
    engine = std::make_unique<Engine>(config.engine, config.blocks, plan, *endpoint, config.budget, options);
  }

  Session(const Session&) = delete;
  Session& operator=(const Session&) = delete;

  Checkpoint checkpoint() const {
    Checkpoint c;
    c.config_path = config.source_path;
    c.config_digest = config.digest();
    c.plan_digest = plan_digest(plan);
    c.finished = engine->finished();
    c.state = engine->snapshot();
    return c;
  }

  RunConfig config;
  PartitionPlan plan;
  std::unique_ptr<TrainerEndpoint> endpoint;
  std::unique_ptr<Engine> engine;
};

inline void write_plan(const fs::path& dir, const PartitionPlan& plan) {
  std::string text = "sample_id,class_label,fold\n";
  for (std::size_t f = 0; f < plan.folds.size(); ++f) {
    for (const auto& id : plan.folds[f]) text += id + "," + plan.class_of.at(id) + "," + std::to_string(f) + "\n";
  }
  write_file_atomic(dir / "plan.csv", text);
}

inline std::string describe(const GenerationReport& g) {
  std::ostringstream out;
  out << "generation " << g.generation << " (fold " << g.fold_index << "): best phi " << std::setprecision(6)
      << g.best_phi << " (accuracy " << 1.0 - g.best_phi << "), mean phi " << g.mean_phi() << ", "
      << g.evaluations << " evaluations";
  return out.str();
}

inline ExitCode drive(Session& session, const RunOptions& options) {
  const auto& cfg = session.config;
  auto& engine = *session.engine;
  fs::create_directories(cfg.output_dir);
  write_file_atomic(cfg.output_dir / artifacts::kResolvedConfig, cfg.resolved.dump(2) + "\n");
  write_plan(cfg.output_dir, session.plan);
  const auto checkpoint_path = cfg.output_dir / artifacts::kCheckpoint;
  const auto save = [&] {
    save_checkpoint(checkpoint_path, session.checkpoint());
    artifacts::write_all(cfg.output_dir, engine.snapshot(), cfg.blocks, cfg.top_k);
  };
  save();

  while (!engine.finished()) {
    if (options.stop_after_generations && engine.next_generation() >= *options.stop_after_generations) {
      emit(options.log, LogLevel::info,
           "stopping after generation " + std::to_string(engine.next_generation() - 1) + "; resume with '" +
               checkpoint_path.string() + "'");
      return ExitCode::success;
    }
    try {
      const auto report = engine.step();
      emit(options.log, LogLevel::info, describe(report));
    } catch (const Error& e) {
      // The engine rolled back to the last generation boundary.
      save();
      const bool trainer = dynamic_cast<const TrainerFailure*>(&e) || dynamic_cast<const EvaluationError*>(&e) ||
                           dynamic_cast<const ProtocolError*>(&e);
      if (!trainer) throw;
      emit(options.log, LogLevel::error,
           std::string("trainer failure: ") + e.what() + "; resume with '" + checkpoint_path.string() + "'");
      return ExitCode::trainer_failure;
    }
    save();
  }
  emit(options.log, LogLevel::info, "run finished; artifacts in " + cfg.output_dir.string());
  return ExitCode::success;
}

template <typename F>
ExitCode guarded(const LogSink& log, F&& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    emit(log, LogLevel::error, std::string("configuration error: ") + e.what());
    return ExitCode::config_error;
  } catch (const CheckpointError& e) {
    emit(log, LogLevel::error, std::string("checkpoint error: ") + e.what());
    return ExitCode::config_error;
  } catch (const TrainerFailure& e) {
    emit(log, LogLevel::error, std::string("trainer failure: ") + e.what());
    return ExitCode::trainer_failure;
  } catch (const std::exception& e) {
    emit(log, LogLevel::error, std::string("internal error: ") + e.what());
    return ExitCode::internal_error;
  }
}

}  // namespace detail

/// Loads the configuration, runs the search and writes all artifacts into
/// the configured output directory.
inline ExitCode run_command(const fs::path& config_path, const RunOptions& options = {}) {
  return detail::guarded(options.log, [&] {
    auto cfg = load_run_config(config_path);
    detail::Session session(std::move(cfg), options.log);
    return detail::drive(session, options);
  });
}

/// Continues a run from its checkpoint. Refuses when the configuration file
/// or the partition it produces changed since the checkpoint was written.
inline ExitCode resume_command(const fs::path& checkpoint_path, const RunOptions& options = {}) {
  return detail::guarded(options.log, [&] {
    auto checkpoint = load_checkpoint(checkpoint_path);
    if (checkpoint.finished) {
      detail::emit(options.log, LogLevel::info, "run already finished; nothing to do");
      return ExitCode::success;
    }
    auto cfg = load_run_config(checkpoint.config_path);
    if (cfg.digest() != checkpoint.config_digest) {
      throw CheckpointError("configuration '" + checkpoint.config_path.string() +
                            "' changed since the checkpoint was written (digest " + cfg.digest() + ", expected " +
                            checkpoint.config_digest + "); refusing to resume");
    }
    detail::Session session(std::move(cfg), options.log);
    if (plan_digest(session.plan) != checkpoint.plan_digest) {
      throw CheckpointError("partition plan differs from the checkpoint (labels changed?); refusing to resume");
    }
    session.engine->restore(checkpoint.state);
    detail::emit(options.log, LogLevel::info,
                 "resuming at generation " + std::to_string(checkpoint.state.next_generation));
    return detail::drive(session, options);
  });
}

struct BlockRow {
  std::string name;
  bool trained = false;
  double weight = 0.0;
  double eta = 0.0;
  double rate = 0.0;
};

/// What `report` prints, also returned for programmatic checks.
struct ReportSummary {
  std::size_t generations = 0;
  std::size_t top_count = 0;
  GenotypeId best_genotype_id = 0;
  double best_phi = 1.0;
  double best_accuracy = 0.0;
  double best_trainable_fraction = 0.0;
  std::vector<BlockRow> blocks;
  bool params_consistent = true;   // params.csv == trainable_fraction(topk.csv masks)
  bool decode_consistent = true;   // topk.csv masks/weights/rates == decode(topk.csv genes)
  bool heatmap_in_range = true;    // every eta in {0} or [0.1, 10]
  std::vector<std::string> problems;

  bool consistent() const { return params_consistent && decode_consistent && heatmap_in_range; }
};

/// Reads a finished (or partial) run directory and cross-checks its artifacts.
inline ReportSummary summarize_run(const fs::path& dir) {
  std::ifstream in(dir / artifacts::kResolvedConfig);
  if (!in) throw ConfigError("no " + std::string(artifacts::kResolvedConfig) + " in '" + dir.string() + "'");
  const auto resolved = nlohmann::json::parse(in, nullptr, false);
  if (resolved.is_discarded()) throw ConfigError("unreadable " + std::string(artifacts::kResolvedConfig));
  const auto cfg = parse_run_config(resolved, dir);
  const auto& spec = cfg.blocks;
  const std::size_t n = spec.block_count();
  const auto counts = effective_param_counts(spec);

  ReportSummary s;
  const auto gens = csv::read((dir / artifacts::kGenerations).string());
  s.generations = gens.rows.size();

  const auto top = csv::read((dir / artifacts::kTopK).string());
  const auto params = csv::read((dir / artifacts::kParams).string());
  const auto heat = csv::read((dir / artifacts::kHeatmap).string());
  s.top_count = top.rows.size();
  if (params.rows.size() != top.rows.size()) {
    s.params_consistent = false;
    s.problems.push_back("params.csv and topk.csv have different row counts");
  }

  for (std::size_t i = 0; i < top.rows.size(); ++i) {
    const auto& row = top.rows[i];
    std::vector<double> genes;
    for (std::size_t b = 0; b < n; ++b) genes.push_back(csv::parse_double(row[top.column("gene_" + std::to_string(b))]));
    genes.push_back(csv::parse_double(row[top.column("threshold")]));
    const auto cfg_decoded = decode(Genotype(genes), spec);
    std::vector<std::uint8_t> mask;
    for (std::size_t b = 0; b < n; ++b) {
      const auto m = csv::parse_uint(row[top.column("mask_" + std::to_string(b))]);
      mask.push_back(static_cast<std::uint8_t>(m));
      const double w = csv::parse_double(row[top.column("weight_" + std::to_string(b))]);
      const double e = csv::parse_double(row[top.column("eta_" + std::to_string(b))]);
      const double r = csv::parse_double(row[top.column("rate_" + std::to_string(b))]);
      if (m != cfg_decoded.mask[b] || w != cfg_decoded.weights[b] || e != cfg_decoded.eta[b] ||
          r != cfg_decoded.rates[b]) {
        s.decode_consistent = false;
        s.problems.push_back("topk.csv row " + std::to_string(i + 1) + " block " + std::to_string(b) +
                             " does not re-decode from its genes");
      }
    }
    const double fraction = trainable_fraction(mask, counts);
    if (i < params.rows.size()) {
      const double stored = csv::parse_double(params.rows[i][params.column("trainable_fraction")]);
      if (stored != fraction) {
        s.params_consistent = false;
        s.problems.push_back("params.csv row " + std::to_string(i + 1) + " fraction " + csv::format(stored) +
                             " != " + csv::format(fraction));
      }
    }
    if (i == 0) {
      s.best_genotype_id = csv::parse_uint(row[top.column("genotype_id")]);
      s.best_phi = csv::parse_double(row[top.column("phi")]);
      s.best_accuracy = 1.0 - s.best_phi;
      s.best_trainable_fraction = fraction;
      for (std::size_t b = 0; b < n; ++b) {
        s.blocks.push_back({spec.name(b), cfg_decoded.mask[b] == 1, cfg_decoded.weights[b], cfg_decoded.eta[b],
                            cfg_decoded.rates[b]});
      }
    }
  }

  for (const auto& row : heat.rows) {
    for (std::size_t b = 0; b < n; ++b) {
      const double eta = csv::parse_double(row[heat.column(spec.name(b))]);
      const bool ok = eta == 0.0 || (eta >= 0.1 - 1e-12 && eta <= 10.0 + 1e-12);
      if (!ok) {
        s.heatmap_in_range = false;
        s.problems.push_back("heatmap.csv value " + csv::format(eta) + " outside {0} U [0.1, 10]");
      }
    }
  }
  return s;
}

inline void print_summary(const ReportSummary& s, std::ostream& out) {
  out << "generations completed: " << s.generations << "\n";
  if (s.top_count == 0) {
    out << "no evaluated configurations yet\n";
    return;
  }
  out << std::setprecision(6);
  out << "best configuration: genotype " << s.best_genotype_id << "\n";
  out << "  phi (minimized):        " << s.best_phi << "\n";
  out << "  mean val. accuracy:     " << s.best_accuracy << "\n";
  out << "  trainable parameters:   " << std::fixed << std::setprecision(2) << 100.0 * s.best_trainable_fraction
      << "%\n"
      << std::defaultfloat << std::setprecision(6);
  std::size_t width = 5;
  for (const auto& b : s.blocks) width = std::max(width, b.name.size());
  out << "  " << std::left << std::setw(static_cast<int>(width)) << "block" << "  state     weight      rate\n";
  for (const auto& b : s.blocks) {
    out << "  " << std::left << std::setw(static_cast<int>(width)) << b.name << "  " << std::setw(8)
        << (b.trained ? "train" : "frozen") << std::right << std::setw(8) << (b.trained ? b.weight : 0.0) << "  "
        << std::setw(10) << b.rate << "\n";
  }
  out << std::left << "consistency: " << (s.consistent() ? "ok" : "FAILED") << "\n";
  for (const auto& p : s.problems) out << "  " << p << "\n";
}

/// Prints a summary of `dir`. Internal error when the artifacts disagree.
inline ExitCode report_command(const fs::path& dir, std::ostream& out, const LogSink& log = {}) {
  return detail::guarded(log, [&] {
    const auto summary = summarize_run(dir);
    print_summary(summary, out);
    return summary.consistent() ? ExitCode::success : ExitCode::internal_error;
  });
}

}  // namespace biotune
