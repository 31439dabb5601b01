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

// biotune: evolutionary search over per-block freeze decisions and
// learning-rate multipliers.
//
//   biotune run <config.json> [--stop-after N]
//   biotune resume <checkpoint.json>
//   biotune report <run-dir>
//
// Log verbosity: BIOTUNE_LOG_LEVEL=debug|info|warn|error (default info).
// Exit codes: 0 success, 2 config error, 3 trainer failure, 4 internal error.

#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "biotune/orchestrator.hpp"

namespace {

biotune::LogSink make_sink() {
  auto logger = spdlog::stderr_color_mt("biotune");
  logger->set_pattern("%Y-%m-%d %H:%M:%S [%^%l%$] %v");
  const char* env = std::getenv("BIOTUNE_LOG_LEVEL");
  logger->set_level(env ? spdlog::level::from_str(env) : spdlog::level::info);
  return [logger](biotune::LogLevel level, std::string_view message) {
    switch (level) {
      case biotune::LogLevel::debug: logger->debug(message); break;
      case biotune::LogLevel::info: logger->info(message); break;
      case biotune::LogLevel::warn: logger->warn(message); break;
      case biotune::LogLevel::error: logger->error(message); break;
    }
  };
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Evolutionary selective fine-tuning search"};
  app.require_subcommand(1);

  std::string config_path;
  std::size_t stop_after = 0;
  auto* run = app.add_subcommand("run", "Run a search from a configuration file");
  run->add_option("config", config_path, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--stop-after", stop_after, "Stop with a checkpoint after this many generations")
      ->check(CLI::PositiveNumber);

  std::string checkpoint_path;
  auto* resume = app.add_subcommand("resume", "Continue a run from its checkpoint");
  resume->add_option("checkpoint", checkpoint_path, "checkpoint.json of the run")->required()->check(CLI::ExistingFile);
  resume->add_option("--stop-after", stop_after, "Stop with a checkpoint after this many generations")
      ->check(CLI::PositiveNumber);

  std::string run_dir;
  auto* report = app.add_subcommand("report", "Summarize a run directory");
  report->add_option("dir", run_dir, "Output directory of a run")->required()->check(CLI::ExistingDirectory);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(biotune::ExitCode::config_error);
  }

  biotune::RunOptions options;
  options.log = make_sink();
  if (stop_after > 0) options.stop_after_generations = stop_after;

  biotune::ExitCode code = biotune::ExitCode::success;
  if (*run) {
    code = biotune::run_command(config_path, options);
  } else if (*resume) {
    code = biotune::resume_command(checkpoint_path, options);
  } else if (*report) {
    code = biotune::report_command(run_dir, std::cout, options.log);
  }
  return static_cast<int>(code);
}
