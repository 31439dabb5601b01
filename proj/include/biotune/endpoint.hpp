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

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "biotune/errors.hpp"
#include "biotune/genotype.hpp"
#include "biotune/protocol.hpp"

namespace biotune {

enum class EndpointKind { external_process, surrogate };

struct EndpointInfo {
  EndpointKind kind = EndpointKind::surrogate;
  std::size_t capacity = 1;       // max in-flight requests
  double timeout_seconds = 600.0; // per request
  int retry_budget = 1;           // extra attempts after the first
};

/// One unit of work: the wire request plus the genotype it was decoded from.
/// External trainers only ever see `request`; the genotype is available to
/// in-process surrogates whose landscape is defined over genes.
struct Job {
  protocol::EvaluateRequest request;
  Genotype genotype;
};

enum class Outcome { ok, failed, timed_out };

struct JobResult {
  Outcome outcome = Outcome::timed_out;
  protocol::EvaluateResponse response;
  std::string diagnostic;
};

/// Evaluation backend. `run_batch` receives at most `info().capacity` jobs
/// and returns one result per job, in job order. Per-job problems are
/// reported through the result; a backend that can no longer serve anything
/// throws TrainerFailure.
class TrainerEndpoint {
 public:
  virtual ~TrainerEndpoint() = default;
  virtual EndpointInfo info() const = 0;
  virtual std::vector<JobResult> run_batch(std::span<const Job> jobs) = 0;
};

/// Line-oriented duplex transport to a trainer.
class LineChannel {
 public:
  virtual ~LineChannel() = default;
  /// Writes one complete newline-terminated line. Throws TrainerFailure if
  /// the peer is gone.
  virtual void send(std::string_view line) = 0;
  /// Next complete line without its newline, or nullopt once `timeout` has
  /// elapsed with nothing received. Throws TrainerFailure on end of stream.
  virtual std::optional<std::string> receive(std::chrono::milliseconds timeout) = 0;
};

struct StreamStats {
  std::uint64_t sent = 0;
  std::uint64_t received = 0;
  std::uint64_t malformed = 0;
  std::uint64_t unmatched = 0;  // duplicates and replies to expired requests
  std::uint64_t timed_out = 0;
};

/// Endpoint speaking the wire protocol over a LineChannel. Up to `capacity`
/// requests are in flight at once; replies are correlated by request_id and
/// may arrive in any order.
class StreamEndpoint : public TrainerEndpoint {
 public:
  using Logger = std::function<void(std::string_view)>;

  StreamEndpoint(std::unique_ptr<LineChannel> channel, EndpointInfo info, Logger log = {})
      : channel_(std::move(channel)), info_(info), log_(std::move(log)) {
    if (info_.capacity < 1) throw ConfigError("must be >= 1", "trainer.capacity");
    info_.kind = EndpointKind::external_process;
  }

  EndpointInfo info() const override { return info_; }

  std::vector<JobResult> run_batch(std::span<const Job> jobs) override {
    std::vector<JobResult> results(jobs.size());
    for (std::size_t start = 0; start < jobs.size(); start += info_.capacity) {
      const auto chunk = jobs.subspan(start, std::min(info_.capacity, jobs.size() - start));
      run_chunk(chunk, std::span<JobResult>(results).subspan(start, chunk.size()));
    }
    return results;
  }

  const StreamStats& stats() const noexcept { return stats_; }

 private:
  void run_chunk(std::span<const Job> jobs, std::span<JobResult> results) {
    using Clock = std::chrono::steady_clock;
    std::map<std::string, std::size_t> pending;
    for (std::size_t i = 0; i < jobs.size(); ++i) {
      const auto& req = jobs[i].request;
      if (!pending.emplace(req.request_id, i).second) {
        throw EncodingError("duplicate request_id '" + req.request_id + "' in one batch");
      }
      channel_->send(protocol::encode_request(req));
      ++stats_.sent;
    }
    const auto deadline =
        Clock::now() + std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(info_.timeout_seconds));

    while (!pending.empty()) {
      const auto now = Clock::now();
      const auto remaining = now >= deadline ? std::chrono::milliseconds(0)
                                             : std::chrono::ceil<std::chrono::milliseconds>(deadline - now);
      auto line = channel_->receive(remaining);
      if (!line) break;
      ++stats_.received;
      protocol::EvaluateResponse resp;
      try {
        resp = protocol::decode_response(*line);
      } catch (const ProtocolError& e) {
        ++stats_.malformed;
        log(std::string("discarding reply: ") + e.what() + ": " + e.payload());
        continue;
      }
      const auto it = pending.find(resp.request_id);
      if (it == pending.end()) {
        ++stats_.unmatched;
        log("discarding reply for unknown or already answered request '" + resp.request_id + "'");
        continue;
      }
      auto& result = results[it->second];
      result.outcome = resp.status == protocol::Status::ok ? Outcome::ok : Outcome::failed;
      if (result.outcome == Outcome::failed) {
        result.diagnostic = resp.message.value_or("trainer reported failure");
      }
      result.response = std::move(resp);
      pending.erase(it);
    }
    for (const auto& [id, index] : pending) {
      ++stats_.timed_out;
      results[index].outcome = Outcome::timed_out;
      results[index].diagnostic = "no reply within " + std::to_string(info_.timeout_seconds) + " s";
    }
  }

  void log(std::string_view message) const {
    if (log_) log_(message);
  }

  std::unique_ptr<LineChannel> channel_;
  EndpointInfo info_;
  Logger log_;
  StreamStats stats_;
};

}  // namespace biotune
