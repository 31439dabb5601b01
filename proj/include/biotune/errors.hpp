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

#include <stdexcept>
#include <string>
#include <utility>

namespace biotune {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration or precondition violation. `field` names the
/// offending configuration key when one is known ("engine.elite_count").
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what, std::string field = {})
      : Error(field.empty() ? what : field + ": " + what), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// A message could not be serialized (for example a non-finite rate).
class EncodingError : public Error {
 public:
  using Error::Error;
};

/// A trainer sent something that does not follow the wire protocol. The raw
/// line is kept for diagnostics.
class ProtocolError : public Error {
 public:
  ProtocolError(const std::string& what, std::string payload)
      : Error(what), payload_(std::move(payload)) {}

  const std::string& payload() const noexcept { return payload_; }

 private:
  std::string payload_;
};

/// Evaluation of one individual failed in a way the caller must handle.
class EvaluationError : public Error {
 public:
  EvaluationError(const std::string& what, std::string genotype_id)
      : Error(what + " (genotype " + genotype_id + ")"), genotype_id_(std::move(genotype_id)) {}

  const std::string& genotype_id() const noexcept { return genotype_id_; }

 private:
  std::string genotype_id_;
};

/// The trainer backend is gone (process exited, stream closed, launch failed).
class TrainerFailure : public Error {
 public:
  using Error::Error;
};

/// Checkpoint unreadable, corrupt, or not matching the current configuration.
class CheckpointError : public Error {
 public:
  using Error::Error;
};

}  // namespace biotune
