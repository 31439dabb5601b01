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
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "biotune/errors.hpp"

// Newline-delimited JSON messages exchanged with trainer processes over
// stdin/stdout. docs/protocol.md is the normative description; keep it in
// sync with this file.
namespace biotune::protocol {

inline constexpr int kVersion = 1;
inline constexpr std::string_view kDefaultLoss = "categorical_cross_entropy";

struct EvaluateRequest {
  std::string request_id;
  std::string genotype_id;
  std::vector<double> block_rates;        // 0 wherever frozen_mask is 0
  std::vector<std::uint8_t> frozen_mask;  // 1 = fine-tune the block, 0 = frozen
  std::int64_t fold_index = 0;
  /// Exactly one of train_sample_ids / fold_ref is used. When fold_ref is set
  /// the trainer resolves the fold from a plan file it already has.
  std::vector<std::string> train_sample_ids;
  std::optional<std::string> fold_ref;
  std::int64_t seed = 0;
  std::int64_t max_epochs = 30;
  std::int64_t patience = 3;
  std::string loss{kDefaultLoss};

  friend bool operator==(const EvaluateRequest&, const EvaluateRequest&) = default;
};

enum class Status { ok, failed };

struct EvaluateResponse {
  std::string request_id;
  Status status = Status::ok;
  double validation_accuracy = 0.0;
  std::int64_t epochs_run = 0;
  std::optional<std::string> message;
  /// Machine-readable failure class for status=failed ("out_of_memory",
  /// "data_error", "internal", ...). Free-form, informational only.
  std::optional<std::string> error_code;

  friend bool operator==(const EvaluateResponse&, const EvaluateResponse&) = default;
};

using Json = nlohmann::ordered_json;

namespace detail {

inline void require_finite(double v, const char* field) {
  if (!std::isfinite(v)) throw EncodingError(std::string("non-finite value in '") + field + "'");
}

inline Json parse_line(std::string_view line) {
  if (line.find('\n') != std::string_view::npos) {
    throw ProtocolError("message contains an interior newline", std::string(line));
  }
  Json doc = Json::parse(line, nullptr, /*allow_exceptions=*/false);
  if (doc.is_discarded() || !doc.is_object()) {
    throw ProtocolError("malformed message: not a JSON object", std::string(line));
  }
  const auto proto = doc.find("proto");
  if (proto == doc.end() || !proto->is_number_integer() || proto->get<int>() != kVersion) {
    throw ProtocolError("missing or unsupported 'proto' version", std::string(line));
  }
  return doc;
}

template <typename T>
T field(const Json& doc, const char* name, std::string_view line) {
  const auto it = doc.find(name);
  if (it == doc.end()) throw ProtocolError(std::string("missing field '") + name + "'", std::string(line));
  try {
    return it->get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ProtocolError(std::string("wrong type for field '") + name + "'", std::string(line));
  }
}

template <typename T>
std::optional<T> optional_field(const Json& doc, const char* name, std::string_view line) {
  const auto it = doc.find(name);
  if (it == doc.end() || it->is_null()) return std::nullopt;
  return field<T>(doc, name, line);
}

inline std::string finish(const Json& doc) {
  // dump() never emits raw newlines: they are escaped inside strings.
  return doc.dump() + '\n';
}

}  // namespace detail

/// One line, newline-terminated.
inline std::string encode_request(const EvaluateRequest& req) {
  if (req.block_rates.size() != req.frozen_mask.size()) {
    throw EncodingError("block_rates and frozen_mask lengths differ");
  }
  for (std::size_t b = 0; b < req.block_rates.size(); ++b) {
    detail::require_finite(req.block_rates[b], "block_rates");
    if (req.block_rates[b] < 0.0) throw EncodingError("negative block rate");
    if (req.frozen_mask[b] > 1) throw EncodingError("frozen_mask entries must be 0 or 1");
    if (req.frozen_mask[b] == 0 && req.block_rates[b] != 0.0) {
      throw EncodingError("frozen block " + std::to_string(b) + " has a non-zero rate");
    }
  }
  Json doc;
  doc["proto"] = kVersion;
  doc["type"] = "evaluate";
  doc["request_id"] = req.request_id;
  doc["genotype_id"] = req.genotype_id;
  doc["block_rates"] = req.block_rates;
  Json mask = Json::array();
  for (auto m : req.frozen_mask) mask.push_back(static_cast<int>(m));
  doc["frozen_mask"] = std::move(mask);
  doc["fold_index"] = req.fold_index;
  if (req.fold_ref) {
    doc["fold_ref"] = *req.fold_ref;
  } else {
    doc["train_sample_ids"] = req.train_sample_ids;
  }
  doc["seed"] = req.seed;
  doc["max_epochs"] = req.max_epochs;
  doc["patience"] = req.patience;
  doc["loss"] = req.loss;
  return detail::finish(doc);
}

/// Trainer-side parser. Accepts the line with or without its trailing newline.
inline EvaluateRequest decode_request(std::string_view line) {
  if (!line.empty() && line.back() == '\n') line.remove_suffix(1);
  const Json doc = detail::parse_line(line);
  EvaluateRequest req;
  req.request_id = detail::field<std::string>(doc, "request_id", line);
  req.genotype_id = detail::field<std::string>(doc, "genotype_id", line);
  req.block_rates = detail::field<std::vector<double>>(doc, "block_rates", line);
  for (int m : detail::field<std::vector<int>>(doc, "frozen_mask", line)) {
    if (m != 0 && m != 1) throw ProtocolError("frozen_mask entries must be 0 or 1", std::string(line));
    req.frozen_mask.push_back(static_cast<std::uint8_t>(m));
  }
  if (req.frozen_mask.size() != req.block_rates.size()) {
    throw ProtocolError("block_rates and frozen_mask lengths differ", std::string(line));
  }
  req.fold_index = detail::field<std::int64_t>(doc, "fold_index", line);
  req.fold_ref = detail::optional_field<std::string>(doc, "fold_ref", line);
  if (!req.fold_ref) req.train_sample_ids = detail::field<std::vector<std::string>>(doc, "train_sample_ids", line);
  req.seed = detail::field<std::int64_t>(doc, "seed", line);
  req.max_epochs = detail::field<std::int64_t>(doc, "max_epochs", line);
  req.patience = detail::field<std::int64_t>(doc, "patience", line);
  req.loss = detail::field<std::string>(doc, "loss", line);
  return req;
}

inline std::string encode_response(const EvaluateResponse& resp) {
  Json doc;
  doc["proto"] = kVersion;
  doc["type"] = "result";
  doc["request_id"] = resp.request_id;
  doc["status"] = resp.status == Status::ok ? "ok" : "failed";
  if (resp.status == Status::ok) {
    detail::require_finite(resp.validation_accuracy, "validation_accuracy");
    doc["validation_accuracy"] = resp.validation_accuracy;
  }
  doc["epochs_run"] = resp.epochs_run;
  if (resp.error_code) doc["error_code"] = *resp.error_code;
  if (resp.message) doc["message"] = *resp.message;
  return detail::finish(doc);
}

/// Engine-side parser. Unknown fields are ignored; a status=ok reply must
/// carry an accuracy in [0, 1].
inline EvaluateResponse decode_response(std::string_view line) {
  if (!line.empty() && line.back() == '\n') line.remove_suffix(1);
  const Json doc = detail::parse_line(line);
  EvaluateResponse resp;
  resp.request_id = detail::field<std::string>(doc, "request_id", line);
  const auto status = detail::field<std::string>(doc, "status", line);
  if (status == "ok") {
    resp.status = Status::ok;
  } else if (status == "failed") {
    resp.status = Status::failed;
  } else {
    throw ProtocolError("unknown status '" + status + "'", std::string(line));
  }
  resp.epochs_run = detail::optional_field<std::int64_t>(doc, "epochs_run", line).value_or(0);
  resp.message = detail::optional_field<std::string>(doc, "message", line);
  resp.error_code = detail::optional_field<std::string>(doc, "error_code", line);
  if (resp.status == Status::ok) {
    resp.validation_accuracy = detail::field<double>(doc, "validation_accuracy", line);
    if (!(resp.validation_accuracy >= 0.0 && resp.validation_accuracy <= 1.0)) {
      throw ProtocolError("validation_accuracy outside [0, 1]", std::string(line));
    }
    if (resp.epochs_run < 0) throw ProtocolError("negative epochs_run", std::string(line));
  }
  return resp;
}

/// Splits an arbitrary byte stream into lines. A partial trailing line stays
/// buffered until its newline arrives, so a corrupted message costs at most
/// the line it is on.
class LineAssembler {
 public:
  void feed(std::string_view bytes) { buffer_.append(bytes); }

  std::optional<std::string> next() {
    const auto pos = buffer_.find('\n', scanned_);
    if (pos == std::string::npos) {
      scanned_ = buffer_.size();
      return std::nullopt;
    }
    std::string line = buffer_.substr(0, pos);
    buffer_.erase(0, pos + 1);
    scanned_ = 0;
    return line;
  }

  std::size_t buffered() const noexcept { return buffer_.size(); }

 private:
  std::string buffer_;
  std::size_t scanned_ = 0;
};

}  // namespace biotune::protocol
