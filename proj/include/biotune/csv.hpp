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

#include <charconv>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "biotune/errors.hpp"

namespace biotune::csv {

/// Shortest decimal text that parses back to exactly `v`.
inline std::string format(double v) {
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw EncodingError("cannot format number");
  return std::string(buf, end);
}

inline std::string format(std::uint64_t v) { return std::to_string(v); }

inline double parse_double(std::string_view s) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ConfigError("not a number: '" + std::string(s) + "'");
  }
  return v;
}

inline std::uint64_t parse_uint(std::string_view s) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ConfigError("not an unsigned integer: '" + std::string(s) + "'");
  }
  return v;
}

/// Builds one row. Fields must not contain commas, quotes or newlines; the
/// artifact writers only ever emit numbers and validated block names.
class Row {
 public:
  Row& operator<<(std::string_view field) {
    if (started_) text_ += ',';
    started_ = true;
    text_ += field;
    return *this;
  }
  Row& operator<<(const std::string& field) { return *this << std::string_view(field); }
  Row& operator<<(const char* field) { return *this << std::string_view(field); }
  Row& operator<<(double v) { return *this << format(v); }
  Row& operator<<(std::uint64_t v) { return *this << format(v); }
  Row& operator<<(std::int64_t v) { return *this << std::to_string(v); }
  Row& operator<<(int v) { return *this << std::to_string(v); }

  const std::string& str() const noexcept { return text_; }

 private:
  std::string text_;
  bool started_ = false;
};

inline std::vector<std::string> split(std::string_view line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    fields.emplace_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return fields;
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return i;
    }
    throw ConfigError("missing column '" + std::string(name) + "'");
  }
};

inline Table read(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  Table t;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split(line);
    if (first) {
      t.header = std::move(fields);
      first = false;
      continue;
    }
    if (fields.size() != t.header.size()) {
      throw ConfigError(path + ": row has " + std::to_string(fields.size()) + " fields, header has " +
                        std::to_string(t.header.size()));
    }
    t.rows.push_back(std::move(fields));
  }
  if (first) throw ConfigError(path + ": empty file");
  return t;
}

}  // namespace biotune::csv
