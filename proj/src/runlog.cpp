/* Copyright 2026 The Patchforge Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "patchforge/runlog.hpp"

#include <charconv>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "patchforge/errors.hpp"

namespace patchforge {

namespace {

constexpr const char* kHeaderPrefix = "# patchforge-log v1";

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::map<std::string, std::string> tokenize(const std::string& line,
                                            std::size_t line_number) {
  std::map<std::string, std::string> fields;
  std::istringstream is(line);
  std::string tok;
  while (is >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ParseError("malformed token '" + tok + "' on line " +
                           std::to_string(line_number),
                       line_number);
    }
    fields[tok.substr(0, eq)] = tok.substr(eq + 1);
  }
  return fields;
}

template <typename T>
T take(const std::map<std::string, std::string>& fields, const std::string& key,
       std::size_t line_number) {
  auto it = fields.find(key);
  if (it == fields.end()) {
    throw ParseError("missing field '" + key + "' on line " +
                         std::to_string(line_number),
                     line_number);
  }
  const std::string& s = it->second;
  if constexpr (std::is_same_v<T, std::string>) {
    return s;
  } else if constexpr (std::is_floating_point_v<T>) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != s.size() || s.empty()) {
      throw ParseError("bad number for '" + key + "' on line " +
                           std::to_string(line_number),
                       line_number);
    }
    return v;
  } else {
    T v{};
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
      throw ParseError("bad integer for '" + key + "' on line " +
                           std::to_string(line_number),
                       line_number);
    }
    return v;
  }
}

LogHeader parse_header(const std::string& line, std::size_t line_number) {
  const auto fields = tokenize(line.substr(std::string(kHeaderPrefix).size()),
                               line_number);
  LogHeader h;
  h.method = take<std::string>(fields, "method", line_number);
  h.probes = take<int>(fields, "b", line_number);
  h.positions = take<int>(fields, "positions", line_number);
  h.val_samples = take<int>(fields, "val_samples", line_number);
  h.val_positions = take<int>(fields, "val_positions", line_number);
  return h;
}

bool is_init(const RunRecord& r) { return r.event == "init" || r.event == "rs-init"; }

}  // namespace

std::string format_record(const RunRecord& r) {
  std::ostringstream os;
  os << "queries=" << r.queries << " iter=" << r.iter << " step=" << r.step
     << " omega_star=" << fmt_double(r.omega_star)
     << " omega=" << fmt_double(r.omega)
     << " epsilon=" << fmt_double(r.epsilon) << " square_r=" << r.square_r
     << " square_c=" << r.square_c << " square_e=" << r.square_e
     << " event=" << r.event << " probes=" << r.probe_queries
     << " refs=" << r.reference_queries << " val=" << r.validation_queries;
  return os.str();
}

std::string format_header(const LogHeader& h) {
  std::ostringstream os;
  os << kHeaderPrefix << " method=" << h.method << " b=" << h.probes
     << " positions=" << h.positions << " val_samples=" << h.val_samples
     << " val_positions=" << h.val_positions;
  return os.str();
}

RunRecord parse_record(const std::string& line, std::size_t line_number) {
  const auto f = tokenize(line, line_number);
  RunRecord r;
  r.queries = take<std::uint64_t>(f, "queries", line_number);
  r.iter = take<int>(f, "iter", line_number);
  r.step = take<int>(f, "step", line_number);
  r.omega_star = take<double>(f, "omega_star", line_number);
  r.omega = take<double>(f, "omega", line_number);
  r.epsilon = take<double>(f, "epsilon", line_number);
  r.square_r = take<int>(f, "square_r", line_number);
  r.square_c = take<int>(f, "square_c", line_number);
  r.square_e = take<int>(f, "square_e", line_number);
  r.event = take<std::string>(f, "event", line_number);
  r.probe_queries = take<std::uint64_t>(f, "probes", line_number);
  r.reference_queries = take<std::uint64_t>(f, "refs", line_number);
  r.validation_queries = take<std::uint64_t>(f, "val", line_number);
  return r;
}

ParsedLog parse_log(std::istream& in) {
  ParsedLog log;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.empty()) continue;
    if (line.rfind(kHeaderPrefix, 0) == 0) {
      if (log.has_header || !log.records.empty()) {
        throw ParseError("second log header on line " + std::to_string(line_number) +
                             " (concatenated logs?)",
                         line_number);
      }
      log.header = parse_header(line, line_number);
      log.has_header = true;
      continue;
    }
    if (line[0] == '#') continue;
    RunRecord r = parse_record(line, line_number);
    if (!log.records.empty()) {
      if (is_init(r)) {
        throw ParseError("second init record on line " + std::to_string(line_number) +
                             " (concatenated logs?)",
                         line_number);
      }
      if (r.queries <= log.records.back().queries) {
        throw ParseError("query count does not increase on line " +
                             std::to_string(line_number),
                         line_number);
      }
    }
    log.records.push_back(std::move(r));
  }
  return log;
}

void RunLogWriter::header(const LogHeader& h) {
  if (sink_ != nullptr) {
    *sink_ << format_header(h) << '\n';
    sink_->flush();
  }
}

void RunLogWriter::write(const RunRecord& record) {
  if (!records_.empty() && record.queries <= records_.back().queries) {
    throw Error("run log queries must strictly increase");
  }
  records_.push_back(record);
  if (sink_ != nullptr) {
    *sink_ << format_record(record) << '\n';
    sink_->flush();
  }
}

std::vector<std::pair<std::uint64_t, double>> improvement_staircase(
    const std::vector<RunRecord>& records) {
  std::vector<std::pair<std::uint64_t, double>> out;
  for (const auto& r : records) {
    if (out.empty() || r.omega_star > out.back().second) {
      out.emplace_back(r.queries, r.omega_star);
    }
  }
  return out;
}

AccountingSummary analyze_accounting(const ParsedLog& log) {
  if (!log.has_header) throw Error("accounting needs a log header");
  const auto& h = log.header;
  const std::uint64_t step_probes =
      static_cast<std::uint64_t>(h.probes) * static_cast<std::uint64_t>(h.positions);
  const std::uint64_t val_cost = static_cast<std::uint64_t>(h.val_samples) *
                                 static_cast<std::uint64_t>(h.val_positions);
  AccountingSummary s;
  std::uint64_t previous = 0;
  for (std::size_t i = 0; i < log.records.size(); ++i) {
    const RunRecord& r = log.records[i];
    const std::uint64_t cost =
        r.probe_queries + r.reference_queries + r.validation_queries;
    if (r.queries - previous != cost) {
      throw Error("record " + std::to_string(i + 1) + " spends " +
                  std::to_string(r.queries - previous) + " queries but itemizes " +
                  std::to_string(cost));
    }
    previous = r.queries;
    if (r.validation_queries != 0 && r.validation_queries != val_cost) {
      throw Error("record " + std::to_string(i + 1) +
                  " has a partial validation evaluation");
    }
    if (is_init(r)) {
      if (i != 0) throw Error("init record is not first");
      s.init_validation = r.validation_queries;
      s.init_references = r.reference_queries;
      continue;
    }
    if (r.probe_queries != 0) {
      if (r.probe_queries != step_probes) {
        throw Error("record " + std::to_string(i + 1) + " spends " +
                    std::to_string(r.probe_queries) + " probe queries, expected " +
                    std::to_string(step_probes));
      }
      ++s.probe_steps;
    }
    if (r.validation_queries != 0) ++s.evaluated_steps;
    s.step_references += r.reference_queries;
  }
  s.predicted_total = s.init_validation + s.init_references +
                      s.probe_steps * step_probes + s.evaluated_steps * val_cost +
                      s.step_references;
  s.logged_total = previous;
  return s;
}

}  // namespace patchforge
