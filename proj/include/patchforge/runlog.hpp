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

#ifndef PATCHFORGE_RUNLOG_HPP_
#define PATCHFORGE_RUNLOG_HPP_

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace patchforge {

// One line of a run log. Every record corresponds to queries spent, broken
// down into probe, reference (black patch and current patch) and validation
// evaluations.
struct RunRecord {
  std::uint64_t queries = 0;
  int iter = 0;
  int step = 0;
  double omega_star = 0.0;
  double omega = 0.0;
  double epsilon = 0.0;
  int square_r = 0;
  int square_c = 0;
  int square_e = 0;
  std::string event;
  std::uint64_t probe_queries = 0;
  std::uint64_t reference_queries = 0;
  std::uint64_t validation_queries = 0;

  friend bool operator==(const RunRecord&, const RunRecord&) = default;
};

// Constants a log analyzer needs to reconstruct the query accounting.
struct LogHeader {
  std::string method;
  int probes = 0;
  int positions = 1;
  int val_samples = 0;
  int val_positions = 1;

  friend bool operator==(const LogHeader&, const LogHeader&) = default;
};

// `key=value` tokens separated by single spaces; doubles round-trip exactly.
std::string format_record(const RunRecord& record);
std::string format_header(const LogHeader& header);

// Throws ParseError with the 1-based line number as offset.
RunRecord parse_record(const std::string& line, std::size_t line_number = 0);

struct ParsedLog {
  LogHeader header;
  bool has_header = false;
  std::vector<RunRecord> records;
};

// Parses a whole log and checks that queries strictly increase and that a
// single header/init pair opens it.
ParsedLog parse_log(std::istream& in);

// Append-only writer; each record is flushed as soon as it is written.
class RunLogWriter {
 public:
  RunLogWriter() = default;
  explicit RunLogWriter(std::ostream* sink) : sink_(sink) {}

  void header(const LogHeader& header);
  void write(const RunRecord& record);
  const std::vector<RunRecord>& records() const { return records_; }

 private:
  std::ostream* sink_ = nullptr;
  std::vector<RunRecord> records_;
};

// (queries, omega*) at every strict improvement, starting with the first
// record.
std::vector<std::pair<std::uint64_t, double>> improvement_staircase(
    const std::vector<RunRecord>& records);

// Query total rebuilt from the log structure:
//   init validation  + init references
//   + steps_with_probes * b * K + evaluated_steps * n_val * P
//   + references spent during steps.
struct AccountingSummary {
  std::uint64_t init_validation = 0;
  std::uint64_t init_references = 0;
  std::uint64_t probe_steps = 0;
  std::uint64_t evaluated_steps = 0;
  std::uint64_t step_references = 0;
  std::uint64_t predicted_total = 0;
  // Last logged counter value.
  std::uint64_t logged_total = 0;
};

// Throws Error if a record's breakdown disagrees with the header constants
// or with its own query delta.
AccountingSummary analyze_accounting(const ParsedLog& log);

}  // namespace patchforge

#endif  // PATCHFORGE_RUNLOG_HPP_
