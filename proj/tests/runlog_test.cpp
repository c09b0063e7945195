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

#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>

#include "patchforge/errors.hpp"
#include "patchforge/runlog.hpp"

namespace patchforge {
namespace {

RunRecord record(std::uint64_t queries, double omega_star, std::string event = "step") {
  RunRecord r;
  r.queries = queries;
  r.omega_star = omega_star;
  r.omega = omega_star;
  r.event = std::move(event);
  return r;
}

TEST(RunLog, RecordRoundTripIsExact) {
  RunRecord r{12345, 7, 3, 0.1 + 0.2, 1.0 / 3.0, 0.1 * 0.98, 4, 5, 3, "decay", 20, 1, 1};
  const std::string line = format_record(r);
  EXPECT_EQ(parse_record(line), r);
}

TEST(RunLog, RecordFieldOrder) {
  RunRecord r{22, 0, 1, 2.5, 2.5, 0.1, 3, 4, 2, "step", 20, 1, 1};
  EXPECT_EQ(format_record(r),
            "queries=22 iter=0 step=1 omega_star=2.5 omega=2.5 epsilon=0.10000000000000001"
            " square_r=3 square_c=4 square_e=2 event=step probes=20 refs=1 val=1");
}

TEST(RunLog, HeaderRoundTrip) {
  const LogHeader h{"square-grad", 20, 3, 4, 5};
  std::istringstream in(format_header(h) + "\n" + format_record(record(8, 1.0, "init")) + "\n");
  const ParsedLog log = parse_log(in);
  EXPECT_TRUE(log.has_header);
  EXPECT_EQ(log.header, h);
  ASSERT_EQ(log.records.size(), 1u);
}

TEST(RunLog, CorruptLineNamesLineNumber) {
  std::istringstream in(format_record(record(1, 1.0, "init")) + "\n" +
                        format_record(record(2, 1.0)) + "\nqueries=3 iter=zz\n");
  try {
    parse_log(in);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offset(), 3u);
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
  }
}

TEST(RunLog, MissingFieldIsParseError) {
  EXPECT_THROW(parse_record("queries=1 iter=0", 4), ParseError);
  EXPECT_THROW(parse_record("queries", 4), ParseError);
}

TEST(RunLog, ConcatenatedLogsRejected) {
  const std::string one = format_header(LogHeader{"square-grad", 20, 1, 1, 1}) + "\n" +
                          format_record(record(2, 1.0, "init")) + "\n" +
                          format_record(record(24, 1.5)) + "\n";
  std::istringstream in(one + one);
  EXPECT_THROW(parse_log(in), ParseError);
  // Without headers the second init record (or the query drop) still trips.
  std::istringstream bare(format_record(record(2, 1.0, "init")) + "\n" +
                          format_record(record(24, 1.5)) + "\n" +
                          format_record(record(2, 1.0, "init")) + "\n");
  EXPECT_THROW(parse_log(bare), ParseError);
}

TEST(RunLog, NonIncreasingQueriesRejected) {
  std::istringstream in(format_record(record(5, 1.0, "init")) + "\n" +
                        format_record(record(5, 1.0)) + "\n");
  EXPECT_THROW(parse_log(in), ParseError);
}

TEST(RunLog, EmptyLog) {
  std::istringstream in("");
  const ParsedLog log = parse_log(in);
  EXPECT_FALSE(log.has_header);
  EXPECT_TRUE(log.records.empty());
  EXPECT_TRUE(improvement_staircase(log.records).empty());
}

TEST(RunLog, WriterEnforcesIncreasingQueries) {
  std::ostringstream out;
  RunLogWriter w(&out);
  w.write(record(3, 1.0, "init"));
  EXPECT_THROW(w.write(record(3, 1.0)), Error);
  w.write(record(4, 1.0));
  EXPECT_EQ(w.records().size(), 2u);
  const std::string text = out.str();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 2);
}

TEST(Staircase, StrictlyIncreasingInBothColumns) {
  const std::vector<RunRecord> recs = {record(2, 1.0, "init"), record(24, 1.0),
                                       record(46, 1.5), record(68, 1.5),
                                       record(90, 2.0)};
  const auto st = improvement_staircase(recs);
  ASSERT_EQ(st.size(), 3u);
  EXPECT_EQ(st[0], (std::pair<std::uint64_t, double>{2, 1.0}));
  EXPECT_EQ(st[1], (std::pair<std::uint64_t, double>{46, 1.5}));
  EXPECT_EQ(st[2], (std::pair<std::uint64_t, double>{90, 2.0}));
}

ParsedLog small_log() {
  ParsedLog log;
  log.has_header = true;
  log.header = LogHeader{"square-grad", 20, 1, 2, 1};
  RunRecord init = record(4, 1.0, "init");
  init.reference_queries = 2;
  init.validation_queries = 2;
  RunRecord s1 = record(4 + 24, 1.1, "square-switch");
  s1.probe_queries = 20;
  s1.reference_queries = 2;
  s1.validation_queries = 2;
  RunRecord s2 = record(28 + 20, 1.1);
  s2.probe_queries = 20;  // zero gradient: no validation, nothing uncached
  RunRecord s3 = record(48 + 23, 1.2, "decay");
  s3.probe_queries = 20;
  s3.reference_queries = 1;
  s3.validation_queries = 2;
  log.records = {init, s1, s2, s3};
  return log;
}

TEST(Accounting, ClosedFormTotal) {
  const AccountingSummary s = analyze_accounting(small_log());
  EXPECT_EQ(s.init_validation, 2u);
  EXPECT_EQ(s.init_references, 2u);
  EXPECT_EQ(s.probe_steps, 3u);
  EXPECT_EQ(s.evaluated_steps, 2u);
  EXPECT_EQ(s.step_references, 3u);
  EXPECT_EQ(s.predicted_total, 2u + 2u + 3u * 20u + 2u * 2u + 3u);
  EXPECT_EQ(s.predicted_total, s.logged_total);
}

TEST(Accounting, InconsistentRecordsRejected) {
  ParsedLog bad_delta = small_log();
  bad_delta.records[2].queries += 1;
  bad_delta.records[3].queries += 1;
  EXPECT_THROW(analyze_accounting(bad_delta), Error);

  ParsedLog bad_probes = small_log();
  bad_probes.records[2].probe_queries = 19;
  bad_probes.records[2].reference_queries = 1;
  EXPECT_THROW(analyze_accounting(bad_probes), Error);

  ParsedLog partial_val = small_log();
  partial_val.records[1].validation_queries = 1;
  partial_val.records[1].reference_queries = 3;
  EXPECT_THROW(analyze_accounting(partial_val), Error);

  ParsedLog headless = small_log();
  headless.has_header = false;
  EXPECT_THROW(analyze_accounting(headless), Error);
}

}  // namespace
}  // namespace patchforge
