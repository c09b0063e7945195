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

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <sys/wait.h>
#include <unistd.h>

#include "json.hpp"
#include "patchforge/tensor.hpp"
#include "support.hpp"

namespace patchforge {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using testing::noise_image;

struct Outcome {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("patchforge_cli_") + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    write_images("train", 2, 10);
    write_images("val", 2, 20);
    write_images("test", 2, 30);
  }
  void TearDown() override { fs::remove_all(dir_); }

  void write_images(const std::string& name, int count, std::uint64_t seed) {
    fs::create_directories(dir_ / name);
    for (int i = 0; i < count; ++i) {
      write_ppm((dir_ / name / ("img" + std::to_string(i) + ".ppm")).string(),
                noise_image(24, 24, seed + i));
    }
  }

  json base_config() const {
    return json{{"oracle", {{"kind", "blur-depth"}}},
                {"train_dir", (dir_ / "train").string()},
                {"val_dir", (dir_ / "val").string()},
                {"test_dir", (dir_ / "test").string()},
                {"output_dir", (dir_ / "out").string()},
                {"patch_size", 6},
                {"max_iters", 5},
                {"max_steps", 3}};
  }

  std::string write_config(const json& j, const std::string& name = "config.json") {
    const fs::path p = dir_ / name;
    std::ofstream(p) << j.dump(2);
    return p.string();
  }

  Outcome run(const std::string& args) {
    const fs::path out = dir_ / "stdout.txt";
    const fs::path err = dir_ / "stderr.txt";
    const std::string cmd = std::string(PATCHFORGE_CLI) + " " + args + " >" + out.string() +
                            " 2>" + err.string();
    const int status = std::system(cmd.c_str());
    Outcome o;
    o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    o.out = slurp(out);
    o.err = slurp(err);
    return o;
  }

  json summary() const {
    std::ifstream in(dir_ / "out" / "summary.json");
    return json::parse(in);
  }

  fs::path dir_;
};

TEST_F(Cli, AttackWritesArtifactsAndEchoesDefaults) {
  const Outcome o = run("attack --config " + write_config(base_config()));
  ASSERT_EQ(o.code, 0) << o.err;
  for (const char* f : {"best.ppm", "final.ppm", "run.log", "summary.json"}) {
    EXPECT_TRUE(fs::exists(dir_ / "out" / f)) << f;
  }
  const json s = summary();
  const json& c = s["config"];
  EXPECT_EQ(c["b"], 20);
  EXPECT_EQ(c["alpha"], 0.1);
  EXPECT_EQ(c["gamma"], 0.98);
  EXPECT_EQ(c["init_period"], 100);
  EXPECT_EQ(c["t1"], 1);
  EXPECT_EQ(c["t2"], 1);
  EXPECT_EQ(c["learning_rate"], 0.1);
  EXPECT_EQ(c["beta1"], 0.5);
  EXPECT_EQ(c["beta2"], 0.5);
  EXPECT_EQ(c["location"], json::array({12, 12}));
  EXPECT_EQ(c["method"], "square-grad");
  EXPECT_TRUE(s["result"].contains("test_score"));
}

TEST_F(Cli, SummaryConfigReproducesTheRun) {
  ASSERT_EQ(run("attack --config " + write_config(base_config())).code, 0);
  const std::string first_log = slurp(dir_ / "out" / "run.log");
  json echoed = summary()["config"];
  echoed["output_dir"] = (dir_ / "again").string();
  ASSERT_EQ(run("attack --config " + write_config(echoed, "echo.json")).code, 0);
  EXPECT_EQ(slurp(dir_ / "again" / "run.log"), first_log);
}

TEST_F(Cli, ZeroIterationsLogsInitOnly) {
  json c = base_config();
  c["max_iters"] = 0;
  ASSERT_EQ(run("attack --config " + write_config(c)).code, 0);
  for (const char* f : {"best.ppm", "final.ppm", "run.log", "summary.json"}) {
    EXPECT_TRUE(fs::exists(dir_ / "out" / f)) << f;
  }
  std::istringstream log(slurp(dir_ / "out" / "run.log"));
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(log, line)) lines.push_back(line);
  ASSERT_EQ(lines.size(), 2u);
  EXPECT_EQ(lines[0].rfind("# patchforge-log v1", 0), 0u);
  EXPECT_NE(lines[1].find("event=init"), std::string::npos);
}

TEST_F(Cli, UnknownKeysAreRejectedByName) {
  json c = base_config();
  c["foo"] = 1;
  Outcome o = run("attack --config " + write_config(c));
  EXPECT_EQ(o.code, 2);
  EXPECT_NE(o.err.find("'foo'"), std::string::npos) << o.err;

  c = base_config();
  c["oracle"]["bar"] = true;
  o = run("attack --config " + write_config(c));
  EXPECT_EQ(o.code, 2);
  EXPECT_NE(o.err.find("oracle.bar"), std::string::npos) << o.err;
}

TEST_F(Cli, InvalidValuesNameTheField) {
  json c = base_config();
  c["gamma"] = 1.5;
  Outcome o = run("attack --config " + write_config(c));
  EXPECT_EQ(o.code, 2);
  EXPECT_NE(o.err.find("gamma"), std::string::npos);

  c = base_config();
  c["b"] = "twenty";
  o = run("attack --config " + write_config(c));
  EXPECT_EQ(o.code, 2);
  EXPECT_NE(o.err.find("'b'"), std::string::npos);

  const fs::path broken = dir_ / "broken.json";
  std::ofstream(broken) << "{ not json";
  EXPECT_EQ(run("attack --config " + broken.string()).code, 2);
}

TEST_F(Cli, MissingSamplesIsIoError) {
  json c = base_config();
  c["train_dir"] = (dir_ / "nowhere").string();
  const Outcome o = run("attack --config " + write_config(c));
  EXPECT_EQ(o.code, 1);
  EXPECT_NE(o.err.find("nowhere"), std::string::npos);
}

TEST_F(Cli, FlagsOverrideConfig) {
  ASSERT_EQ(run("attack --config " + write_config(base_config()) + " --seed 9 --budget 200 --out " +
                (dir_ / "out").string())
                .code,
            0);
  const json s = summary();
  EXPECT_EQ(s["config"]["seed"], 9);
  EXPECT_EQ(s["config"]["query_budget"], 200);
  EXPECT_LE(s["result"]["queries"].get<int>(), 200);
}

TEST_F(Cli, BudgetExitCodes) {
  json c = base_config();
  c["max_iters"] = 100000;
  EXPECT_EQ(run("attack --config " + write_config(c) + " --budget 3").code, 4);
  const Outcome o = run("attack --config " + write_config(c) + " --budget 300");
  EXPECT_EQ(o.code, 0);
  EXPECT_EQ(summary()["result"]["stop"], "budget");
}

TEST_F(Cli, SeededRunsAreByteIdentical) {
  json c = base_config();
  c["max_iters"] = 20;
  const std::string cfg = write_config(c);
  ASSERT_EQ(run("attack --config " + cfg + " --threads 1 --out " + (dir_ / "a").string()).code, 0);
  ASSERT_EQ(run("attack --config " + cfg + " --threads 1 --out " + (dir_ / "b").string()).code, 0);
  for (const char* f : {"run.log", "best.ppm", "final.ppm"}) {
    EXPECT_EQ(slurp(dir_ / "a" / f), slurp(dir_ / "b" / f)) << f;
  }
}

TEST_F(Cli, EvalBlackPatchAndBestPatch) {
  const std::string cfg = write_config(base_config());
  ASSERT_EQ(run("attack --config " + cfg).code, 0);
  const double recorded = summary()["result"]["test_score"].get<double>();

  const Outcome best = run("eval --config " + cfg + " --patch " +
                           (dir_ / "out" / "best.ppm").string() + " --out " +
                           (dir_ / "eval").string());
  ASSERT_EQ(best.code, 0) << best.err;
  std::ifstream in(dir_ / "eval" / "eval.json");
  EXPECT_EQ(json::parse(in)["score"].get<double>(), recorded);

  write_ppm((dir_ / "black.ppm").string(), Patch(3, 6, 6, 0.0));
  const Outcome black = run("eval --config " + cfg + " --patch " + (dir_ / "black.ppm").string());
  ASSERT_EQ(black.code, 0) << black.err;
  EXPECT_EQ(black.out.rfind("score=0 ", 0), 0u) << black.out;
}

TEST_F(Cli, EvalErrors) {
  const std::string cfg = write_config(base_config());
  Outcome o = run("eval --config " + cfg + " --patch " + (dir_ / "missing.ppm").string());
  EXPECT_EQ(o.code, 1);
  EXPECT_NE(o.err.find("missing.ppm"), std::string::npos);

  write_ppm((dir_ / "small.ppm").string(), Patch(3, 4, 4, 0.0));
  o = run("eval --config " + cfg + " --patch " + (dir_ / "small.ppm").string());
  EXPECT_NE(o.code, 0);
}

TEST_F(Cli, ExportCurve) {
  json c = base_config();
  c["max_iters"] = 30;
  ASSERT_EQ(run("attack --config " + write_config(c)).code, 0);
  const fs::path log = dir_ / "out" / "run.log";
  const Outcome o = run("export-curve " + log.string());
  ASSERT_EQ(o.code, 0) << o.err;
  std::istringstream rows(o.out);
  std::string line;
  std::getline(rows, line);
  EXPECT_EQ(line, "queries,omega_star");
  long prev_q = -1;
  double prev_w = -1e300;
  int n = 0;
  while (std::getline(rows, line)) {
    const auto comma = line.find(',');
    const long q = std::stol(line.substr(0, comma));
    const double w = std::stod(line.substr(comma + 1));
    EXPECT_GT(q, prev_q);
    EXPECT_GT(w, prev_w);
    prev_q = q;
    prev_w = w;
    ++n;
  }
  EXPECT_GE(n, 1);

  const fs::path csv = dir_ / "curve.csv";
  ASSERT_EQ(run("export-curve " + log.string() + " --out " + csv.string()).code, 0);
  EXPECT_EQ(slurp(csv), o.out);

  const fs::path empty = dir_ / "empty.log";
  std::ofstream(empty).flush();
  const Outcome e = run("export-curve " + empty.string());
  EXPECT_EQ(e.code, 0);
  EXPECT_EQ(e.out, "queries,omega_star\n");

  const fs::path twice = dir_ / "twice.log";
  std::ofstream(twice) << slurp(log) << slurp(log);
  EXPECT_NE(run("export-curve " + twice.string()).code, 0);

  const fs::path corrupt = dir_ / "corrupt.log";
  std::ofstream(corrupt) << slurp(log) << "queries=oops\n";
  const Outcome bad = run("export-curve " + corrupt.string());
  EXPECT_NE(bad.code, 0);
  EXPECT_NE(bad.err.find("line"), std::string::npos) << bad.err;
}

TEST_F(Cli, BaselineUsesRandomSearch) {
  ASSERT_EQ(run("baseline --config " + write_config(base_config())).code, 0);
  EXPECT_EQ(summary()["config"]["method"], "random-search");
  EXPECT_NE(slurp(dir_ / "out" / "run.log").find("method=random-search"), std::string::npos);
}

TEST_F(Cli, DefendSimReportsDetections) {
  json c = base_config();
  c["defense"] = {{"nu", 0.05}};
  const Outcome o = run("defend-sim --config " + write_config(c));
  ASSERT_EQ(o.code, 0) << o.err;
  const json s = summary();
  EXPECT_EQ(s["defense"]["detections"], 0);
  EXPECT_GT(s["defense"]["queries"].get<int>(), 0);
  EXPECT_FALSE(s["defense"]["run_flagged"].get<bool>());
  EXPECT_EQ(s["control"]["queries"], 100);
  EXPECT_GE(s["control"]["detections"].get<int>(), 50);
}

TEST_F(Cli, UsageErrors) {
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("attack").code, 2);
  EXPECT_EQ(run("--help").code, 0);
}

// Starts `serve-echo` and returns its pid and the endpoint it printed.
std::pair<pid_t, std::string> spawn_server(const std::string& model) {
  int fds[2];
  if (pipe(fds) != 0) return {-1, ""};
  const pid_t pid = fork();
  if (pid == 0) {
    dup2(fds[1], STDOUT_FILENO);
    close(fds[0]);
    close(fds[1]);
    execl(PATCHFORGE_CLI, PATCHFORGE_CLI, "serve-echo", "--model", model.c_str(), "--height",
          "24", "--width", "24", static_cast<char*>(nullptr));
    _exit(127);
  }
  close(fds[1]);
  std::string line;
  char ch;
  while (read(fds[0], &ch, 1) == 1 && ch != '\n') line.push_back(ch);
  close(fds[0]);
  const auto space = line.find(' ');
  return {pid, space == std::string::npos ? "" : line.substr(space + 1)};
}

TEST_F(Cli, AttackAgainstServedOracle) {
  auto [pid, endpoint] = spawn_server("blur-depth");
  ASSERT_GT(pid, 0);
  ASSERT_EQ(endpoint.rfind("http://127.0.0.1:", 0), 0u) << endpoint;
  json c = base_config();
  c["oracle"] = {{"endpoint", endpoint}};
  const Outcome o = run("attack --config " + write_config(c));
  kill(pid, SIGTERM);
  int status = 0;
  waitpid(pid, &status, 0);
  ASSERT_EQ(o.code, 0) << o.err;
  EXPECT_EQ(summary()["config"]["oracle"]["endpoint"], endpoint);
  EXPECT_TRUE(WIFEXITED(status));
}

TEST_F(Cli, UnreachableOracleExitsThree) {
  auto [pid, endpoint] = spawn_server("echo");
  ASSERT_GT(pid, 0);
  kill(pid, SIGTERM);
  waitpid(pid, nullptr, 0);
  json c = base_config();
  c["oracle"] = {{"endpoint", endpoint}, {"timeout_seconds", 1.0}};
  EXPECT_EQ(run("attack --config " + write_config(c)).code, 3);
}

}  // namespace
}  // namespace patchforge
