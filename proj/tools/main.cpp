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

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include "CLI11.hpp"
#include "config.hpp"
#include "patchforge/errors.hpp"
#include "patchforge/synthetic.hpp"

namespace patchforge::cli {
namespace {

using nlohmann::json;

enum ExitCode { kOk = 0, kOtherError = 1, kConfigError = 2, kOracleError = 3, kBudgetAbort = 4 };

struct Overrides {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<std::uint64_t> budget;
};

RunConfig resolve(const Overrides& o) {
  RunConfig c = load_config(o.config);
  if (!o.out.empty()) c.output_dir = o.out;
  if (o.seed) c.attack.seed = *o.seed;
  if (o.threads) {
    if (*o.threads < 1) throw ConfigError("invalid flag '--threads': must be >= 1");
    c.threads = *o.threads;
  }
  if (o.budget) c.attack.query_budget = *o.budget;
  return c;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_json(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << j.dump(2) << "\n";
}

// Placements at which a finished patch is scored.
std::vector<Location> eval_positions(const AttackConfig& a, int height, int width) {
  if (a.positions == 1) return {a.location};
  Rng rng(a.seed ^ 0x9e3779b97f4a7c15ULL);
  return random_positions(a.val_positions, a.patch_side, height, width, rng);
}

struct Loaded {
  std::unique_ptr<Oracle> oracle;
  SampleSet train;
  SampleSet val;
};

Loaded load_run(RunConfig& c) {
  auto oracle = make_oracle(c.oracle, c.threads);
  const int frames = oracle->frames_per_sample();
  SampleSet train = load_samples(c.train_dir, "train", SampleRole::kTraining, frames);
  SampleSet val = load_samples(c.val_dir, "val", SampleRole::kValidation, frames);
  if (!c.location_set) {
    c.attack.location = Location{val.height() / 2, val.width() / 2};
    c.location_set = true;
  }
  return Loaded{std::move(oracle), std::move(train), std::move(val)};
}

json result_json(const AttackResult& r) {
  return json{{"best_score", r.best_score},
              {"queries", r.queries},
              {"iterations", r.iterations},
              {"decays", r.decays},
              {"epsilon", r.epsilon},
              {"stop", to_string(r.stop)},
              {"records", r.log.size()}};
}

struct DefenseReport {
  std::uint64_t queries = 0;
  std::uint64_t detections = 0;
};

// Runs the configured method and writes run.log, best.ppm, final.ppm and
// summary.json into the output directory.
int run_and_write(RunConfig c, bool with_detector, DefenseReport* report) {
  Loaded in = load_run(c);
  std::filesystem::create_directories(c.output_dir);
  const std::string dir = c.output_dir + "/";

  Oracle* target = in.oracle.get();
  std::unique_ptr<DetectingOracle> detector;
  std::unique_ptr<RandomizingOracle> randomizer;
  if (with_detector) {
    detector = std::make_unique<DetectingOracle>(*target, c.defense.detector);
    target = detector.get();
  }
  if (c.defense.enabled && c.defense.nu > 0.0) {
    randomizer = std::make_unique<RandomizingOracle>(*target, c.defense.nu, c.attack.seed + 1);
    target = randomizer.get();
  }

  EvalContext ctx(*target);
  std::ofstream log(dir + "run.log");
  if (!log) throw IoError("cannot write " + dir + "run.log");
  json summary{{"config", to_json(c)}};

  AttackResult result;
  int code = kOk;
  try {
    result = c.method == "random-search"
                 ? run_random_search(c.attack, ctx, in.train, in.val, &log)
                 : run_attack(c.attack, ctx, in.train, in.val, &log);
  } catch (const AttackAborted& e) {
    result = e.partial();
    std::cerr << "oracle: " << e.what() << "\n";
    summary["aborted"] = e.what();
    code = kOracleError;
  }
  log.flush();
  write_ppm(dir + "best.ppm", result.best_patch);
  write_ppm(dir + "final.ppm", result.final_patch);
  summary["result"] = result_json(result);

  if (code == kOk && !c.test_dir.empty()) {
    // Scored from the written file so that `eval` on it reproduces the value.
    const Patch stored = read_ppm(dir + "best.ppm");
    const SampleSet test =
        load_samples(c.test_dir, "test", SampleRole::kTest, in.oracle->frames_per_sample());
    EvalContext test_ctx(*in.oracle);
    const auto positions = eval_positions(c.attack, test.height(), test.width());
    summary["result"]["test_score"] = evaluate_patch(test_ctx, stored, test, positions);
  }
  if (detector) {
    report->queries = detector->queries();
    report->detections = detector->detections();
    summary["defense"] = {{"queries", report->queries},
                          {"detections", report->detections},
                          {"detection_rate", detector->detection_rate()},
                          {"run_flagged", report->detections > 0},
                          {"randomized", randomizer != nullptr}};
  }
  write_json(dir + "summary.json", summary);
  std::cout << "best_score=" << fmt(result.best_score) << " queries=" << result.queries
            << " stop=" << to_string(result.stop) << "\n";
  return code;
}

int cmd_attack(const Overrides& o, bool force_baseline) {
  RunConfig c = resolve(o);
  if (force_baseline) c.method = "random-search";
  return run_and_write(c, false, nullptr);
}

int cmd_defend_sim(const Overrides& o, int control) {
  RunConfig c = resolve(o);
  c.defense.enabled = true;
  DefenseReport report;
  const int code = run_and_write(c, true, &report);
  if (code != kOk) return code;

  // Control stream: the same patched sample submitted over and over.
  auto oracle = make_oracle(c.oracle, c.threads);
  const SampleSet val =
      load_samples(c.val_dir, "val", SampleRole::kValidation, oracle->frames_per_sample());
  const Location q = c.location_set ? c.attack.location
                                    : Location{val.height() / 2, val.width() / 2};
  const Patch best = read_ppm(c.output_dir + "/best.ppm");
  const Sample probe = attach_to_sample(val[0], best, q);
  DetectingOracle control_detector(*oracle, c.defense.detector);
  for (int i = 0; i < control; ++i) control_detector.evaluate(std::span(&probe, 1));

  const std::string path = c.output_dir + "/summary.json";
  json summary;
  {
    std::ifstream in(path);
    summary = json::parse(in);
  }
  summary["control"] = {{"queries", control_detector.queries()},
                        {"detections", control_detector.detections()}};
  write_json(path, summary);
  std::cout << "attack_detections=" << report.detections << "/" << report.queries
            << " control_detections=" << control_detector.detections() << "/"
            << control_detector.queries() << "\n";
  return kOk;
}

int cmd_eval(const Overrides& o, const std::string& patch_path) {
  RunConfig c = resolve(o);
  auto oracle = make_oracle(c.oracle, c.threads);
  const Patch patch = read_ppm(patch_path);
  if (patch.height() != c.attack.patch_side || patch.width() != c.attack.patch_side) {
    throw ConfigError("patch " + patch_path + " is " + std::to_string(patch.height()) + "x" +
                      std::to_string(patch.width()) + ", config patch_size is " +
                      std::to_string(c.attack.patch_side));
  }
  const SampleSet test =
      load_samples(c.test_dir, "test", SampleRole::kTest, oracle->frames_per_sample());
  if (!c.location_set) c.attack.location = Location{test.height() / 2, test.width() / 2};
  EvalContext ctx(*oracle);
  const auto positions = eval_positions(c.attack, test.height(), test.width());
  const double score = evaluate_patch(ctx, patch, test, positions);
  std::cout << "score=" << fmt(score) << " samples=" << test.size()
            << " queries=" << ctx.counter().total() << "\n";
  if (!o.out.empty()) {
    std::filesystem::create_directories(o.out);
    write_json(o.out + "/eval.json", json{{"patch", patch_path},
                                          {"score", score},
                                          {"samples", test.size()},
                                          {"queries", ctx.counter().total()}});
  }
  return kOk;
}

int cmd_export_curve(const std::string& log_path, const std::string& out_path) {
  std::ifstream in(log_path);
  if (!in) throw IoError("cannot open log " + log_path);
  const ParsedLog log = parse_log(in);
  std::string csv = "queries,omega_star\n";
  for (const auto& [q, w] : improvement_staircase(log.records)) {
    csv += std::to_string(q) + "," + fmt(w) + "\n";
  }
  if (out_path.empty()) {
    std::cout << csv;
  } else {
    std::ofstream out(out_path);
    if (!out) throw IoError("cannot write " + out_path);
    out << csv;
  }
  return kOk;
}

std::atomic<bool> g_stop{false};

int cmd_serve_echo(const std::string& host, int port, int height, int width,
                   const std::string& model, bool detect) {
  std::unique_ptr<Oracle> oracle;
  ModelInfo info{1, 1, height, width};
  if (model == "echo") {
    oracle = std::make_unique<GrayEchoOracle>();
  } else {
    oracle = make_synthetic_oracle(model, 0);
    info.output_channels = oracle->output_channels();
    info.frames = oracle->frames_per_sample();
  }
  ServerOptions opts;
  opts.host = host;
  opts.port = port;
  opts.detect = detect;
  OracleServer server(*oracle, info, opts);
  server.start();
  std::cout << "listening " << server.endpoint() << std::endl;
  std::signal(SIGINT, [](int) { g_stop = true; });
  std::signal(SIGTERM, [](int) { g_stop = true; });
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  server.stop();
  return kOk;
}

void add_run_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "JSON run configuration")->required();
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_option("--seed", o.seed, "attack seed");
  cmd->add_option("--threads", o.threads, "oracle worker threads");
  cmd->add_option("--budget", o.budget, "query budget");
}

int run(int argc, char** argv) {
  CLI::App app{"Black-box adversarial patch search against pixel-wise regressors"};
  app.require_subcommand(1);

  Overrides o;
  auto* attack = app.add_subcommand("attack", "run the configured attack");
  add_run_flags(attack, o);
  auto* baseline = app.add_subcommand("baseline", "run random search with the same budget");
  add_run_flags(baseline, o);

  auto* defend = app.add_subcommand("defend-sim", "attack a fingerprint-detecting oracle");
  add_run_flags(defend, o);
  int control = 100;
  defend->add_option("--control", control, "identical control queries");

  auto* eval = app.add_subcommand("eval", "score a patch on the test set");
  add_run_flags(eval, o);
  std::string patch_path;
  eval->add_option("--patch", patch_path, "patch PPM")->required();

  auto* curve = app.add_subcommand("export-curve", "improvement staircase as CSV");
  std::string log_path, curve_out;
  curve->add_option("log", log_path, "run log")->required();
  curve->add_option("--out", curve_out, "CSV file (default stdout)");

  auto* serve = app.add_subcommand("serve-echo", "serve a local wire-protocol oracle");
  std::string host = "127.0.0.1", model = "echo";
  int port = 0, height = 64, width = 64;
  bool detect = false;
  serve->add_option("--host", host, "bind address")->capture_default_str();
  serve->add_option("--port", port, "0 picks a free port");
  serve->add_option("--height", height, "reported input height")->capture_default_str();
  serve->add_option("--width", width, "reported input width")->capture_default_str();
  serve->add_option("--model", model, "echo, blur-depth, conv-depth or grad-flow");
  serve->add_flag("--detect", detect, "flag repeated queries");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (attack->parsed()) return cmd_attack(o, false);
    if (baseline->parsed()) return cmd_attack(o, true);
    if (defend->parsed()) return cmd_defend_sim(o, control);
    if (eval->parsed()) return cmd_eval(o, patch_path);
    if (curve->parsed()) return cmd_export_curve(log_path, curve_out);
    if (serve->parsed()) return cmd_serve_echo(host, port, height, width, model, detect);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const BudgetExhausted& e) {
    std::cerr << "budget: " << e.what() << "\n";
    return kBudgetAbort;
  } catch (const TransportError& e) {
    std::cerr << "oracle: " << e.what() << "\n";
    return kOracleError;
  } catch (const ServiceError& e) {
    std::cerr << "oracle: " << e.what() << "\n";
    return kOracleError;
  } catch (const ProtocolError& e) {
    std::cerr << "oracle: " << e.what() << "\n";
    return kOracleError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kOtherError;
  }
  return kOtherError;
}

}  // namespace
}  // namespace patchforge::cli

int main(int argc, char** argv) { return patchforge::cli::run(argc, argv); }
