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

#include "config.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "patchforge/errors.hpp"
#include "patchforge/synthetic.hpp"

namespace patchforge::cli {

using nlohmann::json;

namespace {

// Reads typed fields out of one JSON object and rejects leftovers.
class Fields {
 public:
  Fields(const json& j, std::string prefix) : j_(j), prefix_(std::move(prefix)) {
    if (!j_.is_object()) throw ConfigError("config section '" + name("") + "' must be an object");
  }

  template <typename T>
  void read(const std::string& key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->get<T>();
    } catch (const json::exception&) {
      throw ConfigError("invalid config field '" + name(key) + "': wrong type");
    }
  }

  const json* section(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) {
        throw ConfigError("unknown config key '" + name(it.key()) + "'");
      }
    }
  }

  std::string name(const std::string& key) const {
    if (prefix_.empty()) return key;
    return key.empty() ? prefix_ : prefix_ + "." + key;
  }

 private:
  const json& j_;
  std::string prefix_;
  std::set<std::string> seen_;
};

ObjectiveRegion parse_objective(const std::string& s) {
  if (s == "footprint") return ObjectiveRegion::kFootprint;
  if (s == "full-map") return ObjectiveRegion::kFullMap;
  throw ConfigError("invalid config field 'objective': expected footprint or full-map");
}

const char* objective_name(ObjectiveRegion r) {
  return r == ObjectiveRegion::kFootprint ? "footprint" : "full-map";
}

}  // namespace

RunConfig parse_config(const json& j) {
  RunConfig c;
  AttackConfig& a = c.attack;
  Fields top(j, "");
  top.read("method", c.method);
  top.read("train_dir", c.train_dir);
  top.read("val_dir", c.val_dir);
  top.read("test_dir", c.test_dir);
  top.read("output_dir", c.output_dir);
  top.read("threads", c.threads);
  top.read("patch_size", a.patch_side);
  std::vector<int> location;
  top.read("location", location);
  top.read("positions", a.positions);
  top.read("val_positions", a.val_positions);
  top.read("max_iters", a.max_iters);
  top.read("max_steps", a.max_steps);
  top.read("b", a.probes);
  top.read("t1", a.intra_threshold);
  top.read("t2", a.inter_threshold);
  top.read("alpha", a.alpha);
  top.read("gamma", a.gamma);
  top.read("init_period", a.init_period);
  top.read("initial_area_fraction", a.schedule.initial_area_fraction);
  top.read("milestones", a.schedule.milestones);
  top.read("learning_rate", a.adam.learning_rate);
  top.read("beta1", a.adam.beta1);
  top.read("beta2", a.adam.beta2);
  top.read("seed", a.seed);
  top.read("query_budget", a.query_budget);
  top.read("time_limit_seconds", a.time_limit_seconds);
  top.read("score_normalization", a.score_normalization);
  top.read("adaptive_scaling", a.adaptive_scaling);
  top.read("probabilistic_sampling", a.probabilistic_sampling);
  top.read("val_subsample", a.val_subsample);
  std::string objective = objective_name(a.objective);
  top.read("objective", objective);
  a.objective = parse_objective(objective);

  if (const json* o = top.section("oracle")) {
    Fields f(*o, "oracle");
    f.read("kind", c.oracle.kind);
    f.read("seed", c.oracle.seed);
    f.read("endpoint", c.oracle.endpoint);
    f.read("timeout_seconds", c.oracle.remote.timeout_seconds);
    f.read("delay_seconds", c.oracle.remote.delay_seconds);
    f.finish();
    if (!c.oracle.endpoint.empty()) c.oracle.kind.clear();
  }
  if (const json* d = top.section("defense")) {
    Fields f(*d, "defense");
    f.read("enabled", c.defense.enabled);
    f.read("nu", c.defense.nu);
    f.read("levels", c.defense.detector.levels);
    f.read("window", c.defense.detector.window);
    f.read("stride", c.defense.detector.stride);
    f.read("hashes", c.defense.detector.hashes);
    f.read("threshold", c.defense.detector.threshold);
    f.finish();
  }
  top.finish();

  if (j.contains("location")) {
    if (location.size() != 2) {
      throw ConfigError("invalid config field 'location': expected [row, col]");
    }
    a.location = Location{location[0], location[1]};
    c.location_set = true;
  }
  if (c.method != "square-grad" && c.method != "random-search") {
    throw ConfigError("invalid config field 'method': expected square-grad or random-search");
  }
  if (c.threads < 1) throw ConfigError("invalid config field 'threads': must be >= 1");
  if (c.oracle.endpoint.empty()) {
    static const std::vector<std::string> kinds = {"blur-depth", "conv-depth", "grad-flow"};
    if (std::find(kinds.begin(), kinds.end(), c.oracle.kind) == kinds.end()) {
      throw ConfigError("invalid config field 'oracle.kind': unknown oracle '" +
                        c.oracle.kind + "'");
    }
  }
  if (!(c.defense.nu >= 0.0 && c.defense.nu <= 0.1)) {
    throw ConfigError("invalid config field 'defense.nu': must be in [0, 0.1]");
  }
  validate(c.defense.detector);
  validate(c.attack);
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path + " is not valid JSON: " + e.what());
  }
  return parse_config(j);
}

json to_json(const RunConfig& c) {
  const AttackConfig& a = c.attack;
  json oracle;
  if (c.oracle.endpoint.empty()) {
    oracle = {{"kind", c.oracle.kind}, {"seed", c.oracle.seed}};
  } else {
    oracle = {{"endpoint", c.oracle.endpoint},
              {"timeout_seconds", c.oracle.remote.timeout_seconds},
              {"delay_seconds", c.oracle.remote.delay_seconds}};
  }
  return json{
      {"method", c.method},
      {"oracle", oracle},
      {"train_dir", c.train_dir},
      {"val_dir", c.val_dir},
      {"test_dir", c.test_dir},
      {"output_dir", c.output_dir},
      {"threads", c.threads},
      {"patch_size", a.patch_side},
      {"location", {a.location.row, a.location.col}},
      {"positions", a.positions},
      {"val_positions", a.val_positions},
      {"max_iters", a.max_iters},
      {"max_steps", a.max_steps},
      {"b", a.probes},
      {"t1", a.intra_threshold},
      {"t2", a.inter_threshold},
      {"alpha", a.alpha},
      {"gamma", a.gamma},
      {"init_period", a.init_period},
      {"initial_area_fraction", a.schedule.initial_area_fraction},
      {"milestones", a.schedule.milestones},
      {"learning_rate", a.adam.learning_rate},
      {"beta1", a.adam.beta1},
      {"beta2", a.adam.beta2},
      {"seed", a.seed},
      {"query_budget", a.query_budget},
      {"time_limit_seconds", a.time_limit_seconds},
      {"score_normalization", a.score_normalization},
      {"adaptive_scaling", a.adaptive_scaling},
      {"probabilistic_sampling", a.probabilistic_sampling},
      {"objective", objective_name(a.objective)},
      {"val_subsample", a.val_subsample},
      {"defense",
       {{"enabled", c.defense.enabled},
        {"nu", c.defense.nu},
        {"levels", c.defense.detector.levels},
        {"window", c.defense.detector.window},
        {"stride", c.defense.detector.stride},
        {"hashes", c.defense.detector.hashes},
        {"threshold", c.defense.detector.threshold}}},
  };
}

std::unique_ptr<Oracle> make_oracle(const OracleSpec& spec, int threads) {
  if (!spec.endpoint.empty()) return std::make_unique<RemoteOracle>(spec.endpoint, spec.remote);
  auto oracle = make_synthetic_oracle(spec.kind, spec.seed);
  oracle->set_threads(threads);
  return oracle;
}

SampleSet load_samples(const std::string& dir, const std::string& id, SampleRole role,
                       int frames) {
  namespace fs = std::filesystem;
  if (dir.empty()) throw ConfigError("invalid config field '" + id + "_dir': not set");
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw IoError("sample directory " + dir + " not found");
  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".ppm") {
      files.push_back(entry.path().filename().string());
    }
  }
  std::sort(files.begin(), files.end());
  std::vector<Sample> samples;
  if (frames == 1) {
    for (const auto& f : files) samples.push_back(Sample{{read_ppm(dir + "/" + f)}});
  } else {
    for (const auto& f : files) {
      if (f.size() < 6 || f.compare(f.size() - 6, 6, "_a.ppm") != 0) continue;
      const std::string stem = f.substr(0, f.size() - 6);
      const std::string second = stem + "_b.ppm";
      if (!std::binary_search(files.begin(), files.end(), second)) {
        throw IoError("frame pair " + dir + "/" + f + " has no " + second);
      }
      samples.push_back(Sample{{read_ppm(dir + "/" + f), read_ppm(dir + "/" + second)}});
    }
  }
  if (samples.empty()) throw IoError("no samples in " + dir);
  return SampleSet(id, role, std::move(samples));
}

}  // namespace patchforge::cli
