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

#ifndef PATCHFORGE_TOOLS_CONFIG_HPP_
#define PATCHFORGE_TOOLS_CONFIG_HPP_

#include <memory>
#include <optional>
#include <string>

#include "json.hpp"
#include "patchforge/attack.hpp"
#include "patchforge/defense.hpp"
#include "patchforge/remote.hpp"

namespace patchforge::cli {

struct OracleSpec {
  // Synthetic kind, or empty for a remote endpoint.
  std::string kind = "blur-depth";
  std::uint64_t seed = 0;
  std::string endpoint;
  RemoteOptions remote;
};

struct DefenseSpec {
  bool enabled = false;
  // Noise amplitude of the attack-side randomization; 0 disables it.
  double nu = 0.05;
  DetectorConfig detector;
};

struct RunConfig {
  std::string method = "square-grad";
  OracleSpec oracle;
  std::string train_dir;
  std::string val_dir;
  std::string test_dir;
  std::string output_dir = "out";
  bool location_set = false;
  int threads = 1;
  AttackConfig attack;
  DefenseSpec defense;
};

// Throws ConfigError naming the offending key.
RunConfig parse_config(const nlohmann::json& j);
RunConfig load_config(const std::string& path);

// Every effective parameter, defaults included.
nlohmann::json to_json(const RunConfig& config);

std::unique_ptr<Oracle> make_oracle(const OracleSpec& spec, int threads);

// PPM files of a directory in lexicographic order; two-frame samples pair
// `<name>_a.ppm` with `<name>_b.ppm`.
SampleSet load_samples(const std::string& dir, const std::string& id, SampleRole role,
                       int frames);

}  // namespace patchforge::cli

#endif  // PATCHFORGE_TOOLS_CONFIG_HPP_
