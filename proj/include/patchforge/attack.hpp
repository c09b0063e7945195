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

#ifndef PATCHFORGE_ATTACK_HPP_
#define PATCHFORGE_ATTACK_HPP_

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "patchforge/gradest.hpp"
#include "patchforge/oracle.hpp"
#include "patchforge/runlog.hpp"
#include "patchforge/sampler.hpp"

namespace patchforge {

struct AttackConfig {
  int patch_side = 16;
  Location location{32, 32};
  // K > 1 switches to location-independent mode: every step averages the
  // gradient over K random placements and the objective is measured at
  // `val_positions` fixed random placements.
  int positions = 1;
  int val_positions = 5;

  int max_iters = 10000;
  int max_steps = 50;
  int probes = 20;           // b
  int intra_threshold = 1;   // T1, stale steps before leaving a square
  int inter_threshold = 1;   // T2, stale iterations before decaying epsilon
  double alpha = 0.1;        // initial noise bound
  double gamma = 0.98;       // noise decay factor
  int init_period = 100;     // uniform square sampling period
  SizeSchedule schedule;
  AdamConfig adam;

  std::uint64_t seed = 0;
  std::uint64_t query_budget = 0;  // 0 means unlimited
  double time_limit_seconds = 0.0;  // 0 means unlimited

  bool score_normalization = true;
  bool adaptive_scaling = true;
  bool probabilistic_sampling = true;
  ObjectiveRegion objective = ObjectiveRegion::kFootprint;

  // Evaluate the objective on a fixed random subset of this many validation
  // samples; 0 uses the whole set.
  int val_subsample = 0;
};

// Throws ConfigError naming the first invalid field.
void validate(const AttackConfig& config);

enum class StopReason { kMaxIters, kBudget, kTimeLimit };
const char* to_string(StopReason reason);

struct AttackResult {
  Patch best_patch;
  Patch final_patch;
  double best_score = 0.0;
  std::uint64_t queries = 0;
  int iterations = 0;
  int decays = 0;
  double epsilon = 0.0;
  StopReason stop = StopReason::kMaxIters;
  LogHeader header;
  std::vector<RunRecord> log;
};

// Oracle failure mid-run. Carries the state reached so far; the original
// error is nested.
class AttackAborted : public Error {
 public:
  AttackAborted(const std::string& what, AttackResult partial)
      : Error(what), partial_(std::move(partial)) {}
  const AttackResult& partial() const { return partial_; }

 private:
  AttackResult partial_;
};

// The budget cannot even cover the initial validation evaluation.
class BudgetExhausted : public Error {
 public:
  using Error::Error;
};

// Noise bound with its inter-square stale counter.
struct NoiseSchedule {
  double epsilon = 0.1;
  int stale_iterations = 0;
  int decays = 0;
};

// Counts a finished iteration; after `threshold` consecutive iterations
// without improvement epsilon is multiplied by gamma. Returns true on decay.
bool decay_policy(NoiseSchedule& schedule, bool improved, int threshold,
                  double gamma);

// Probe-batch gradient of one square at one patch placement.
struct GradientRequest {
  const SampleSet* train = nullptr;
  std::size_t sample = 0;
  const Patch* patch = nullptr;
  SquareRegion square;
  double epsilon = 0.1;
  int probes = 20;
  ScoreAdjustment adjustment;
  ObjectiveRegion objective = ObjectiveRegion::kFootprint;
};

Tensor square_gradient(EvalContext& ctx, const GradientRequest& request,
                       Location q, Rng& rng);

// Plain average of square_gradient over the given placements. A single
// placement reproduces square_gradient exactly.
Tensor multi_position_gradient(EvalContext& ctx, const GradientRequest& request,
                               std::span<const Location> positions, Rng& rng);

// Mean footprint error of a fixed patch over the whole set, averaged over
// the placements. Spends queries but touches no attack state.
double evaluate_patch(EvalContext& ctx, const Patch& patch,
                      const SampleSet& samples, std::span<const Location> positions);

// All image locations where a side-h patch fits.
std::vector<Location> random_positions(int count, int side, int height, int width,
                                       Rng& rng);

// Square-based patch optimization with probe-batch gradient estimates. The
// log, when given, receives the header and every record as it happens.
AttackResult run_attack(const AttackConfig& config, EvalContext& ctx,
                        const SampleSet& train, const SampleSet& val,
                        std::ostream* log = nullptr);

// Single-step random search: each iteration paints one uniformly sampled
// square a random RGB-cube vertex and keeps it only on strict improvement.
AttackResult run_random_search(const AttackConfig& config, EvalContext& ctx,
                               const SampleSet& train, const SampleSet& val,
                               std::ostream* log = nullptr);

// White-box reference: Adam ascent on the whole patch using exact
// gradients over the training set, scored on the validation set. Uncounted.
struct WhiteBoxResult {
  Patch best_patch;
  double best_score = 0.0;
  std::vector<double> trace;
};
WhiteBoxResult run_white_box(const AttackConfig& config, Oracle& oracle,
                             const SampleSet& train, const SampleSet& val,
                             int steps);

}  // namespace patchforge

#endif  // PATCHFORGE_ATTACK_HPP_
