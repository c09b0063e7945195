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

#ifndef PATCHFORGE_GRADEST_HPP_
#define PATCHFORGE_GRADEST_HPP_

#include <cstddef>
#include <span>
#include <vector>

#include "patchforge/errors.hpp"
#include "patchforge/oracle.hpp"
#include "patchforge/rng.hpp"
#include "patchforge/tensor.hpp"

namespace patchforge {

// b sign-noise probes over a 3 x e x e square and, once scored, their
// signed objective changes.
struct ProbeBatch {
  int side = 0;
  double epsilon = 0.0;
  std::vector<Tensor> probes;
  std::vector<double> scores;
};

// Every entry independently +epsilon or -epsilon.
ProbeBatch generate_probes(int side, double epsilon, int count, Rng& rng);

// Oracle failure while scoring; the original error is nested.
class ProbeError : public Error {
 public:
  ProbeError(const std::string& what, std::size_t first_probe,
             std::size_t last_probe)
      : Error(what), first_(first_probe), last_(last_probe) {}
  std::size_t first_probe() const { return first_; }
  std::size_t last_probe() const { return last_; }

 private:
  std::size_t first_;
  std::size_t last_;
};

// Where probe scoring evaluates the objective: one sample of a set, the patch
// location on the image, and the region the objective averages over.
struct ScoringTarget {
  const SampleSet* set = nullptr;
  std::size_t index = 0;
  Location q;
  ObjectiveRegion region = ObjectiveRegion::kFootprint;
};

// Sets batch.scores[i] = objective(patch with clamp(s + probe_i)) minus
// objective(patch). Costs one query per probe, plus one for the current patch
// unless it is cached, plus the black reference on first use of the sample.
void score_probes(EvalContext& ctx, const ScoringTarget& target,
                  const Patch& patch, const SquareRegion& square,
                  ProbeBatch& batch);

struct ScoreAdjustment {
  // Scale positives into (0, 1] and negatives into [-1, 0).
  bool normalize = true;
  // Divide each side by its count.
  bool adaptive_scale = true;
};

std::vector<double> adjust_scores(std::span<const double> scores,
                                  const ScoreAdjustment& options = {});

// sqrt(3 e^2) * g / |g| with g = sum_i score_i * probe_i / b, or all zeros
// when g vanishes. Uses batch.scores as given (adjust them first).
Tensor estimate_gradient(const ProbeBatch& batch);

bool is_zero(const Tensor& t);

struct AdamConfig {
  double learning_rate = 0.1;
  double beta1 = 0.5;
  double beta2 = 0.5;
  double floor = 1e-8;
};

// Moments for one square; a fresh state is made for every sampled square.
struct AdamState {
  explicit AdamState(int side) : m(3, side, side), v(3, side, side) {}
  Tensor m;
  Tensor v;
  int steps = 0;
};

// Gradient ascent step with bias-corrected moments; the result is clamped
// to [0, 1].
Tensor adam_step(AdamState& state, const Tensor& square, const Tensor& gradient,
                 const AdamConfig& config = {});

}  // namespace patchforge

#endif  // PATCHFORGE_GRADEST_HPP_
