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

#ifndef PATCHFORGE_SAMPLER_HPP_
#define PATCHFORGE_SAMPLER_HPP_

#include <cstdint>
#include <span>
#include <vector>

#include "patchforge/rng.hpp"
#include "patchforge/tensor.hpp"

namespace patchforge {

// Coarse-to-fine square schedule: the square starts at a fixed fraction of
// the patch area and halves its area at each milestone.
struct SizeSchedule {
  double initial_area_fraction = 0.025;
  std::vector<int> milestones = {100, 500, 1500, 3000, 5000, 10000};
};

// Square side at `iter` for a patch of side `side`.
int square_size(int iter, int side, const SizeSchedule& schedule = {});

// e x e box mean with replicate padding; shape preserved.
ErrorMap smooth_error_map(const ErrorMap& map, int kernel);

// Probability over square centers in an h x h patch. Cells whose e-square
// would overflow the patch get probability 0.
class CenterTable {
 public:
  CenterTable(int side, std::vector<double> probs)
      : side_(side), probs_(std::move(probs)) {}

  int side() const { return side_; }
  double at(int r, int c) const {
    return probs_[static_cast<std::size_t>(r) * side_ + c];
  }
  std::span<const double> probs() const { return probs_; }

  // Inverse-CDF draw, scanning cells in row-major order.
  Location sample(Rng& rng) const;

 private:
  int side_;
  std::vector<double> probs_;
};

// True when an e-square centered at (r, c) fits inside an h x h patch.
bool valid_center(int r, int c, int side, int square);

// Uniform table over the valid centers.
CenterTable uniform_centers(int side, int square);

// Softmax of `values` restricted to the cells where mask is true. Cells
// outside the mask get 0.
std::vector<double> masked_softmax(std::span<const double> values,
                                   std::span<const std::uint8_t> mask);

// Softmax of footprint / max|footprint| over the valid centers. An all-zero
// footprint falls back to the uniform table.
CenterTable location_probabilities(const ErrorMap& footprint_map, int square);

// Everything the square sampler needs from the caller.
struct SamplerInputs {
  int iter = 0;
  int patch_side = 0;
  int init_period = 100;
  bool probabilistic = true;
  SizeSchedule schedule;
};

// Uniform over valid centers while iter <= init period (or when
// probabilistic sampling is off); afterwards drawn from the error footprint.
// `footprint_map` is the h x h error under the patch, already smoothed with
// the square's kernel; see smoothed_footprint().
SquareRegion sample_square_from_footprint(const SamplerInputs& in,
                                          const ErrorMap& footprint_map, Rng& rng);

// Smooths the full-image map with an e x e kernel, then crops the patch
// footprint at q.
ErrorMap smoothed_footprint(const ErrorMap& map, Location q, int patch_side,
                            int square);

// Convenience form over a full-image error map at a single location.
SquareRegion sample_square(const SamplerInputs& in, const ErrorMap& map,
                           Location q, Rng& rng);

}  // namespace patchforge

#endif  // PATCHFORGE_SAMPLER_HPP_
