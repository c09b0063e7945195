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

#include "patchforge/sampler.hpp"

#include <algorithm>
#include <cmath>

#include "patchforge/errors.hpp"
#include "patchforge/synthetic.hpp"

namespace patchforge {

int square_size(int iter, int side, const SizeSchedule& schedule) {
  if (side < 2) throw InvalidArgument("patch side must be at least 2");
  const auto halvings = std::count_if(schedule.milestones.begin(),
                                      schedule.milestones.end(),
                                      [iter](int m) { return m <= iter; });
  const double area = schedule.initial_area_fraction *
                      static_cast<double>(side) * side *
                      std::ldexp(1.0, -static_cast<int>(halvings));
  const int e = static_cast<int>(std::lround(std::sqrt(area)));
  return std::clamp(e, 2, side);
}

ErrorMap smooth_error_map(const ErrorMap& map, int kernel) {
  if (kernel < 1) throw InvalidArgument("smoothing kernel must be >= 1");
  if (kernel == 1) return map;
  const Tensor in(1, map.height(), map.width(),
                  std::vector<double>(map.data().begin(), map.data().end()));
  const Tensor out = box_filter(in, kernel);
  ErrorMap result(map.height(), map.width());
  std::copy(out.data().begin(), out.data().end(), result.data().begin());
  return result;
}

bool valid_center(int r, int c, int side, int square) {
  const int lo = square / 2;
  const int hi = side - square + square / 2;
  return r >= lo && r <= hi && c >= lo && c <= hi;
}

Location CenterTable::sample(Rng& rng) const {
  const double u = rng.uniform();
  double acc = 0.0;
  std::size_t last = 0;
  for (std::size_t i = 0; i < probs_.size(); ++i) {
    if (probs_[i] <= 0.0) continue;
    last = i;
    acc += probs_[i];
    if (u < acc) break;
  }
  // Falls through to the last positive cell when rounding leaves acc < 1.
  return Location{static_cast<int>(last / side_), static_cast<int>(last % side_)};
}

CenterTable uniform_centers(int side, int square) {
  if (square < 1 || square > side) {
    throw InvalidArgument("square side " + std::to_string(square) +
                          " does not fit in patch side " + std::to_string(side));
  }
  const int per_axis = side - square + 1;
  const double p = 1.0 / (static_cast<double>(per_axis) * per_axis);
  std::vector<double> probs(static_cast<std::size_t>(side) * side, 0.0);
  for (int r = 0; r < side; ++r) {
    for (int c = 0; c < side; ++c) {
      if (valid_center(r, c, side, square)) probs[static_cast<std::size_t>(r) * side + c] = p;
    }
  }
  return CenterTable(side, std::move(probs));
}

std::vector<double> masked_softmax(std::span<const double> values,
                                   std::span<const std::uint8_t> mask) {
  if (values.size() != mask.size()) throw InvalidArgument("mask size mismatch");
  double hi = -INFINITY;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (mask[i]) hi = std::max(hi, values[i]);
  }
  if (hi == -INFINITY) throw InvalidArgument("softmax over an empty mask");
  std::vector<double> out(values.size(), 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!mask[i]) continue;
    out[i] = std::exp(values[i] - hi);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

CenterTable location_probabilities(const ErrorMap& footprint_map, int square) {
  const int side = footprint_map.height();
  if (footprint_map.width() != side) {
    throw InvalidArgument("footprint map must be square");
  }
  double scale = 0.0;
  for (double v : footprint_map.data()) scale = std::max(scale, std::abs(v));
  if (scale == 0.0 || !std::isfinite(scale)) return uniform_centers(side, square);

  std::vector<double> values(footprint_map.data().begin(), footprint_map.data().end());
  for (double& v : values) v /= scale;
  std::vector<std::uint8_t> mask(values.size());
  for (int r = 0; r < side; ++r) {
    for (int c = 0; c < side; ++c) {
      mask[static_cast<std::size_t>(r) * side + c] =
          valid_center(r, c, side, square);
    }
  }
  return CenterTable(side, masked_softmax(values, mask));
}

ErrorMap smoothed_footprint(const ErrorMap& map, Location q, int patch_side,
                            int square) {
  return crop(smooth_error_map(map, square), patch_side, q);
}

SquareRegion sample_square_from_footprint(const SamplerInputs& in,
                                          const ErrorMap& footprint_map, Rng& rng) {
  const int e = square_size(in.iter, in.patch_side, in.schedule);
  const bool uniform = !in.probabilistic || in.iter <= in.init_period;
  const CenterTable table = uniform ? uniform_centers(in.patch_side, e)
                                    : location_probabilities(footprint_map, e);
  return SquareRegion{table.sample(rng), e};
}

SquareRegion sample_square(const SamplerInputs& in, const ErrorMap& map,
                           Location q, Rng& rng) {
  const int e = square_size(in.iter, in.patch_side, in.schedule);
  const bool uniform = !in.probabilistic || in.iter <= in.init_period;
  if (uniform) return sample_square_from_footprint(in, ErrorMap(), rng);
  return sample_square_from_footprint(in, smoothed_footprint(map, q, in.patch_side, e), rng);
}

}  // namespace patchforge
