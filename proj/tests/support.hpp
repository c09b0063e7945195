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

#ifndef PATCHFORGE_TESTS_SUPPORT_HPP_
#define PATCHFORGE_TESTS_SUPPORT_HPP_

#include <cstdint>
#include <vector>

#include "patchforge/oracle.hpp"
#include "patchforge/rng.hpp"
#include "patchforge/tensor.hpp"

namespace patchforge::testing {

// Uniform noise image.
inline Image noise_image(int height, int width, std::uint64_t seed) {
  Rng rng(seed);
  Image img(3, height, width);
  for (double& v : img.data()) v = rng.uniform();
  return img;
}

inline SampleSet noise_set(const std::string& id, SampleRole role, int count,
                           int height, int width, std::uint64_t seed,
                           int frames = 1) {
  std::vector<Sample> samples;
  for (int i = 0; i < count; ++i) {
    Sample s;
    for (int f = 0; f < frames; ++f) {
      s.frames.push_back(noise_image(height, width, seed + 1000 * i + f));
    }
    samples.push_back(std::move(s));
  }
  return SampleSet(id, role, std::move(samples));
}

inline Patch uniform_patch(int side, double value) { return Patch(3, side, side, value); }

inline Patch random_patch(int side, std::uint64_t seed) {
  Rng rng(seed);
  Patch p(3, side, side);
  for (double& v : p.data()) v = rng.uniform();
  return p;
}

}  // namespace patchforge::testing

#endif  // PATCHFORGE_TESTS_SUPPORT_HPP_
