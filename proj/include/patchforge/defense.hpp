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

#ifndef PATCHFORGE_DEFENSE_HPP_
#define PATCHFORGE_DEFENSE_HPP_

#include <cstdint>
#include <mutex>
#include <span>
#include <vector>

#include "patchforge/oracle.hpp"
#include "patchforge/rng.hpp"

namespace patchforge {

// Query-similarity detector settings: values are quantized to `levels`
// buckets, the byte stream is hashed in windows of `window` bytes every
// `stride` bytes, and the `hashes` smallest distinct window hashes form the
// fingerprint. Two fingerprints sharing at least `threshold` hashes match;
// a fingerprint with fewer hashes than that must be contained whole.
struct DetectorConfig {
  int levels = 32;
  int window = 64;
  int stride = 32;
  int hashes = 50;
  int threshold = 25;
};

void validate(const DetectorConfig& config);

// Sorted ascending, no duplicates.
using Fingerprint = std::vector<std::uint64_t>;

// Level of one value: floor(v * levels), clamped to [0, levels - 1].
int quantize_level(double v, int levels);

// Quantized bytes in pixel-interleaved row-major order (r, c, channel),
// frames concatenated.
std::vector<std::uint8_t> quantized_bytes(const Sample& sample, int levels);

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes);

Fingerprint fingerprint_query(const Sample& sample, const DetectorConfig& config);
Fingerprint fingerprint_query(const Image& image, const DetectorConfig& config);

std::size_t overlap(const Fingerprint& a, const Fingerprint& b);

struct Detection {
  bool matched = false;
  std::size_t max_overlap = 0;
};

// Stores every fingerprint it sees. detect() is linearizable: concurrent
// callers observe some sequential order.
class FingerprintStore {
 public:
  Detection detect(const Fingerprint& incoming, int threshold);
  std::size_t size() const;

 private:
  mutable std::mutex mutex_;
  std::vector<Fingerprint> stored_;
};

// Adds i.i.d. uniform noise in [-amplitude, amplitude] to every value and
// clamps to [0, 1]. amplitude must lie in [0, 0.1].
Image randomize_sample(const Image& image, double amplitude, Rng& rng);

// Wraps an oracle: fingerprints every incoming sample and records whether it
// matched an earlier query.
class DetectingOracle : public Oracle {
 public:
  DetectingOracle(Oracle& inner, DetectorConfig config);

  int output_channels() const override { return inner_->output_channels(); }
  int frames_per_sample() const override { return inner_->frames_per_sample(); }
  std::vector<Tensor> evaluate(std::span<const Sample> batch) override;

  std::uint64_t queries() const;
  std::uint64_t detections() const;
  double detection_rate() const;
  // Query indices (0-based) that were flagged.
  std::vector<std::uint64_t> flagged() const;

 private:
  Oracle* inner_;
  DetectorConfig config_;
  FingerprintStore store_;
  mutable std::mutex mutex_;
  std::uint64_t queries_ = 0;
  std::vector<std::uint64_t> flagged_;
};

// Attack-side bypass: perturbs every outgoing sample independently before
// forwarding it. Patch state and query accounting are untouched.
class RandomizingOracle : public Oracle {
 public:
  RandomizingOracle(Oracle& inner, double amplitude, std::uint64_t seed);

  int output_channels() const override { return inner_->output_channels(); }
  int frames_per_sample() const override { return inner_->frames_per_sample(); }
  std::vector<Tensor> evaluate(std::span<const Sample> batch) override;

 private:
  Oracle* inner_;
  double amplitude_;
  std::mutex mutex_;
  Rng rng_;
};

}  // namespace patchforge

#endif  // PATCHFORGE_DEFENSE_HPP_
