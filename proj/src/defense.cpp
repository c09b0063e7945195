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

#include "patchforge/defense.hpp"

#include <algorithm>
#include <cmath>

#include "patchforge/errors.hpp"

namespace patchforge {

void validate(const DetectorConfig& c) {
  if (c.levels < 2 || c.levels > 256) {
    throw ConfigError("invalid config field 'levels': must be in [2, 256]");
  }
  if (c.window <= 0) throw ConfigError("invalid config field 'window': must be > 0");
  if (c.stride <= 0 || c.stride > c.window) {
    throw ConfigError("invalid config field 'stride': must be in (0, window]");
  }
  if (c.hashes < 1) throw ConfigError("invalid config field 'hashes': must be >= 1");
  if (c.threshold < 1 || c.threshold > c.hashes) {
    throw ConfigError("invalid config field 'threshold': must be in [1, hashes]");
  }
}

int quantize_level(double v, int levels) {
  const double scaled = std::floor(v * levels);
  return static_cast<int>(std::clamp(scaled, 0.0, static_cast<double>(levels - 1)));
}

std::vector<std::uint8_t> quantized_bytes(const Sample& sample, int levels) {
  std::vector<std::uint8_t> out;
  for (const Image& img : sample.frames) {
    for (int r = 0; r < img.height(); ++r) {
      for (int c = 0; c < img.width(); ++c) {
        for (int ch = 0; ch < img.channels(); ++ch) {
          out.push_back(static_cast<std::uint8_t>(quantize_level(img.at(ch, r, c), levels)));
        }
      }
    }
  }
  return out;
}

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

Fingerprint fingerprint_query(const Sample& sample, const DetectorConfig& config) {
  validate(config);
  const auto bytes = quantized_bytes(sample, config.levels);
  Fingerprint all;
  const std::size_t w = static_cast<std::size_t>(config.window);
  if (bytes.size() <= w) {
    all.push_back(fnv1a64(bytes));
  } else {
    for (std::size_t off = 0; off + w <= bytes.size(); off += config.stride) {
      all.push_back(fnv1a64(std::span(bytes).subspan(off, w)));
    }
  }
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());
  if (all.size() > static_cast<std::size_t>(config.hashes)) all.resize(config.hashes);
  return all;
}

Fingerprint fingerprint_query(const Image& image, const DetectorConfig& config) {
  return fingerprint_query(Sample{{image}}, config);
}

std::size_t overlap(const Fingerprint& a, const Fingerprint& b) {
  std::size_t i = 0, j = 0, n = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] < b[j]) {
      ++i;
    } else if (b[j] < a[i]) {
      ++j;
    } else {
      ++n;
      ++i;
      ++j;
    }
  }
  return n;
}

Detection FingerprintStore::detect(const Fingerprint& incoming, int threshold) {
  std::lock_guard lock(mutex_);
  Detection d;
  for (const auto& fp : stored_) {
    d.max_overlap = std::max(d.max_overlap, overlap(fp, incoming));
  }
  // Queries too small to fill the fingerprint match on full overlap.
  const std::size_t need =
      std::min(static_cast<std::size_t>(threshold), std::max<std::size_t>(incoming.size(), 1));
  d.matched = !stored_.empty() && d.max_overlap >= need;
  stored_.push_back(incoming);
  return d;
}

std::size_t FingerprintStore::size() const {
  std::lock_guard lock(mutex_);
  return stored_.size();
}

Image randomize_sample(const Image& image, double amplitude, Rng& rng) {
  if (!(amplitude >= 0.0 && amplitude <= 0.1)) {
    throw InvalidArgument("noise amplitude must be in [0, 0.1]");
  }
  Image out = image;
  if (amplitude == 0.0) return out;
  for (double& v : out.data()) {
    v = std::clamp(v + rng.uniform(-amplitude, amplitude), 0.0, 1.0);
  }
  return out;
}

// ---------------------------------------------------------------------------

DetectingOracle::DetectingOracle(Oracle& inner, DetectorConfig config)
    : inner_(&inner), config_(config) {
  validate(config_);
}

std::vector<Tensor> DetectingOracle::evaluate(std::span<const Sample> batch) {
  {
    std::lock_guard lock(mutex_);
    for (const Sample& s : batch) {
      const Detection d = store_.detect(fingerprint_query(s, config_), config_.threshold);
      if (d.matched) flagged_.push_back(queries_);
      ++queries_;
    }
  }
  return inner_->evaluate(batch);
}

std::uint64_t DetectingOracle::queries() const {
  std::lock_guard lock(mutex_);
  return queries_;
}

std::uint64_t DetectingOracle::detections() const {
  std::lock_guard lock(mutex_);
  return flagged_.size();
}

double DetectingOracle::detection_rate() const {
  std::lock_guard lock(mutex_);
  return queries_ == 0 ? 0.0 : static_cast<double>(flagged_.size()) / queries_;
}

std::vector<std::uint64_t> DetectingOracle::flagged() const {
  std::lock_guard lock(mutex_);
  return flagged_;
}

RandomizingOracle::RandomizingOracle(Oracle& inner, double amplitude,
                                     std::uint64_t seed)
    : inner_(&inner), amplitude_(amplitude), rng_(seed) {
  if (!(amplitude >= 0.0 && amplitude <= 0.1)) {
    throw InvalidArgument("noise amplitude must be in [0, 0.1]");
  }
}

std::vector<Tensor> RandomizingOracle::evaluate(std::span<const Sample> batch) {
  std::vector<Sample> noisy;
  noisy.reserve(batch.size());
  {
    std::lock_guard lock(mutex_);
    for (const Sample& s : batch) {
      Sample n;
      for (const Image& f : s.frames) n.frames.push_back(randomize_sample(f, amplitude_, rng_));
      noisy.push_back(std::move(n));
    }
  }
  return inner_->evaluate(noisy);
}

}  // namespace patchforge
