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

#ifndef PATCHFORGE_ORACLE_HPP_
#define PATCHFORGE_ORACLE_HPP_

#include <atomic>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "patchforge/tensor.hpp"

namespace patchforge {

// One model input: a single image for depth, two consecutive frames for flow.
struct Sample {
  std::vector<Image> frames;
  friend bool operator==(const Sample&, const Sample&) = default;
};

// Copy of `sample` with `patch` attached at `q` on every frame.
Sample attach_to_sample(const Sample& sample, const Patch& patch, Location q);

enum class SampleRole { kTraining, kValidation, kTest };

// Ordered, nonempty list of same-shaped samples. The id scopes
// reference-cache entries, so distinct sets need distinct ids.
class SampleSet {
 public:
  SampleSet(std::string id, SampleRole role, std::vector<Sample> samples);

  const std::string& id() const { return id_; }
  SampleRole role() const { return role_; }
  std::size_t size() const { return samples_.size(); }
  const Sample& operator[](std::size_t i) const { return samples_[i]; }
  const std::vector<Sample>& samples() const { return samples_; }
  int height() const { return height_; }
  int width() const { return width_; }
  int frames_per_sample() const { return frames_; }

 private:
  std::string id_;
  SampleRole role_;
  std::vector<Sample> samples_;
  int height_ = 0;
  int width_ = 0;
  int frames_ = 0;
};

// Black-box pixel-wise regressor. evaluate() returns one d x H x W tensor
// per input sample and must be deterministic for identical input.
class Oracle {
 public:
  virtual ~Oracle() = default;
  virtual int output_channels() const = 0;
  virtual int frames_per_sample() const = 0;
  virtual std::vector<Tensor> evaluate(std::span<const Sample> batch) = 0;
};

// Exact count of oracle sample evaluations. Safe for concurrent increments.
class QueryCounter {
 public:
  void add(std::uint64_t n) { total_.fetch_add(n, std::memory_order_relaxed); }
  std::uint64_t total() const { return total_.load(std::memory_order_relaxed); }

 private:
  std::atomic<std::uint64_t> total_{0};
};

// Oracle outputs under the black reference patch, keyed by
// (sample set, sample index, location, patch side). Entries are never
// recomputed.
class ReferenceCache {
 public:
  using Key = std::tuple<std::string, std::size_t, int, int, int>;

  const Tensor* find(const Key& key) const;
  const Tensor& insert(const Key& key, Tensor output);
  std::size_t size() const;

 private:
  mutable std::mutex mutex_;
  std::map<Key, Tensor> entries_;
};

// Last output seen for the *current* patch on a given (set, sample,
// location). Lets probe scoring skip the reference evaluation when the patch
// has not changed since the previous call.
class CurrentOutputCache {
 public:
  using Key = std::tuple<std::string, std::size_t, int, int>;

  const Tensor* find(const Key& key, const Patch& patch) const;
  void store(const Key& key, const Patch& patch, Tensor output);
  void clear();

 private:
  struct Entry {
    Patch patch;
    Tensor output;
  };
  mutable std::mutex mutex_;
  std::map<Key, Entry> entries_;
};

// Counted access to an oracle plus the caches that go with it.
class EvalContext {
 public:
  explicit EvalContext(Oracle& oracle) : oracle_(&oracle) {}

  Oracle& oracle() const { return *oracle_; }
  QueryCounter& counter() { return counter_; }
  const QueryCounter& counter() const { return counter_; }
  ReferenceCache& references() { return references_; }
  CurrentOutputCache& current_outputs() { return current_; }

  // Evaluates the batch, counting one query per sample, and checks every
  // output against the d x H x W contract.
  std::vector<Tensor> query(std::span<const Sample> batch);

  // Black-patch reference outputs for the given samples, evaluating the
  // uncached ones in a single batch.
  std::vector<const Tensor*> references_for(const SampleSet& set,
                                            std::span<const std::size_t> indices,
                                            Location q, int side);

 private:
  Oracle* oracle_;
  QueryCounter counter_;
  ReferenceCache references_;
  CurrentOutputCache current_;
};

// Pixel-wise error against the references: the mean signed difference for
// d = 1 and the mean Euclidean norm of the difference vector for d >= 2.
ErrorMap error_map_from_outputs(std::span<const Tensor> outputs,
                                std::span<const Tensor* const> references);

// Error map of `patch` at `q` averaged over the chosen samples (all of them
// when `indices` is empty). Uncached references are evaluated first.
ErrorMap pixel_error_map(EvalContext& ctx, const SampleSet& samples,
                         const Patch& patch, Location q,
                         std::span<const std::size_t> indices = {});

// Mean of the map over `region`, or over the whole map.
double mean_error(const ErrorMap& map, std::optional<Rect> region = std::nullopt);

// Which part of the error map the scalar objective averages over.
enum class ObjectiveRegion { kFootprint, kFullMap };

std::optional<Rect> objective_rect(ObjectiveRegion region, Location q, int side);

// Exact gradient of the objective with respect to the patch values inside
// `square` (patch coordinates), shape 3 x e x e. Requires a synthetic oracle;
// the oracle is called directly, so no queries are counted.
Tensor white_box_gradient(Oracle& oracle, const SampleSet& samples,
                          const Patch& patch, Location q,
                          const SquareRegion& square,
                          ObjectiveRegion region = ObjectiveRegion::kFootprint);

// Objective value computed white-box (uncounted); the companion of
// white_box_gradient for finite-difference checks and reference runs.
double white_box_objective(Oracle& oracle, const SampleSet& samples,
                           const Patch& patch, Location q,
                           ObjectiveRegion region = ObjectiveRegion::kFootprint);

}  // namespace patchforge

#endif  // PATCHFORGE_ORACLE_HPP_
