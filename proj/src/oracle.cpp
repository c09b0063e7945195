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

#include "patchforge/oracle.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "patchforge/errors.hpp"
#include "patchforge/synthetic.hpp"

namespace patchforge {

Sample attach_to_sample(const Sample& sample, const Patch& patch, Location q) {
  Sample out;
  out.frames.reserve(sample.frames.size());
  for (const auto& frame : sample.frames) out.frames.push_back(attach(frame, patch, q));
  return out;
}

SampleSet::SampleSet(std::string id, SampleRole role, std::vector<Sample> samples)
    : id_(std::move(id)), role_(role), samples_(std::move(samples)) {
  if (samples_.empty()) throw InvalidArgument("sample set '" + id_ + "' is empty");
  const auto& first = samples_.front();
  if (first.frames.empty()) throw InvalidArgument("sample without frames");
  height_ = first.frames[0].height();
  width_ = first.frames[0].width();
  frames_ = static_cast<int>(first.frames.size());
  for (const auto& s : samples_) {
    if (static_cast<int>(s.frames.size()) != frames_) {
      throw InvalidArgument("inconsistent frame count in sample set '" + id_ + "'");
    }
    for (const auto& f : s.frames) {
      if (f.channels() != 3 || f.height() != height_ || f.width() != width_) {
        throw InvalidArgument("inconsistent image shape in sample set '" + id_ + "'");
      }
    }
  }
}

// ---------------------------------------------------------------------------

const Tensor* ReferenceCache::find(const Key& key) const {
  std::lock_guard lock(mutex_);
  auto it = entries_.find(key);
  return it == entries_.end() ? nullptr : &it->second;
}

const Tensor& ReferenceCache::insert(const Key& key, Tensor output) {
  std::lock_guard lock(mutex_);
  // std::map nodes are stable, so returned references survive later inserts.
  return entries_.try_emplace(key, std::move(output)).first->second;
}

std::size_t ReferenceCache::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

const Tensor* CurrentOutputCache::find(const Key& key, const Patch& patch) const {
  std::lock_guard lock(mutex_);
  auto it = entries_.find(key);
  if (it == entries_.end() || !(it->second.patch == patch)) return nullptr;
  return &it->second.output;
}

void CurrentOutputCache::store(const Key& key, const Patch& patch, Tensor output) {
  std::lock_guard lock(mutex_);
  entries_.insert_or_assign(key, Entry{patch, std::move(output)});
}

void CurrentOutputCache::clear() {
  std::lock_guard lock(mutex_);
  entries_.clear();
}

// ---------------------------------------------------------------------------

std::vector<Tensor> EvalContext::query(std::span<const Sample> batch) {
  if (batch.empty()) return {};
  counter_.add(batch.size());
  std::vector<Tensor> outputs = oracle_->evaluate(batch);
  if (outputs.size() != batch.size()) {
    throw ProtocolError("oracle returned " + std::to_string(outputs.size()) +
                        " outputs for " + std::to_string(batch.size()) +
                        " samples");
  }
  const int d = oracle_->output_channels();
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    const Image& in = batch[i].frames.at(0);
    const Tensor& out = outputs[i];
    if (out.channels() != d || out.height() != in.height() ||
        out.width() != in.width()) {
      std::ostringstream os;
      os << "oracle output " << i << " has shape " << out.channels() << "x"
         << out.height() << "x" << out.width() << ", expected " << d << "x"
         << in.height() << "x" << in.width();
      throw ProtocolError(os.str());
    }
  }
  return outputs;
}

std::vector<const Tensor*> EvalContext::references_for(
    const SampleSet& set, std::span<const std::size_t> indices, Location q,
    int side) {
  std::vector<const Tensor*> refs(indices.size(), nullptr);
  std::vector<std::size_t> missing;
  std::vector<Sample> batch;
  const Patch black(3, side, side, 0.0);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const ReferenceCache::Key key{set.id(), indices[i], q.row, q.col, side};
    if (const Tensor* hit = references_.find(key)) {
      refs[i] = hit;
      continue;
    }
    // The same sample may be requested twice in one call.
    bool pending = false;
    for (std::size_t m : missing) pending |= indices[m] == indices[i];
    missing.push_back(i);
    if (!pending) batch.push_back(attach_to_sample(set[indices[i]], black, q));
  }
  if (!batch.empty()) {
    auto outputs = query(batch);
    std::size_t next = 0;
    for (std::size_t m : missing) {
      const ReferenceCache::Key key{set.id(), indices[m], q.row, q.col, side};
      if (const Tensor* hit = references_.find(key)) {
        refs[m] = hit;
      } else {
        refs[m] = &references_.insert(key, std::move(outputs[next++]));
      }
    }
  }
  return refs;
}

// ---------------------------------------------------------------------------

ErrorMap error_map_from_outputs(std::span<const Tensor> outputs,
                                std::span<const Tensor* const> references) {
  if (outputs.empty() || outputs.size() != references.size()) {
    throw InvalidArgument("need one reference per output");
  }
  const int d = outputs[0].channels();
  const int h = outputs[0].height();
  const int w = outputs[0].width();
  ErrorMap map(h, w);
  for (std::size_t k = 0; k < outputs.size(); ++k) {
    const Tensor& out = outputs[k];
    const Tensor& ref = *references[k];
    if (out.channels() != d || ref.channels() != d || out.height() != h ||
        ref.height() != h || out.width() != w || ref.width() != w) {
      throw ProtocolError("oracle output dimensions differ between samples");
    }
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        double e;
        if (d == 1) {
          e = out.at(0, r, c) - ref.at(0, r, c);
        } else {
          double sq = 0.0;
          for (int ch = 0; ch < d; ++ch) {
            const double diff = out.at(ch, r, c) - ref.at(ch, r, c);
            sq += diff * diff;
          }
          e = std::sqrt(sq);
        }
        map.at(r, c) += e;
      }
    }
  }
  const double inv = 1.0 / static_cast<double>(outputs.size());
  for (double& v : map.data()) v *= inv;
  return map;
}

ErrorMap pixel_error_map(EvalContext& ctx, const SampleSet& samples,
                         const Patch& patch, Location q,
                         std::span<const std::size_t> indices) {
  std::vector<std::size_t> all;
  if (indices.empty()) {
    all.resize(samples.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    indices = all;
  }
  check_fits(footprint(q, patch.height()), samples.height(), samples.width());
  const auto refs = ctx.references_for(samples, indices, q, patch.height());
  std::vector<Sample> batch;
  batch.reserve(indices.size());
  for (std::size_t i : indices) batch.push_back(attach_to_sample(samples[i], patch, q));
  const auto outputs = ctx.query(batch);
  return error_map_from_outputs(outputs, refs);
}

double mean_error(const ErrorMap& map, std::optional<Rect> region) {
  const Rect rect = region.value_or(Rect{0, 0, map.height(), map.width()});
  if (rect.height <= 0 || rect.width <= 0) {
    throw InvalidArgument("mean over an empty region");
  }
  check_fits(rect, map.height(), map.width());
  double sum = 0.0;
  for (int r = rect.top; r < rect.top + rect.height; ++r) {
    for (int c = rect.left; c < rect.left + rect.width; ++c) sum += map.at(r, c);
  }
  return sum / (static_cast<double>(rect.height) * rect.width);
}

std::optional<Rect> objective_rect(ObjectiveRegion region, Location q, int side) {
  if (region == ObjectiveRegion::kFullMap) return std::nullopt;
  return footprint(q, side);
}

// ---------------------------------------------------------------------------

namespace {

DifferentiableOracle& require_differentiable(Oracle& oracle) {
  auto* diff = dynamic_cast<DifferentiableOracle*>(&oracle);
  if (diff == nullptr) {
    throw Unsupported("white-box gradients need a synthetic oracle");
  }
  return *diff;
}

}  // namespace

double white_box_objective(Oracle& oracle, const SampleSet& samples,
                           const Patch& patch, Location q, ObjectiveRegion region) {
  auto& model = require_differentiable(oracle);
  const Patch black(3, patch.height(), patch.width(), 0.0);
  std::vector<Tensor> outputs;
  std::vector<Tensor> refs;
  for (const auto& s : samples.samples()) {
    outputs.push_back(model.forward(attach_to_sample(s, patch, q)));
    refs.push_back(model.forward(attach_to_sample(s, black, q)));
  }
  std::vector<const Tensor*> ref_ptrs;
  for (const auto& r : refs) ref_ptrs.push_back(&r);
  return mean_error(error_map_from_outputs(outputs, ref_ptrs),
                    objective_rect(region, q, patch.height()));
}

Tensor white_box_gradient(Oracle& oracle, const SampleSet& samples,
                          const Patch& patch, Location q,
                          const SquareRegion& square, ObjectiveRegion region) {
  auto& model = require_differentiable(oracle);
  const int side = patch.height();
  check_fits(square.rect(), side, side);
  check_fits(footprint(q, side), samples.height(), samples.width());

  const int h = samples.height();
  const int w = samples.width();
  const Rect obj = objective_rect(region, q, side).value_or(Rect{0, 0, h, w});
  const double weight =
      1.0 / (static_cast<double>(samples.size()) * obj.height * obj.width);
  const Patch black(3, side, side, 0.0);
  const Rect fp = footprint(q, side);

  Tensor patch_grad(3, side, side);
  for (const auto& s : samples.samples()) {
    const Sample attached = attach_to_sample(s, patch, q);
    const Tensor out = model.forward(attached);
    const Tensor ref = model.forward(attach_to_sample(s, black, q));
    const int d = out.channels();
    Tensor upstream(d, h, w);
    for (int r = obj.top; r < obj.top + obj.height; ++r) {
      for (int c = obj.left; c < obj.left + obj.width; ++c) {
        if (d == 1) {
          upstream.at(0, r, c) = weight;
          continue;
        }
        double sq = 0.0;
        for (int ch = 0; ch < d; ++ch) {
          const double diff = out.at(ch, r, c) - ref.at(ch, r, c);
          sq += diff * diff;
        }
        const double norm = std::sqrt(sq);
        // The norm is not differentiable at 0; take the zero subgradient.
        if (norm == 0.0) continue;
        for (int ch = 0; ch < d; ++ch) {
          upstream.at(ch, r, c) =
              weight * (out.at(ch, r, c) - ref.at(ch, r, c)) / norm;
        }
      }
    }
    // The patch sits at the same place on every frame.
    for (const Tensor& g : model.backward(attached, upstream)) {
      for (int ch = 0; ch < 3; ++ch) {
        for (int r = 0; r < side; ++r) {
          for (int c = 0; c < side; ++c) {
            patch_grad.at(ch, r, c) += g.at(ch, fp.top + r, fp.left + c);
          }
        }
      }
    }
  }
  return crop(patch_grad, square.side, square.center);
}

}  // namespace patchforge
