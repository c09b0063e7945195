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

#include "patchforge/gradest.hpp"

#include <algorithm>
#include <cmath>
#include <exception>

namespace patchforge {

ProbeBatch generate_probes(int side, double epsilon, int count, Rng& rng) {
  if (!(epsilon > 0.0)) throw InvalidArgument("probe bound must be positive");
  if (count < 1) throw InvalidArgument("need at least one probe");
  ProbeBatch batch;
  batch.side = side;
  batch.epsilon = epsilon;
  batch.probes.reserve(count);
  for (int i = 0; i < count; ++i) {
    Tensor probe(3, side, side);
    for (double& v : probe.data()) v = rng.coin() ? epsilon : -epsilon;
    batch.probes.push_back(std::move(probe));
  }
  return batch;
}

namespace {

double objective(const Tensor& output, const Tensor& reference,
                 const ScoringTarget& target, int patch_side) {
  const Tensor* ref = &reference;
  const ErrorMap map = error_map_from_outputs(std::span(&output, 1), std::span(&ref, 1));
  return mean_error(map, objective_rect(target.region, target.q, patch_side));
}

}  // namespace

void score_probes(EvalContext& ctx, const ScoringTarget& target,
                  const Patch& patch, const SquareRegion& square,
                  ProbeBatch& batch) {
  if (target.set == nullptr) throw InvalidArgument("scoring target without samples");
  if (batch.side != square.side) {
    throw InvalidArgument("probe side does not match the square");
  }
  const SampleSet& set = *target.set;
  const int h = patch.height();
  check_fits(square.rect(), h, h);
  check_fits(footprint(target.q, h), set.height(), set.width());
  const Sample& sample = set[target.index];

  const std::size_t index = target.index;
  const Tensor& reference =
      *ctx.references_for(set, std::span(&index, 1), target.q, h).front();

  const CurrentOutputCache::Key key{set.id(), target.index, target.q.row,
                                    target.q.col};
  const Tensor* current = ctx.current_outputs().find(key, patch);
  if (current == nullptr) {
    const Sample attached = attach_to_sample(sample, patch, target.q);
    auto out = ctx.query(std::span(&attached, 1));
    ctx.current_outputs().store(key, patch, std::move(out.front()));
    current = ctx.current_outputs().find(key, patch);
  }
  const double base = objective(*current, reference, target, h);

  const Tensor s = crop(patch, square.side, square.center);
  std::vector<Sample> inputs;
  inputs.reserve(batch.probes.size());
  for (const Tensor& probe : batch.probes) {
    Tensor moved = s;
    for (std::size_t j = 0; j < moved.size(); ++j) {
      moved.data()[j] = std::clamp(moved.data()[j] + probe.data()[j], 0.0, 1.0);
    }
    inputs.push_back(attach_to_sample(sample, attach(patch, moved, square.center),
                                      target.q));
  }
  std::vector<Tensor> outputs;
  try {
    outputs = ctx.query(inputs);
  } catch (const Error& e) {
    std::throw_with_nested(ProbeError(
        "oracle failed on probes [0, " + std::to_string(inputs.size()) +
            "): " + e.what(),
        0, inputs.size()));
  }
  batch.scores.resize(outputs.size());
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    batch.scores[i] = objective(outputs[i], reference, target, h) - base;
  }
}

std::vector<double> adjust_scores(std::span<const double> scores,
                                  const ScoreAdjustment& options) {
  std::vector<double> out(scores.begin(), scores.end());
  double max_pos = 0.0, min_neg = 0.0;
  std::size_t n_pos = 0, n_neg = 0;
  for (double v : out) {
    if (v > 0.0) {
      max_pos = std::max(max_pos, v);
      ++n_pos;
    } else if (v < 0.0) {
      min_neg = std::min(min_neg, v);
      ++n_neg;
    }
  }
  for (double& v : out) {
    if (v > 0.0) {
      if (options.normalize) v /= max_pos;
      if (options.adaptive_scale) v /= static_cast<double>(n_pos);
    } else if (v < 0.0) {
      if (options.normalize) v /= -min_neg;
      if (options.adaptive_scale) v /= static_cast<double>(n_neg);
    }
  }
  return out;
}

Tensor estimate_gradient(const ProbeBatch& batch) {
  if (batch.scores.size() != batch.probes.size() || batch.probes.empty()) {
    throw InvalidArgument("estimate_gradient needs one score per probe");
  }
  const int e = batch.side;
  Tensor g(3, e, e);
  for (std::size_t i = 0; i < batch.probes.size(); ++i) {
    const double w = batch.scores[i];
    if (w == 0.0) continue;
    const auto probe = batch.probes[i].data();
    auto out = g.data();
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += w * probe[j];
  }
  const double b = static_cast<double>(batch.probes.size());
  double sq = 0.0;
  for (double& v : g.data()) {
    v /= b;
    sq += v * v;
  }
  if (sq == 0.0) return Tensor(3, e, e);
  const double scale = std::sqrt(3.0 * e * e) / std::sqrt(sq);
  for (double& v : g.data()) v *= scale;
  return g;
}

bool is_zero(const Tensor& t) {
  return std::all_of(t.data().begin(), t.data().end(),
                     [](double v) { return v == 0.0; });
}

Tensor adam_step(AdamState& state, const Tensor& square, const Tensor& gradient,
                 const AdamConfig& config) {
  if (square.size() != gradient.size() || state.m.size() != square.size()) {
    throw InvalidArgument("adam_step shape mismatch: square " +
                          std::to_string(square.size()) + ", gradient " +
                          std::to_string(gradient.size()) + ", moments " +
                          std::to_string(state.m.size()));
  }
  ++state.steps;
  const double c1 = 1.0 - std::pow(config.beta1, state.steps);
  const double c2 = 1.0 - std::pow(config.beta2, state.steps);
  Tensor out = square;
  auto m = state.m.data();
  auto v = state.v.data();
  const auto g = gradient.data();
  auto x = out.data();
  for (std::size_t j = 0; j < x.size(); ++j) {
    m[j] = config.beta1 * m[j] + (1.0 - config.beta1) * g[j];
    v[j] = config.beta2 * v[j] + (1.0 - config.beta2) * g[j] * g[j];
    const double step =
        config.learning_rate * (m[j] / c1) / (std::sqrt(v[j] / c2) + config.floor);
    x[j] = std::clamp(x[j] + step, 0.0, 1.0);
  }
  return out;
}

}  // namespace patchforge
