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

#include "patchforge/attack.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <numeric>

#include "patchforge/errors.hpp"

namespace patchforge {

void validate(const AttackConfig& c) {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ConfigError("invalid config field '" + field + "': " + why);
  };
  if (c.patch_side < 2) fail("patch_size", "must be >= 2");
  if (c.positions < 1) fail("positions", "must be >= 1");
  if (c.val_positions < 1) fail("val_positions", "must be >= 1");
  if (c.max_iters < 0) fail("max_iters", "must be >= 0");
  if (c.max_steps < 1) fail("max_steps", "must be >= 1");
  if (c.probes < 1) fail("b", "must be >= 1");
  if (c.intra_threshold < 1) fail("t1", "must be >= 1");
  if (c.inter_threshold < 1) fail("t2", "must be >= 1");
  if (!(c.alpha > 0.0 && c.alpha <= 1.0)) fail("alpha", "must be in (0, 1]");
  if (!(c.gamma > 0.0 && c.gamma < 1.0)) fail("gamma", "must be in (0, 1)");
  if (c.init_period < 0) fail("init_period", "must be >= 0");
  if (!(c.schedule.initial_area_fraction > 0.0 &&
        c.schedule.initial_area_fraction <= 1.0)) {
    fail("initial_area_fraction", "must be in (0, 1]");
  }
  if (!(c.adam.learning_rate > 0.0)) fail("learning_rate", "must be > 0");
  if (!(c.adam.beta1 >= 0.0 && c.adam.beta1 < 1.0)) fail("beta1", "must be in [0, 1)");
  if (!(c.adam.beta2 >= 0.0 && c.adam.beta2 < 1.0)) fail("beta2", "must be in [0, 1)");
  if (c.val_subsample < 0) fail("val_subsample", "must be >= 0");
  if (c.time_limit_seconds < 0.0) fail("time_limit_seconds", "must be >= 0");
}

const char* to_string(StopReason reason) {
  switch (reason) {
    case StopReason::kMaxIters: return "max_iters";
    case StopReason::kBudget: return "budget";
    case StopReason::kTimeLimit: return "time_limit";
  }
  return "unknown";
}

bool decay_policy(NoiseSchedule& schedule, bool improved, int threshold,
                  double gamma) {
  if (improved) {
    schedule.stale_iterations = 0;
    return false;
  }
  if (++schedule.stale_iterations < threshold) return false;
  schedule.epsilon *= gamma;
  schedule.stale_iterations = 0;
  ++schedule.decays;
  return true;
}

Tensor square_gradient(EvalContext& ctx, const GradientRequest& request,
                       Location q, Rng& rng) {
  ProbeBatch batch =
      generate_probes(request.square.side, request.epsilon, request.probes, rng);
  const ScoringTarget target{request.train, request.sample, q, request.objective};
  score_probes(ctx, target, *request.patch, request.square, batch);
  batch.scores = adjust_scores(batch.scores, request.adjustment);
  return estimate_gradient(batch);
}

Tensor multi_position_gradient(EvalContext& ctx, const GradientRequest& request,
                               std::span<const Location> positions, Rng& rng) {
  if (positions.empty()) throw InvalidArgument("need at least one patch position");
  const int h = request.patch->height();
  for (const Location& p : positions) {
    check_fits(footprint(p, h), request.train->height(), request.train->width());
  }
  if (positions.size() == 1) return square_gradient(ctx, request, positions[0], rng);
  Tensor sum(3, request.square.side, request.square.side);
  for (const Location& p : positions) {
    const Tensor g = square_gradient(ctx, request, p, rng);
    for (std::size_t j = 0; j < sum.size(); ++j) sum.data()[j] += g.data()[j];
  }
  const double k = static_cast<double>(positions.size());
  for (double& v : sum.data()) v /= k;
  return sum;
}

double evaluate_patch(EvalContext& ctx, const Patch& patch, const SampleSet& samples,
                      std::span<const Location> positions) {
  if (positions.empty()) throw InvalidArgument("need at least one patch position");
  double total = 0.0;
  for (const Location& p : positions) {
    const ErrorMap map = pixel_error_map(ctx, samples, patch, p);
    total += mean_error(map, footprint(p, patch.height()));
  }
  return total / static_cast<double>(positions.size());
}

std::vector<Location> random_positions(int count, int side, int height, int width,
                                       Rng& rng) {
  const int rows = height - side + 1;
  const int cols = width - side + 1;
  if (rows < 1 || cols < 1) throw BoundsError("patch larger than the image");
  std::vector<Location> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    const int r = static_cast<int>(rng.below(rows)) + side / 2;
    const int c = static_cast<int>(rng.below(cols)) + side / 2;
    out.push_back(Location{r, c});
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

struct Streams {
  Rng patch;
  Rng square;
  Rng sample;
  Rng probe;
  Rng position;
};

Streams make_streams(std::uint64_t seed) {
  Rng root(seed);
  Rng patch = root.split();
  Rng square = root.split();
  Rng sample = root.split();
  Rng probe = root.split();
  Rng position = root.split();
  return Streams{patch, square, sample, probe, position};
}

struct Evaluation {
  std::vector<ErrorMap> maps;  // one per validation placement
  double omega = 0.0;
  std::uint64_t reference_queries = 0;
  std::uint64_t validation_queries = 0;
};

// Objective on the validation samples at every validation placement.
class Validator {
 public:
  Validator(const AttackConfig& config, const SampleSet& val, Streams& streams)
      : config_(config), val_(val) {
    if (config.positions == 1) {
      positions_ = {config.location};
    } else {
      positions_ = random_positions(config.val_positions, config.patch_side,
                                    val.height(), val.width(), streams.position);
    }
    indices_.resize(val.size());
    std::iota(indices_.begin(), indices_.end(), std::size_t{0});
    if (config.val_subsample > 0 &&
        static_cast<std::size_t>(config.val_subsample) < val.size()) {
      // Partial Fisher-Yates, then restore index order for stable reductions.
      for (std::size_t i = 0; i < static_cast<std::size_t>(config.val_subsample); ++i) {
        std::swap(indices_[i], indices_[i + streams.position.below(val.size() - i)]);
      }
      indices_.resize(config.val_subsample);
      std::sort(indices_.begin(), indices_.end());
    }
    for (const Location& p : positions_) {
      check_fits(footprint(p, config.patch_side), val.height(), val.width());
    }
  }

  const std::vector<Location>& positions() const { return positions_; }
  std::size_t sample_count() const { return indices_.size(); }
  std::uint64_t cost() const { return indices_.size() * positions_.size(); }

  Evaluation evaluate(EvalContext& ctx, const Patch& patch) const {
    Evaluation ev;
    const std::uint64_t start = ctx.counter().total();
    for (const Location& p : positions_) {
      ctx.references_for(val_, indices_, p, patch.height());
    }
    const std::uint64_t after_refs = ctx.counter().total();
    double total = 0.0;
    for (const Location& p : positions_) {
      ev.maps.push_back(pixel_error_map(ctx, val_, patch, p, indices_));
      total += mean_error(ev.maps.back(),
                          objective_rect(config_.objective, p, patch.height()));
    }
    ev.omega = total / static_cast<double>(positions_.size());
    ev.reference_queries = after_refs - start;
    ev.validation_queries = ctx.counter().total() - after_refs;
    return ev;
  }

  // Smoothed h x h error under the patch, averaged over the placements.
  ErrorMap footprint_map(const Evaluation& ev, int square) const {
    const int h = config_.patch_side;
    ErrorMap acc(h, h);
    for (std::size_t i = 0; i < positions_.size(); ++i) {
      const ErrorMap fp = smoothed_footprint(ev.maps[i], positions_[i], h, square);
      for (std::size_t j = 0; j < acc.data().size(); ++j) acc.data()[j] += fp.data()[j];
    }
    const double n = static_cast<double>(positions_.size());
    for (double& v : acc.data()) v /= n;
    return acc;
  }

 private:
  const AttackConfig& config_;
  const SampleSet& val_;
  std::vector<Location> positions_;
  std::vector<std::size_t> indices_;
};

class StopWatch {
 public:
  explicit StopWatch(double limit) : limit_(limit), start_(Clock::now()) {}
  bool expired() const {
    if (limit_ <= 0.0) return false;
    return std::chrono::duration<double>(Clock::now() - start_).count() >= limit_;
  }

 private:
  using Clock = std::chrono::steady_clock;
  double limit_;
  Clock::time_point start_;
};

bool over_budget(const AttackConfig& config, const EvalContext& ctx,
                 std::uint64_t next_cost) {
  return config.query_budget != 0 &&
         ctx.counter().total() + next_cost > config.query_budget;
}

}  // namespace

AttackResult run_attack(const AttackConfig& config, EvalContext& ctx,
                        const SampleSet& train, const SampleSet& val,
                        std::ostream* log) {
  validate(config);
  const int h = config.patch_side;
  if (train.height() != val.height() || train.width() != val.width()) {
    throw InvalidArgument("training and validation images differ in shape");
  }
  check_fits(footprint(config.location, h), train.height(), train.width());

  Streams streams = make_streams(config.seed);
  const Validator validator(config, val, streams);
  const std::uint64_t init_cost = 2 * validator.cost();
  if (over_budget(config, ctx, init_cost)) {
    throw BudgetExhausted("query budget " + std::to_string(config.query_budget) +
                          " cannot cover the initial evaluation (" +
                          std::to_string(init_cost) + " queries)");
  }
  // Worst case: every placement misses both the reference and current-patch
  // caches.
  const std::uint64_t step_cost =
      static_cast<std::uint64_t>(config.positions) * (config.probes + 2) +
      validator.cost();

  AttackResult result;
  result.header = LogHeader{"square-grad", config.probes, config.positions,
                            static_cast<int>(validator.sample_count()),
                            static_cast<int>(validator.positions().size())};
  RunLogWriter writer(log);
  writer.header(result.header);
  const StopWatch clock(config.time_limit_seconds);

  Patch patch = init_striped_patch(h, streams.patch);
  NoiseSchedule noise{config.alpha};
  auto snapshot = [&] {
    result.final_patch = patch;
    result.queries = ctx.counter().total();
    result.decays = noise.decays;
    result.epsilon = noise.epsilon;
    result.log = writer.records();
  };

  try {
    Evaluation last = validator.evaluate(ctx, patch);
    double omega_star = last.omega;
    result.best_patch = patch;
    result.best_score = omega_star;
    writer.write(RunRecord{ctx.counter().total(), 0, 0, omega_star, omega_star,
                           noise.epsilon, 0, 0, 0, "init", 0,
                           last.reference_queries, last.validation_queries});

    const ScoreAdjustment adjustment{config.score_normalization,
                                     config.adaptive_scaling};
    bool stopped = false;
    for (int iter = 0; iter < config.max_iters && !stopped; ++iter) {
      if (clock.expired()) {
        result.stop = StopReason::kTimeLimit;
        break;
      }
      if (over_budget(config, ctx, step_cost)) {
        result.stop = StopReason::kBudget;
        break;
      }
      result.iterations = iter + 1;

      const SamplerInputs in{iter, h, config.init_period,
                             config.probabilistic_sampling, config.schedule};
      const int e = square_size(iter, h, config.schedule);
      const bool uniform = !in.probabilistic || iter <= in.init_period;
      const SquareRegion square = sample_square_from_footprint(
          in, uniform ? ErrorMap() : validator.footprint_map(last, e),
          streams.square);

      AdamState adam(e);
      bool improved_iter = false;
      int stale = 0;
      for (int step = 0; step < config.max_steps; ++step) {
        if (step > 0) {
          if (clock.expired()) {
            result.stop = StopReason::kTimeLimit;
            stopped = true;
            break;
          }
          if (over_budget(config, ctx, step_cost)) {
            result.stop = StopReason::kBudget;
            stopped = true;
            break;
          }
        }
        const std::uint64_t before = ctx.counter().total();
        const std::size_t sample = streams.sample.below(train.size());
        std::vector<Location> placements;
        if (config.positions == 1) {
          placements = {config.location};
        } else {
          placements = random_positions(config.positions, h, train.height(),
                                        train.width(), streams.position);
        }
        const GradientRequest request{&train,        sample,         &patch,
                                      square,        noise.epsilon,  config.probes,
                                      adjustment,    config.objective};
        const Tensor g = multi_position_gradient(ctx, request, placements,
                                                 streams.probe);
        const std::uint64_t probe_queries =
            static_cast<std::uint64_t>(config.probes) * placements.size();
        const std::uint64_t grad_refs =
            ctx.counter().total() - before - probe_queries;

        double omega = last.omega;
        std::uint64_t val_refs = 0, val_queries = 0;
        if (!is_zero(g)) {
          const Tensor s = crop(patch, e, square.center);
          attach_in_place(patch, adam_step(adam, s, g, config.adam), square.center);
          last = validator.evaluate(ctx, patch);
          omega = last.omega;
          val_refs = last.reference_queries;
          val_queries = last.validation_queries;
        }

        if (omega > omega_star) {
          omega_star = omega;
          result.best_patch = patch;
          result.best_score = omega_star;
          improved_iter = true;
          stale = 0;
        } else {
          ++stale;
        }

        std::string event = step == 0 ? "square-switch" : "step";
        const bool last_step = stale >= config.intra_threshold ||
                               step + 1 == config.max_steps;
        if (last_step &&
            decay_policy(noise, improved_iter, config.inter_threshold, config.gamma)) {
          event = "decay";
        }
        writer.write(RunRecord{ctx.counter().total(), iter, step, omega_star, omega,
                               noise.epsilon, square.center.row, square.center.col,
                               e, event, probe_queries, grad_refs + val_refs,
                               val_queries});
        if (stale >= config.intra_threshold) break;
      }
    }
  } catch (const Error& e) {
    snapshot();
    std::throw_with_nested(
        AttackAborted(std::string("attack aborted: ") + e.what(), result));
  }
  snapshot();
  return result;
}

AttackResult run_random_search(const AttackConfig& config, EvalContext& ctx,
                               const SampleSet& train, const SampleSet& val,
                               std::ostream* log) {
  validate(config);
  const int h = config.patch_side;
  if (train.height() != val.height() || train.width() != val.width()) {
    throw InvalidArgument("training and validation images differ in shape");
  }
  check_fits(footprint(config.location, h), val.height(), val.width());

  Streams streams = make_streams(config.seed);
  const Validator validator(config, val, streams);
  if (over_budget(config, ctx, 2 * validator.cost())) {
    throw BudgetExhausted("query budget " + std::to_string(config.query_budget) +
                          " cannot cover the initial evaluation");
  }

  AttackResult result;
  result.header = LogHeader{"random-search", 0, 1,
                            static_cast<int>(validator.sample_count()),
                            static_cast<int>(validator.positions().size())};
  RunLogWriter writer(log);
  writer.header(result.header);
  const StopWatch clock(config.time_limit_seconds);

  Patch patch = init_striped_patch(h, streams.patch);
  auto snapshot = [&] {
    result.final_patch = patch;
    result.queries = ctx.counter().total();
    result.log = writer.records();
  };

  try {
    const Evaluation init = validator.evaluate(ctx, patch);
    double omega_star = init.omega;
    result.best_patch = patch;
    result.best_score = omega_star;
    writer.write(RunRecord{ctx.counter().total(), 0, 0, omega_star, omega_star, 0.0,
                           0, 0, 0, "rs-init", 0, init.reference_queries,
                           init.validation_queries});

    for (int iter = 0; iter < config.max_iters; ++iter) {
      if (clock.expired()) {
        result.stop = StopReason::kTimeLimit;
        break;
      }
      if (over_budget(config, ctx, validator.cost())) {
        result.stop = StopReason::kBudget;
        break;
      }
      result.iterations = iter + 1;
      const int e = square_size(iter, h, config.schedule);
      const Location center = uniform_centers(h, e).sample(streams.square);
      Patch candidate = patch;
      for (int c = 0; c < 3; ++c) {
        const double color = streams.probe.coin() ? 1.0 : 0.0;
        const Rect rect = footprint(center, e);
        for (int r = rect.top; r < rect.top + rect.height; ++r) {
          for (int col = rect.left; col < rect.left + rect.width; ++col) {
            candidate.at(c, r, col) = color;
          }
        }
      }
      const Evaluation ev = validator.evaluate(ctx, candidate);
      if (ev.omega > omega_star) {
        omega_star = ev.omega;
        patch = std::move(candidate);
        result.best_patch = patch;
        result.best_score = omega_star;
      }
      writer.write(RunRecord{ctx.counter().total(), iter, 0, omega_star, ev.omega,
                             0.0, center.row, center.col, e, "rs-step", 0,
                             ev.reference_queries, ev.validation_queries});
    }
  } catch (const Error& e) {
    snapshot();
    std::throw_with_nested(
        AttackAborted(std::string("random search aborted: ") + e.what(), result));
  }
  snapshot();
  return result;
}

WhiteBoxResult run_white_box(const AttackConfig& config, Oracle& oracle,
                             const SampleSet& train, const SampleSet& val,
                             int steps) {
  validate(config);
  const int h = config.patch_side;
  Streams streams = make_streams(config.seed);
  Patch patch = init_striped_patch(h, streams.patch);
  const SquareRegion whole{Location{h / 2, h / 2}, h};
  AdamState adam(h);

  WhiteBoxResult result;
  result.best_patch = patch;
  result.best_score =
      white_box_objective(oracle, val, patch, config.location, config.objective);
  result.trace.push_back(result.best_score);
  for (int step = 0; step < steps; ++step) {
    const Tensor g = white_box_gradient(oracle, train, patch, config.location, whole,
                                        config.objective);
    patch = adam_step(adam, patch, g, config.adam);
    const double omega =
        white_box_objective(oracle, val, patch, config.location, config.objective);
    result.trace.push_back(omega);
    if (omega > result.best_score) {
      result.best_score = omega;
      result.best_patch = patch;
    }
  }
  return result;
}

}  // namespace patchforge
