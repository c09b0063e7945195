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

#include <gtest/gtest.h>

#include "patchforge/attack.hpp"
#include "patchforge/errors.hpp"
#include "patchforge/synthetic.hpp"
#include "support.hpp"

namespace patchforge {
namespace {

using testing::noise_set;

struct Scene {
  SampleSet train = noise_set("train", SampleRole::kTraining, 1, 32, 32, 10);
  SampleSet val = noise_set("val", SampleRole::kValidation, 3, 32, 32, 20);
};

AttackConfig rs_config(int iters) {
  AttackConfig c;
  c.patch_side = 8;
  c.location = {16, 16};
  c.seed = 4;
  c.max_iters = iters;
  return c;
}

TEST(RandomSearch, EachIterationCostsOneValidationPass) {
  Scene sc;
  BlurDepthOracle oracle;
  EvalContext ctx(oracle);
  const AttackResult r = run_random_search(rs_config(200), ctx, sc.train, sc.val);
  ASSERT_EQ(r.log.size(), 201u);
  EXPECT_EQ(r.log[0].event, "rs-init");
  EXPECT_EQ(r.log[0].queries, 6u);  // three references plus three patched
  for (std::size_t i = 1; i < r.log.size(); ++i) {
    ASSERT_EQ(r.log[i].queries - r.log[i - 1].queries, 3u);
    ASSERT_EQ(r.log[i].event, "rs-step");
    ASSERT_GE(r.log[i].omega_star, r.log[i - 1].omega_star);
  }
  EXPECT_EQ(r.queries, ctx.counter().total());
}

TEST(RandomSearch, RejectedProposalLeavesPatchUnchanged) {
  Scene sc;
  BlurDepthOracle oracle;
  int rejected = 0;
  for (int n = 1; n < 60; ++n) {
    EvalContext a(oracle), b(oracle);
    const AttackResult before = run_random_search(rs_config(n), a, sc.train, sc.val);
    const AttackResult after = run_random_search(rs_config(n + 1), b, sc.train, sc.val);
    const RunRecord& last = after.log.back();
    if (last.omega > before.best_score) {
      EXPECT_NE(after.final_patch, before.final_patch);
      EXPECT_EQ(after.best_score, last.omega);
    } else {
      ++rejected;
      EXPECT_EQ(after.final_patch, before.final_patch);
      EXPECT_EQ(after.best_score, before.best_score);
    }
  }
  EXPECT_GT(rejected, 0);
}

TEST(RandomSearch, ProposalsAreCubeVertices) {
  Scene sc;
  BlurDepthOracle oracle;
  EvalContext ctx(oracle);
  AttackConfig c = rs_config(300);
  const AttackResult r = run_random_search(c, ctx, sc.train, sc.val);
  // Painted squares only ever hold 0 or 1; everything else is the striped start.
  Rng root(c.seed);
  Rng patch_stream = root.split();
  const Patch init = init_striped_patch(8, patch_stream);
  for (std::size_t i = 0; i < r.best_patch.size(); ++i) {
    const double v = r.best_patch.data()[i];
    if (v != init.data()[i]) EXPECT_TRUE(v == 0.0 || v == 1.0);
  }
  EXPECT_GT(r.best_score, r.log.front().omega_star);
}

TEST(RandomSearch, SeededRunsAreIdentical) {
  Scene sc;
  BlurDepthOracle oracle;
  EvalContext a(oracle), b(oracle);
  const AttackResult x = run_random_search(rs_config(100), a, sc.train, sc.val);
  const AttackResult y = run_random_search(rs_config(100), b, sc.train, sc.val);
  EXPECT_EQ(x.log, y.log);
  EXPECT_EQ(x.best_patch, y.best_patch);
}

TEST(RandomSearch, BudgetRespected) {
  Scene sc;
  BlurDepthOracle oracle;
  EvalContext ctx(oracle);
  AttackConfig c = rs_config(100000);
  c.query_budget = 100;
  const AttackResult r = run_random_search(c, ctx, sc.train, sc.val);
  EXPECT_EQ(r.stop, StopReason::kBudget);
  EXPECT_EQ(ctx.counter().total(), 99u);
}

}  // namespace
}  // namespace patchforge
