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

#include <chrono>
#include <cmath>
#include <cstring>
#include <limits>
#include <thread>

#include "httplib.h"
#include "patchforge/attack.hpp"
#include "patchforge/errors.hpp"
#include "patchforge/remote.hpp"
#include "patchforge/synthetic.hpp"
#include "support.hpp"

namespace patchforge {
namespace {

using testing::noise_image;
using testing::noise_set;

Tensor ramp(int c, int h, int w, double scale) {
  Tensor t(c, h, w);
  for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = scale * static_cast<double>(i) - 1.0;
  return t;
}

TEST(Wire, GoldenBytes) {
  Tensor t(1, 1, 2);
  t.at(0, 0, 0) = 0.5;
  t.at(0, 0, 1) = -2.0;
  const std::vector<std::uint8_t> expected = {
      0x42, 0x50, 0x52, 0x54, 0x01, 0x01, 0x00, 0x00, 0x01, 0x00, 0x00,
      0x00, 0x01, 0x00, 0x00, 0x00, 0x01, 0x00, 0x00, 0x00, 0x02, 0x00,
      0x00, 0x00, 0x00, 0x00, 0x00, 0x3f, 0x00, 0x00, 0x00, 0xc0};
  EXPECT_EQ(encode_tensors(std::span(&t, 1)), expected);
}

TEST(Wire, RoundTripIsBitIdenticalForFloat32Values) {
  // Values exactly representable in float32.
  const Tensor t = ramp(3, 2, 2, 0.125);
  const auto bytes = encode_tensors(std::span(&t, 1));
  EXPECT_EQ(bytes.size(), kWireHeaderSize + 48);
  const DecodedTensors d = decode_tensors(bytes);
  EXPECT_EQ(d.header, (WireHeader{1, 3, 2, 2, 0}));
  ASSERT_EQ(d.items.size(), 1u);
  EXPECT_EQ(d.items[0], t);
  EXPECT_EQ(encode_tensors(d.items), bytes);
}

TEST(Wire, EncodingIsDeterministic) {
  const std::vector<Tensor> batch = {noise_image(4, 5, 1), noise_image(4, 5, 2)};
  EXPECT_EQ(encode_tensors(batch), encode_tensors(batch));
  const DecodedTensors d = decode_tensors(encode_tensors(batch));
  ASSERT_EQ(d.items.size(), 2u);
  for (std::size_t i = 0; i < batch[1].size(); ++i) {
    EXPECT_EQ(d.items[1].data()[i], static_cast<double>(static_cast<float>(batch[1].data()[i])));
  }
}

TEST(Wire, EncodeErrors) {
  EXPECT_THROW(encode_tensors({}), EncodeError);
  const std::vector<Tensor> mixed = {Tensor(3, 2, 2), Tensor(3, 2, 3)};
  EXPECT_THROW(encode_tensors(mixed), EncodeError);
  Tensor bad(1, 1, 1);
  bad.at(0, 0, 0) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(encode_tensors(std::span(&bad, 1)), EncodeError);
}

TEST(Wire, DecodeErrors) {
  const Tensor t = ramp(1, 2, 2, 0.5);
  const auto good = encode_tensors(std::span(&t, 1));

  auto bad_magic = good;
  bad_magic[0] = 'X';
  bad_magic[1] = 'X';
  bad_magic[2] = 'X';
  bad_magic[3] = 'X';
  EXPECT_THROW(decode_tensors(bad_magic), ProtocolError);

  auto bad_version = good;
  bad_version[4] = 2;
  EXPECT_THROW(decode_tensors(bad_version), ProtocolError);

  auto bad_dtype = good;
  bad_dtype[5] = 7;
  EXPECT_THROW(decode_tensors(bad_dtype), ProtocolError);

  EXPECT_THROW(decode_tensors(std::span(good).first(10)), TruncationError);
  EXPECT_THROW(decode_tensors(std::span(good).first(good.size() - 1)), TruncationError);

  auto trailing = good;
  trailing.push_back(0);
  EXPECT_THROW(decode_tensors(trailing), ProtocolError);

  auto nan = good;
  const float q = std::numeric_limits<float>::quiet_NaN();
  std::memcpy(nan.data() + kWireHeaderSize, &q, 4);
  EXPECT_THROW(decode_tensors(nan), DecodeError);
}

TEST(Wire, FrameStacking) {
  const Sample s{{noise_image(3, 4, 1), noise_image(3, 4, 2)}};
  const Tensor stacked = stack_frames(s);
  EXPECT_EQ(stacked.channels(), 6);
  EXPECT_EQ(stacked.at(4, 1, 2), s.frames[1].at(1, 1, 2));
  const Sample back = unstack_frames(stacked);
  ASSERT_EQ(back.frames.size(), 2u);
  EXPECT_EQ(back.frames[0], s.frames[0]);
  EXPECT_EQ(back.frames[1], s.frames[1]);
}

TEST(Info, FormatAndParse) {
  const ModelInfo info{1, 1, 64, 48};
  EXPECT_EQ(format_info(info), "d=1 frames=1 H=64 W=48");
  EXPECT_EQ(parse_info("d=2 frames=2 H=8 W=9\n"), (ModelInfo{2, 2, 8, 9}));
  EXPECT_THROW(parse_info("d=1 frames=1 H=8"), ProtocolError);
  EXPECT_THROW(parse_info("d=x frames=1 H=8 W=8"), ProtocolError);
  EXPECT_THROW(parse_info("d=3 frames=1 H=8 W=8"), ProtocolError);
}

class SlowOracle : public Oracle {
 public:
  int output_channels() const override { return 1; }
  int frames_per_sample() const override { return 1; }
  std::vector<Tensor> evaluate(std::span<const Sample> batch) override {
    std::this_thread::sleep_for(std::chrono::milliseconds(1500));
    return echo_.evaluate(batch);
  }

 private:
  GrayEchoOracle echo_;
};

class FailingOracle : public Oracle {
 public:
  int output_channels() const override { return 1; }
  int frames_per_sample() const override { return 1; }
  std::vector<Tensor> evaluate(std::span<const Sample>) override {
    throw Error("model crashed");
  }
};

TEST(Server, EchoRoundTripAndPayloadSizes) {
  GrayEchoOracle echo;
  OracleServer server(echo, ModelInfo{1, 1, 2, 2});
  server.start();
  RemoteOracle remote(server.endpoint());
  EXPECT_EQ(remote.info(), (ModelInfo{1, 1, 2, 2}));

  const Sample s{{Image(3, 2, 2, 0.25)}};
  const Tensor request = stack_frames(s);
  EXPECT_EQ(encode_tensors(std::span(&request, 1)).size(), 24u + 48u);
  const auto expected = echo.evaluate(std::span(&s, 1));
  EXPECT_EQ(encode_tensors(expected).size(), 24u + 16u);
  EXPECT_EQ(remote.evaluate(std::span(&s, 1)), expected);
  EXPECT_EQ(remote.last_flagged(), -1);
}

TEST(Server, RawHttpErrors) {
  GrayEchoOracle echo;
  ServerOptions opts;
  opts.max_batch = 2;
  OracleServer server(echo, ModelInfo{1, 1, 2, 2}, opts);
  server.start();
  httplib::Client client("127.0.0.1", server.port());

  auto garbage = client.Post("/v1/predict", "not a tensor", "application/octet-stream");
  ASSERT_TRUE(garbage);
  EXPECT_EQ(garbage->status, 400);

  const std::vector<Tensor> three(3, Tensor(3, 2, 2, 0.5));
  const auto big = encode_tensors(three);
  auto too_many = client.Post("/v1/predict", reinterpret_cast<const char*>(big.data()),
                              big.size(), "application/octet-stream");
  ASSERT_TRUE(too_many);
  EXPECT_EQ(too_many->status, 413);

  const Tensor wrong(3, 4, 4, 0.5);
  const auto shape = encode_tensors(std::span(&wrong, 1));
  auto mismatch = client.Post("/v1/predict", reinterpret_cast<const char*>(shape.data()),
                              shape.size(), "application/octet-stream");
  ASSERT_TRUE(mismatch);
  EXPECT_EQ(mismatch->status, 400);

  auto info = client.Get("/v1/info");
  ASSERT_TRUE(info);
  EXPECT_EQ(info->body, "d=1 frames=1 H=2 W=2");
}

TEST(Server, ClientSurfacesServiceErrors) {
  FailingOracle failing;
  OracleServer server(failing, ModelInfo{1, 1, 4, 4});
  server.start();
  RemoteOracle remote(server.endpoint());
  const Sample s{{noise_image(4, 4, 1)}};
  try {
    remote.evaluate(std::span(&s, 1));
    FAIL() << "expected ServiceError";
  } catch (const ServiceError& e) {
    EXPECT_EQ(e.status(), 500);
    EXPECT_NE(e.body().find("model crashed"), std::string::npos);
  }
  // Wrong image size is rejected by the server before evaluation.
  const Sample wrong{{noise_image(3, 3, 1)}};
  try {
    remote.evaluate(std::span(&wrong, 1));
    FAIL() << "expected ServiceError";
  } catch (const ServiceError& e) {
    EXPECT_EQ(e.status(), 400);
  }
}

TEST(Server, TimeoutIsRetryableTransportError) {
  SlowOracle slow;
  OracleServer server(slow, ModelInfo{1, 1, 4, 4});
  server.start();
  RemoteOptions opts;
  opts.timeout_seconds = 0.3;
  RemoteOracle remote(server.endpoint(), opts);
  const Sample s{{noise_image(4, 4, 1)}};
  try {
    remote.evaluate(std::span(&s, 1));
    FAIL() << "expected TransportError";
  } catch (const TransportError& e) {
    EXPECT_TRUE(e.retryable());
  }
}

TEST(Server, UnreachableEndpoint) {
  GrayEchoOracle echo;
  int port = 0;
  {
    OracleServer server(echo, ModelInfo{1, 1, 2, 2});
    port = server.start();
  }
  RemoteOptions opts;
  opts.timeout_seconds = 1.0;
  try {
    RemoteOracle remote("http://127.0.0.1:" + std::to_string(port), opts);
    FAIL() << "expected TransportError";
  } catch (const TransportError& e) {
    EXPECT_TRUE(e.retryable());
  }
  EXPECT_THROW(RemoteOracle("localhost:80"), ConfigError);
}

TEST(Server, FlagHeaderCountsRepeats) {
  GrayEchoOracle echo;
  ServerOptions opts;
  opts.detect = true;
  OracleServer server(echo, ModelInfo{1, 1, 16, 16}, opts);
  server.start();
  RemoteOracle remote(server.endpoint());
  const Sample s{{noise_image(16, 16, 1)}};
  remote.evaluate(std::span(&s, 1));
  EXPECT_EQ(remote.last_flagged(), 0);
  const std::vector<Sample> repeat(3, s);
  remote.evaluate(repeat);
  EXPECT_EQ(remote.last_flagged(), 3);
}

TEST(Server, TwoFrameModel) {
  GradFlowOracle flow;
  OracleServer server(flow, ModelInfo{2, 2, 8, 8});
  server.start();
  RemoteOracle remote(server.endpoint());
  EXPECT_EQ(remote.frames_per_sample(), 2);
  const Sample s{{noise_image(8, 8, 1), noise_image(8, 8, 2)}};
  const Tensor local = flow.evaluate(std::span(&s, 1))[0];
  const Tensor got = remote.evaluate(std::span(&s, 1))[0];
  ASSERT_EQ(got.channels(), 2);
  for (std::size_t i = 0; i < local.size(); ++i) {
    EXPECT_NEAR(got.data()[i], local.data()[i], 1e-5 * std::max(1.0, std::abs(local.data()[i])));
  }
  const Sample one{{noise_image(8, 8, 1)}};
  EXPECT_THROW(remote.evaluate(std::span(&one, 1)), InvalidArgument);
}

// Local oracle seen through the same float32 narrowing as the wire.
class Float32Oracle : public Oracle {
 public:
  explicit Float32Oracle(Oracle& inner) : inner_(&inner) {}
  int output_channels() const override { return inner_->output_channels(); }
  int frames_per_sample() const override { return inner_->frames_per_sample(); }
  std::vector<Tensor> evaluate(std::span<const Sample> batch) override {
    std::vector<Sample> narrowed(batch.begin(), batch.end());
    for (Sample& s : narrowed) {
      for (Image& f : s.frames) narrow(f);
    }
    std::vector<Tensor> out = inner_->evaluate(narrowed);
    for (Tensor& t : out) narrow(t);
    return out;
  }

 private:
  static void narrow(Tensor& t) {
    for (double& v : t.data()) v = static_cast<float>(v);
  }
  Oracle* inner_;
};

TEST(Server, RemoteAttackMatchesNarrowedLocalRun) {
  const SampleSet train = noise_set("train", SampleRole::kTraining, 1, 24, 24, 1);
  const SampleSet val = noise_set("val", SampleRole::kValidation, 2, 24, 24, 2);
  AttackConfig c;
  c.patch_side = 6;
  c.location = {12, 12};
  c.seed = 3;
  c.max_iters = 8;
  c.max_steps = 3;

  BlurDepthOracle local;
  Float32Oracle narrowed(local);
  EvalContext local_ctx(narrowed);
  const AttackResult a = run_attack(c, local_ctx, train, val);

  BlurDepthOracle served;
  OracleServer server(served, ModelInfo{1, 1, 24, 24});
  server.start();
  RemoteOracle remote(server.endpoint());
  EvalContext remote_ctx(remote);
  const AttackResult b = run_attack(c, remote_ctx, train, val);

  EXPECT_EQ(remote_ctx.counter().total(), local_ctx.counter().total());
  EXPECT_EQ(a.log, b.log);
  EXPECT_EQ(a.best_patch, b.best_patch);
}

}  // namespace
}  // namespace patchforge
