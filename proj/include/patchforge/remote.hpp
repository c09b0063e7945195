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

#ifndef PATCHFORGE_REMOTE_HPP_
#define PATCHFORGE_REMOTE_HPP_

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "patchforge/defense.hpp"
#include "patchforge/oracle.hpp"

namespace patchforge {

// Binary tensor framing shared by requests and responses:
//
//   offset  size  field
//   0       4     magic "BPRT"
//   4       1     version (1)
//   5       1     dtype (1 = float32 little endian)
//   6       2     flags (0), little endian
//   8       4     n
//   12      4     c
//   16      4     H
//   20      4     W
//   24      4nchw payload, row-major (n, c, H, W)
struct WireHeader {
  std::uint32_t n = 0;
  std::uint32_t c = 0;
  std::uint32_t h = 0;
  std::uint32_t w = 0;
  std::uint16_t flags = 0;
  friend bool operator==(const WireHeader&, const WireHeader&) = default;
};

inline constexpr std::size_t kWireHeaderSize = 24;
inline constexpr std::uint8_t kWireVersion = 1;
inline constexpr std::uint8_t kWireFloat32 = 1;

// Each tensor is one c x H x W item. Values are narrowed to float32; throws
// EncodeError on an empty batch, mismatched shapes or non-finite values.
std::vector<std::uint8_t> encode_tensors(std::span<const Tensor> items);

struct DecodedTensors {
  WireHeader header;
  std::vector<Tensor> items;
};

// Throws ProtocolError on a bad magic/version/dtype, TruncationError when the
// payload is shorter than the header promises and DecodeError on NaN/Inf.
DecodedTensors decode_tensors(std::span<const std::uint8_t> bytes);

// Frames of a sample stacked along the channel axis (c = 3 * frames).
Tensor stack_frames(const Sample& sample);
Sample unstack_frames(const Tensor& stacked);

// `d=<d> frames=<f> H=<h> W=<w>`
struct ModelInfo {
  int output_channels = 1;
  int frames = 1;
  int height = 0;
  int width = 0;
  friend bool operator==(const ModelInfo&, const ModelInfo&) = default;
};
std::string format_info(const ModelInfo& info);
ModelInfo parse_info(const std::string& text);

struct RemoteOptions {
  double timeout_seconds = 30.0;
  // Fixed pause before every request, for rate-limited services.
  double delay_seconds = 0.0;
};

// Oracle served over HTTP. One evaluate() call is one POST to
// <endpoint>/v1/predict; the model shape comes from GET <endpoint>/v1/info.
class RemoteOracle : public Oracle {
 public:
  explicit RemoteOracle(const std::string& endpoint, RemoteOptions options = {});
  ~RemoteOracle() override;

  int output_channels() const override { return info_.output_channels; }
  int frames_per_sample() const override { return info_.frames; }
  std::vector<Tensor> evaluate(std::span<const Sample> batch) override;

  const ModelInfo& info() const { return info_; }
  // Value of the server's detection flag header on the last response, or -1.
  int last_flagged() const { return last_flagged_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  ModelInfo info_;
  RemoteOptions options_;
  int last_flagged_ = -1;
};

// Gray passthrough (channel mean of the first frame); the default model of
// the local echo server.
class GrayEchoOracle : public Oracle {
 public:
  int output_channels() const override { return 1; }
  int frames_per_sample() const override { return 1; }
  std::vector<Tensor> evaluate(std::span<const Sample> batch) override;
};

struct ServerOptions {
  std::string host = "127.0.0.1";
  int port = 0;  // 0 picks a free port
  int max_batch = 1024;
  bool detect = false;
  DetectorConfig detector;
};

inline constexpr const char* kFlagHeader = "X-Query-Flagged";

// Serves an oracle over the wire protocol from a background thread.
class OracleServer {
 public:
  OracleServer(Oracle& oracle, ModelInfo info, ServerOptions options = {});
  ~OracleServer();

  // Binds and starts serving; returns the bound port.
  int start();
  void stop();
  // Blocks serving on the calling thread.
  void run();
  int port() const { return port_; }
  std::string endpoint() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  int port_ = 0;
};

}  // namespace patchforge

#endif  // PATCHFORGE_REMOTE_HPP_
