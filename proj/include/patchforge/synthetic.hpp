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

#ifndef PATCHFORGE_SYNTHETIC_HPP_
#define PATCHFORGE_SYNTHETIC_HPP_

#include <array>
#include <cstdint>
#include <memory>
#include <string_view>
#include <vector>

#include "patchforge/oracle.hpp"

namespace patchforge {

// Oracle with an analytic vector-Jacobian product. These stand in for real
// depth / flow networks so white-box optima are available for comparison.
class DifferentiableOracle : public Oracle {
 public:
  virtual Tensor forward(const Sample& sample) const = 0;

  // Gradient of <upstream, forward(sample)> with respect to each frame.
  virtual std::vector<Tensor> backward(const Sample& sample,
                                       const Tensor& upstream) const = 0;

  // forward() over the batch; samples fan out over `threads` workers and
  // land in input order.
  std::vector<Tensor> evaluate(std::span<const Sample> batch) override;

  void set_threads(int threads) { threads_ = threads < 1 ? 1 : threads; }
  int threads() const { return threads_; }

 private:
  int threads_ = 1;
};

// depth = 10 * box5x5(gray(x)), replicate padding, gray = channel mean.
// Maximized by an all-white patch.
class BlurDepthOracle : public DifferentiableOracle {
 public:
  static constexpr int kKernel = 5;
  static constexpr double kScale = 10.0;

  int output_channels() const override { return 1; }
  int frames_per_sample() const override { return 1; }
  Tensor forward(const Sample& sample) const override;
  std::vector<Tensor> backward(const Sample& sample,
                               const Tensor& upstream) const override;
};

// Seeded 3 -> 8 channel 3x3 convolution, tanh, 8 -> 1 channel 1x1
// convolution, replicate padding. Smooth and nonconvex in the input.
class ConvDepthOracle : public DifferentiableOracle {
 public:
  static constexpr int kHidden = 8;

  explicit ConvDepthOracle(std::uint64_t seed);

  int output_channels() const override { return 1; }
  int frames_per_sample() const override { return 1; }
  Tensor forward(const Sample& sample) const override;
  std::vector<Tensor> backward(const Sample& sample,
                               const Tensor& upstream) const override;

 private:
  // Pre-activations of the hidden layer, kHidden x H x W.
  Tensor hidden(const Image& x) const;

  std::array<double, kHidden * 3 * 9> w1_{};
  std::array<double, kHidden> b1_{};
  std::array<double, kHidden> w2_{};
  double b2_ = 0.0;
};

// Two-frame flow stand-in: flow = 4 * (sobel_x, sobel_y) of gray(frame 1),
// replicate padding. The second frame is ignored.
class GradFlowOracle : public DifferentiableOracle {
 public:
  static constexpr double kScale = 4.0;

  int output_channels() const override { return 2; }
  int frames_per_sample() const override { return 2; }
  Tensor forward(const Sample& sample) const override;
  std::vector<Tensor> backward(const Sample& sample,
                               const Tensor& upstream) const override;
};

// depth(r, c) = sum over channels of w(ch, r, c) * x(ch, r, c).
class LinearDepthOracle : public DifferentiableOracle {
 public:
  explicit LinearDepthOracle(Tensor weights) : weights_(std::move(weights)) {}

  int output_channels() const override { return 1; }
  int frames_per_sample() const override { return 1; }
  Tensor forward(const Sample& sample) const override;
  std::vector<Tensor> backward(const Sample& sample,
                               const Tensor& upstream) const override;

 private:
  Tensor weights_;
};

// Output independent of the input.
class ConstantOracle : public DifferentiableOracle {
 public:
  ConstantOracle(int channels, int frames, double value)
      : channels_(channels), frames_(frames), value_(value) {}

  int output_channels() const override { return channels_; }
  int frames_per_sample() const override { return frames_; }
  Tensor forward(const Sample& sample) const override;
  std::vector<Tensor> backward(const Sample& sample,
                               const Tensor& upstream) const override;

 private:
  int channels_;
  int frames_;
  double value_;
};

// "blur-depth", "conv-depth" or "grad-flow". Throws ConfigError otherwise.
std::unique_ptr<DifferentiableOracle> make_synthetic_oracle(std::string_view kind,
                                                            std::uint64_t seed);

// Channel mean of an RGB image, 1 x H x W.
Tensor to_gray(const Image& image);

// Mean filter with a k x k window anchored at -floor(k / 2), replicate
// padding. Shape is preserved; operates per channel.
Tensor box_filter(const Tensor& input, int kernel);

}  // namespace patchforge

#endif  // PATCHFORGE_SYNTHETIC_HPP_
