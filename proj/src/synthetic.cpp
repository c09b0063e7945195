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

#include "patchforge/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <thread>
#include <vector>

#include "patchforge/errors.hpp"

namespace patchforge {

namespace {

int clamp_index(int i, int n) { return i < 0 ? 0 : (i >= n ? n - 1 : i); }

void check_frames(const Sample& sample, int frames) {
  if (static_cast<int>(sample.frames.size()) != frames) {
    throw InvalidArgument("oracle expects " + std::to_string(frames) +
                          " frame(s) per sample, got " +
                          std::to_string(sample.frames.size()));
  }
  for (const auto& f : sample.frames) {
    if (f.channels() != 3) throw InvalidArgument("frames must be RGB");
  }
}

// Adjoint of to_gray: spreads a 1 x H x W gradient evenly over 3 channels.
Tensor gray_adjoint(const Tensor& g) {
  Tensor out(3, g.height(), g.width());
  for (int c = 0; c < 3; ++c) {
    for (int r = 0; r < g.height(); ++r) {
      for (int col = 0; col < g.width(); ++col) {
        out.at(c, r, col) = g.at(0, r, col) / 3.0;
      }
    }
  }
  return out;
}

// Adjoint of box_filter: scatters each output's 1/k^2 share back to the
// (clamped) inputs of its window.
Tensor box_filter_adjoint(const Tensor& upstream, int kernel) {
  const int h = upstream.height();
  const int w = upstream.width();
  const int off = kernel / 2;
  const double inv = 1.0 / kernel;
  Tensor out(upstream.channels(), h, w);
  Tensor tmp(1, h, w);
  for (int ch = 0; ch < upstream.channels(); ++ch) {
    std::fill(tmp.data().begin(), tmp.data().end(), 0.0);
    // Vertical pass was applied last in the forward direction, so undo it
    // first.
    for (int r = 0; r < h; ++r) {
      for (int k = 0; k < kernel; ++k) {
        const int src = clamp_index(r - off + k, h);
        for (int c = 0; c < w; ++c) {
          tmp.at(0, src, c) += upstream.at(ch, r, c) * inv;
        }
      }
    }
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        const double v = tmp.at(0, r, c) * inv;
        for (int k = 0; k < kernel; ++k) {
          out.at(ch, r, clamp_index(c - off + k, w)) += v;
        }
      }
    }
  }
  return out;
}

constexpr int kSobelX[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
constexpr int kSobelY[3][3] = {{-1, -2, -1}, {0, 0, 0}, {1, 2, 1}};

}  // namespace

Tensor to_gray(const Image& image) {
  Tensor out(1, image.height(), image.width());
  for (int r = 0; r < image.height(); ++r) {
    for (int c = 0; c < image.width(); ++c) {
      out.at(0, r, c) =
          (image.at(0, r, c) + image.at(1, r, c) + image.at(2, r, c)) / 3.0;
    }
  }
  return out;
}

Tensor box_filter(const Tensor& input, int kernel) {
  if (kernel < 1) throw InvalidArgument("box filter kernel must be >= 1");
  const int h = input.height();
  const int w = input.width();
  const int off = kernel / 2;
  Tensor out(input.channels(), h, w);
  Tensor tmp(1, h, w);
  for (int ch = 0; ch < input.channels(); ++ch) {
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        double s = 0.0;
        for (int k = 0; k < kernel; ++k) {
          s += input.at(ch, r, clamp_index(c - off + k, w));
        }
        tmp.at(0, r, c) = s / kernel;
      }
    }
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        double s = 0.0;
        for (int k = 0; k < kernel; ++k) {
          s += tmp.at(0, clamp_index(r - off + k, h), c);
        }
        out.at(ch, r, c) = s / kernel;
      }
    }
  }
  return out;
}

std::vector<Tensor> DifferentiableOracle::evaluate(
    std::span<const Sample> batch) {
  std::vector<Tensor> out(batch.size());
  const std::size_t workers =
      std::min<std::size_t>(static_cast<std::size_t>(threads_), batch.size());
  if (workers <= 1) {
    for (std::size_t i = 0; i < batch.size(); ++i) out[i] = forward(batch[i]);
    return out;
  }
  std::vector<std::exception_ptr> errors(workers);
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < workers; ++t) {
      pool.emplace_back([&, t] {
        try {
          for (std::size_t i = t; i < batch.size(); i += workers) {
            out[i] = forward(batch[i]);
          }
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

// ---------------------------------------------------------------------------

Tensor BlurDepthOracle::forward(const Sample& sample) const {
  check_frames(sample, 1);
  Tensor depth = box_filter(to_gray(sample.frames[0]), kKernel);
  for (double& v : depth.data()) v *= kScale;
  return depth;
}

std::vector<Tensor> BlurDepthOracle::backward(const Sample& sample,
                                              const Tensor& upstream) const {
  check_frames(sample, 1);
  Tensor g = box_filter_adjoint(upstream, kKernel);
  for (double& v : g.data()) v *= kScale;
  return {gray_adjoint(g)};
}

// ---------------------------------------------------------------------------

ConvDepthOracle::ConvDepthOracle(std::uint64_t seed) {
  Rng rng(seed);
  // Keeps hidden pre-activations around unit scale for inputs in [0, 1].
  for (double& w : w1_) w = rng.uniform(-0.6, 0.6);
  for (double& b : b1_) b = rng.uniform(-0.5, 0.5);
  for (double& w : w2_) w = rng.uniform(-1.0, 1.0) * 2.5;
  b2_ = rng.uniform(-0.5, 0.5);
}

Tensor ConvDepthOracle::hidden(const Image& x) const {
  const int h = x.height();
  const int w = x.width();
  // Replicate-padded copy so the inner loop needs no index clamping.
  const int pw = w + 2;
  const std::size_t plane = static_cast<std::size_t>(h + 2) * pw;
  std::vector<double> padded(3 * plane);
  for (int ch = 0; ch < 3; ++ch) {
    for (int r = -1; r <= h; ++r) {
      for (int c = -1; c <= w; ++c) {
        padded[ch * plane + static_cast<std::size_t>(r + 1) * pw + (c + 1)] =
            x.at(ch, clamp_index(r, h), clamp_index(c, w));
      }
    }
  }
  // Terms are accumulated in the same (channel, row, column) order for every
  // output, with the column loop innermost so it vectorizes.
  Tensor z(kHidden, h, w);
  for (int k = 0; k < kHidden; ++k) {
    double* zk = z.data().data() + static_cast<std::size_t>(k) * h * w;
    std::fill(zk, zk + static_cast<std::size_t>(h) * w, b1_[k]);
    for (int ch = 0; ch < 3; ++ch) {
      const double* wk = &w1_[(k * 3 + ch) * 9];
      for (int dr = 0; dr < 3; ++dr) {
        for (int dc = 0; dc < 3; ++dc) {
          const double wt = wk[dr * 3 + dc];
          for (int r = 0; r < h; ++r) {
            const double* src = &padded[ch * plane + static_cast<std::size_t>(r + dr) * pw + dc];
            double* dst = zk + static_cast<std::size_t>(r) * w;
            for (int c = 0; c < w; ++c) dst[c] += wt * src[c];
          }
        }
      }
    }
  }
  return z;
}

Tensor ConvDepthOracle::forward(const Sample& sample) const {
  check_frames(sample, 1);
  const Image& x = sample.frames[0];
  const Tensor z = hidden(x);
  Tensor depth(1, x.height(), x.width(), b2_);
  for (int k = 0; k < kHidden; ++k) {
    for (int r = 0; r < x.height(); ++r) {
      for (int c = 0; c < x.width(); ++c) {
        depth.at(0, r, c) += w2_[k] * std::tanh(z.at(k, r, c));
      }
    }
  }
  return depth;
}

std::vector<Tensor> ConvDepthOracle::backward(const Sample& sample,
                                              const Tensor& upstream) const {
  check_frames(sample, 1);
  const Image& x = sample.frames[0];
  const int h = x.height();
  const int w = x.width();
  const Tensor z = hidden(x);
  Tensor grad(3, h, w);
  for (int k = 0; k < kHidden; ++k) {
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        const double u = upstream.at(0, r, c);
        if (u == 0.0) continue;
        const double t = std::tanh(z.at(k, r, c));
        const double dz = u * w2_[k] * (1.0 - t * t);
        for (int ch = 0; ch < 3; ++ch) {
          const double* wk = &w1_[(k * 3 + ch) * 9];
          for (int dr = 0; dr < 3; ++dr) {
            const int rr = clamp_index(r + dr - 1, h);
            for (int dc = 0; dc < 3; ++dc) {
              grad.at(ch, rr, clamp_index(c + dc - 1, w)) += wk[dr * 3 + dc] * dz;
            }
          }
        }
      }
    }
  }
  return {grad};
}

// ---------------------------------------------------------------------------

Tensor GradFlowOracle::forward(const Sample& sample) const {
  check_frames(sample, 2);
  const Tensor g = to_gray(sample.frames[0]);
  const int h = g.height();
  const int w = g.width();
  Tensor flow(2, h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      double sx = 0.0, sy = 0.0;
      for (int dr = 0; dr < 3; ++dr) {
        for (int dc = 0; dc < 3; ++dc) {
          const double v =
              g.at(0, clamp_index(r + dr - 1, h), clamp_index(c + dc - 1, w));
          sx += kSobelX[dr][dc] * v;
          sy += kSobelY[dr][dc] * v;
        }
      }
      flow.at(0, r, c) = kScale * sx;
      flow.at(1, r, c) = kScale * sy;
    }
  }
  return flow;
}

std::vector<Tensor> GradFlowOracle::backward(const Sample& sample,
                                             const Tensor& upstream) const {
  check_frames(sample, 2);
  const int h = sample.frames[0].height();
  const int w = sample.frames[0].width();
  Tensor g(1, h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const double ux = kScale * upstream.at(0, r, c);
      const double uy = kScale * upstream.at(1, r, c);
      for (int dr = 0; dr < 3; ++dr) {
        for (int dc = 0; dc < 3; ++dc) {
          g.at(0, clamp_index(r + dr - 1, h), clamp_index(c + dc - 1, w)) +=
              kSobelX[dr][dc] * ux + kSobelY[dr][dc] * uy;
        }
      }
    }
  }
  return {gray_adjoint(g), Tensor(3, h, w)};
}

// ---------------------------------------------------------------------------

Tensor LinearDepthOracle::forward(const Sample& sample) const {
  check_frames(sample, 1);
  const Image& x = sample.frames[0];
  if (x.height() != weights_.height() || x.width() != weights_.width()) {
    throw InvalidArgument("linear oracle weights do not match image shape");
  }
  Tensor depth(1, x.height(), x.width());
  for (int ch = 0; ch < 3; ++ch) {
    for (int r = 0; r < x.height(); ++r) {
      for (int c = 0; c < x.width(); ++c) {
        depth.at(0, r, c) += weights_.at(ch, r, c) * x.at(ch, r, c);
      }
    }
  }
  return depth;
}

std::vector<Tensor> LinearDepthOracle::backward(const Sample& sample,
                                                const Tensor& upstream) const {
  check_frames(sample, 1);
  Tensor grad(3, weights_.height(), weights_.width());
  for (int ch = 0; ch < 3; ++ch) {
    for (int r = 0; r < grad.height(); ++r) {
      for (int c = 0; c < grad.width(); ++c) {
        grad.at(ch, r, c) = weights_.at(ch, r, c) * upstream.at(0, r, c);
      }
    }
  }
  return {grad};
}

// ---------------------------------------------------------------------------

Tensor ConstantOracle::forward(const Sample& sample) const {
  check_frames(sample, frames_);
  const Image& x = sample.frames[0];
  return Tensor(channels_, x.height(), x.width(), value_);
}

std::vector<Tensor> ConstantOracle::backward(const Sample& sample,
                                             const Tensor&) const {
  check_frames(sample, frames_);
  std::vector<Tensor> out;
  for (const auto& f : sample.frames) {
    out.emplace_back(3, f.height(), f.width());
  }
  return out;
}

std::unique_ptr<DifferentiableOracle> make_synthetic_oracle(std::string_view kind,
                                                            std::uint64_t seed) {
  if (kind == "blur-depth") return std::make_unique<BlurDepthOracle>();
  if (kind == "conv-depth") return std::make_unique<ConvDepthOracle>(seed);
  if (kind == "grad-flow") return std::make_unique<GradFlowOracle>();
  throw ConfigError("unknown synthetic oracle kind '" + std::string(kind) + "'");
}

}  // namespace patchforge
