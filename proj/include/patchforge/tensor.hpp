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

#ifndef PATCHFORGE_TENSOR_HPP_
#define PATCHFORGE_TENSOR_HPP_

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "patchforge/rng.hpp"

namespace patchforge {

// Pixel coordinates of the center of an attached region.
struct Location {
  int row = 0;
  int col = 0;
  friend bool operator==(const Location&, const Location&) = default;
};

// Axis-aligned window [top, top + height) x [left, left + width).
struct Rect {
  int top = 0;
  int left = 0;
  int height = 0;
  int width = 0;
  friend bool operator==(const Rect&, const Rect&) = default;
};

// Window of a side-`side` square centered at `center`. Odd and even sides
// both anchor at center - floor(side / 2).
inline Rect footprint(Location center, int side) {
  return Rect{center.row - side / 2, center.col - side / 2, side, side};
}

// Sub-square of a patch, addressed in patch coordinates.
struct SquareRegion {
  Location center;
  int side = 0;
  Rect rect() const { return footprint(center, side); }
  friend bool operator==(const SquareRegion&, const SquareRegion&) = default;
};

// Dense (channel, row, col) tensor. Images and patches carry 3 channels with
// values in [0, 1]; oracle outputs carry d channels and are unconstrained.
class Tensor {
 public:
  Tensor() = default;
  Tensor(int channels, int height, int width, double fill = 0.0);
  Tensor(int channels, int height, int width, std::vector<double> data);

  int channels() const { return channels_; }
  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& at(int c, int r, int col) {
    return data_[index(c, r, col)];
  }
  const double& at(int c, int r, int col) const {
    return data_[index(c, r, col)];
  }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double>& storage() { return data_; }

  // All values in [0, 1].
  bool in_unit_range() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::size_t index(int c, int r, int col) const {
    return (static_cast<std::size_t>(c) * height_ + r) * width_ + col;
  }

  int channels_ = 0;
  int height_ = 0;
  int width_ = 0;
  std::vector<double> data_;
};

using Image = Tensor;
using Patch = Tensor;

// Pixel-wise error over an H x W grid.
class ErrorMap {
 public:
  ErrorMap() = default;
  ErrorMap(int height, int width, double fill = 0.0)
      : height_(height),
        width_(width),
        data_(static_cast<std::size_t>(height) * width, fill) {}

  int height() const { return height_; }
  int width() const { return width_; }
  double& at(int r, int c) {
    return data_[static_cast<std::size_t>(r) * width_ + c];
  }
  double at(int r, int c) const {
    return data_[static_cast<std::size_t>(r) * width_ + c];
  }
  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  friend bool operator==(const ErrorMap&, const ErrorMap&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<double> data_;
};

// Throws BoundsError naming the offending window when `rect` does not fit in
// a height x width grid.
void check_fits(const Rect& rect, int height, int width);

// Returns a copy of `base` whose footprint at `at` holds `insert`.
Tensor attach(const Tensor& base, const Tensor& insert, Location at);
// Same thing, writing into `base`.
void attach_in_place(Tensor& base, const Tensor& insert, Location at);

// The side x side square of `base` centered at `at`.
Tensor crop(const Tensor& base, int side, Location at);
ErrorMap crop(const ErrorMap& base, int side, Location at);

// Patch of side h made of 1-pixel vertical stripes, each a random vertex of
// the RGB cube.
Patch init_striped_patch(int side, Rng& rng);

// Clamp every value into [0, 1].
void clamp_unit(Tensor& t);

// Binary PPM (P6, maxval 255) I/O. Writing quantizes v to round(255 v).
std::vector<unsigned char> encode_ppm(const Tensor& image);
Tensor decode_ppm(std::span<const unsigned char> bytes);
void write_ppm(const std::string& path, const Tensor& image);
Tensor read_ppm(const std::string& path);

}  // namespace patchforge

#endif  // PATCHFORGE_TENSOR_HPP_
