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

#include "patchforge/tensor.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

#include "patchforge/errors.hpp"

namespace patchforge {

Tensor::Tensor(int channels, int height, int width, double fill)
    : channels_(channels), height_(height), width_(width) {
  if (channels < 0 || height < 0 || width < 0) {
    throw InvalidArgument("negative tensor dimension");
  }
  data_.assign(static_cast<std::size_t>(channels) * height * width, fill);
}

Tensor::Tensor(int channels, int height, int width, std::vector<double> data)
    : channels_(channels), height_(height), width_(width),
      data_(std::move(data)) {
  if (data_.size() != static_cast<std::size_t>(channels) * height * width) {
    throw InvalidArgument("tensor data length does not match dimensions");
  }
}

bool Tensor::in_unit_range() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return v >= 0.0 && v <= 1.0; });
}

void check_fits(const Rect& rect, int height, int width) {
  if (rect.height <= 0 || rect.width <= 0 || rect.top < 0 || rect.left < 0 ||
      rect.top + rect.height > height || rect.left + rect.width > width) {
    std::ostringstream os;
    os << "region rows [" << rect.top << ", " << rect.top + rect.height
       << ") cols [" << rect.left << ", " << rect.left + rect.width
       << ") does not fit in " << height << "x" << width;
    throw BoundsError(os.str());
  }
}

void attach_in_place(Tensor& base, const Tensor& insert, Location at) {
  if (insert.height() != insert.width()) {
    throw InvalidArgument("attached region must be square");
  }
  if (insert.channels() != base.channels()) {
    throw InvalidArgument("channel count mismatch in attach");
  }
  const Rect rect = footprint(at, insert.height());
  check_fits(rect, base.height(), base.width());
  for (int c = 0; c < base.channels(); ++c) {
    for (int r = 0; r < rect.height; ++r) {
      const double* src = &insert.at(c, r, 0);
      std::copy(src, src + rect.width, &base.at(c, rect.top + r, rect.left));
    }
  }
}

Tensor attach(const Tensor& base, const Tensor& insert, Location at) {
  Tensor out = base;
  attach_in_place(out, insert, at);
  return out;
}

Tensor crop(const Tensor& base, int side, Location at) {
  const Rect rect = footprint(at, side);
  check_fits(rect, base.height(), base.width());
  Tensor out(base.channels(), side, side);
  for (int c = 0; c < base.channels(); ++c) {
    for (int r = 0; r < side; ++r) {
      const double* src = &base.at(c, rect.top + r, rect.left);
      std::copy(src, src + side, &out.at(c, r, 0));
    }
  }
  return out;
}

ErrorMap crop(const ErrorMap& base, int side, Location at) {
  const Rect rect = footprint(at, side);
  check_fits(rect, base.height(), base.width());
  ErrorMap out(side, side);
  for (int r = 0; r < side; ++r) {
    for (int c = 0; c < side; ++c) {
      out.at(r, c) = base.at(rect.top + r, rect.left + c);
    }
  }
  return out;
}

Patch init_striped_patch(int side, Rng& rng) {
  if (side < 2) {
    throw InvalidArgument("striped patch side must be at least 2, got " +
                          std::to_string(side));
  }
  Patch patch(3, side, side);
  for (int col = 0; col < side; ++col) {
    for (int c = 0; c < 3; ++c) {
      const double v = rng.coin() ? 1.0 : 0.0;
      for (int r = 0; r < side; ++r) patch.at(c, r, col) = v;
    }
  }
  return patch;
}

void clamp_unit(Tensor& t) {
  for (double& v : t.data()) v = std::clamp(v, 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// PPM

namespace {

unsigned char quantize(double v) {
  const double q = std::round(std::clamp(v, 0.0, 1.0) * 255.0);
  return static_cast<unsigned char>(q);
}

class HeaderReader {
 public:
  explicit HeaderReader(std::span<const unsigned char> bytes) : bytes_(bytes) {}

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  int read_int(const char* what) {
    skip_space_and_comments();
    const std::size_t start = pos_;
    long value = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      value = value * 10 + (bytes_[pos_] - '0');
      if (value > 1 << 24) throw ParseError(std::string(what) + " too large", start);
      ++pos_;
    }
    if (pos_ == start) {
      throw ParseError(std::string("expected ") + what, start);
    }
    return static_cast<int>(value);
  }

  std::size_t pos() const { return pos_; }
  void advance() { ++pos_; }
  bool at_end() const { return pos_ >= bytes_.size(); }
  unsigned char peek() const { return bytes_[pos_]; }

 private:
  std::span<const unsigned char> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<unsigned char> encode_ppm(const Tensor& image) {
  if (image.channels() != 3) {
    throw InvalidArgument("PPM output needs 3 channels");
  }
  const std::string header = "P6\n" + std::to_string(image.width()) + " " +
                             std::to_string(image.height()) + "\n255\n";
  std::vector<unsigned char> out(header.begin(), header.end());
  out.reserve(header.size() + image.size());
  for (int r = 0; r < image.height(); ++r) {
    for (int c = 0; c < image.width(); ++c) {
      for (int ch = 0; ch < 3; ++ch) out.push_back(quantize(image.at(ch, r, c)));
    }
  }
  return out;
}

Tensor decode_ppm(std::span<const unsigned char> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') {
    throw ParseError("missing P6 magic", 0);
  }
  HeaderReader reader(bytes.subspan(2));
  const int width = reader.read_int("width");
  const int height = reader.read_int("height");
  const std::size_t maxval_offset = reader.pos() + 2;
  const int maxval = reader.read_int("maxval");
  if (maxval != 255) {
    throw UnsupportedFormat("PPM maxval " + std::to_string(maxval) +
                            " at byte offset " +
                            std::to_string(maxval_offset) +
                            " is not supported (only 255)");
  }
  if (reader.at_end() || !std::isspace(reader.peek())) {
    throw ParseError("expected single whitespace after maxval",
                     reader.pos() + 2);
  }
  reader.advance();
  const std::size_t payload_start = reader.pos() + 2;
  const std::size_t expected = static_cast<std::size_t>(width) * height * 3;
  if (bytes.size() - payload_start < expected) {
    throw ParseError("truncated payload: expected " + std::to_string(expected) +
                         " bytes, found " +
                         std::to_string(bytes.size() - payload_start),
                     bytes.size());
  }
  Tensor image(3, height, width);
  const unsigned char* p = bytes.data() + payload_start;
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      for (int ch = 0; ch < 3; ++ch) image.at(ch, r, c) = *p++ / 255.0;
    }
  }
  return image;
}

void write_ppm(const std::string& path, const Tensor& image) {
  const auto bytes = encode_ppm(image);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path);
}

Tensor read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  return decode_ppm(bytes);
}

}  // namespace patchforge
