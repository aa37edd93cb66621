// Copyright 2026 The dct-shield Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef DCT_SHIELD_IMAGE_H_
#define DCT_SHIELD_IMAGE_H_

#include <cstddef>
#include <vector>

namespace dct_shield {

// A single real-valued sample plane, row-major.
struct Plane {
  int width = 0;
  int height = 0;
  std::vector<double> data;

  Plane() = default;
  Plane(int w, int h, double fill = 0.0)
      : width(w), height(h), data(static_cast<size_t>(w) * h, fill) {}

  double& at(int y, int x) { return data[static_cast<size_t>(y) * width + x]; }
  double at(int y, int x) const {
    return data[static_cast<size_t>(y) * width + x];
  }

  // Edge-replicating padding to (w, h); w >= width and h >= height.
  Plane PaddedTo(int w, int h) const;
  // Top-left crop to (w, h).
  Plane CroppedTo(int w, int h) const;
};

// Planar image with 1 (gray) or 3 (RGB) channels. Samples are nominally in
// [0, 255]; the same type carries image-shaped gradients, which are not.
struct PixelImage {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<double> data;

  PixelImage() = default;
  PixelImage(int w, int h, int c, double fill = 0.0)
      : width(w),
        height(h),
        channels(c),
        data(static_cast<size_t>(w) * h * c, fill) {}

  size_t plane_size() const { return static_cast<size_t>(width) * height; }

  double& at(int c, int y, int x) {
    return data[c * plane_size() + static_cast<size_t>(y) * width + x];
  }
  double at(int c, int y, int x) const {
    return data[c * plane_size() + static_cast<size_t>(y) * width + x];
  }

  Plane GetPlane(int c) const;
  void SetPlane(int c, const Plane& plane);

  bool SameShape(const PixelImage& other) const {
    return width == other.width && height == other.height &&
           channels == other.channels;
  }

  // 8-bit emission: clamp to [0, 255] and round half to even.
  PixelImage Quantized8() const;
  bool IsQuantized8() const;
};

// Round half to even, matching the current FE_TONEAREST mode.
double RoundHalfEven(double v);
// Round half away from zero.
double RoundHalfAway(double v);

}  // namespace dct_shield

#endif  // DCT_SHIELD_IMAGE_H_
