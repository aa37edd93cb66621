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

#include "dct_shield/image.h"

#include <algorithm>
#include <cmath>

namespace dct_shield {

Plane Plane::PaddedTo(int w, int h) const {
  Plane out(w, h);
  for (int y = 0; y < h; ++y) {
    const int sy = std::min(y, height - 1);
    for (int x = 0; x < w; ++x) {
      out.at(y, x) = at(sy, std::min(x, width - 1));
    }
  }
  return out;
}

Plane Plane::CroppedTo(int w, int h) const {
  Plane out(w, h);
  for (int y = 0; y < h; ++y) {
    std::copy_n(&data[static_cast<size_t>(y) * width], w,
                &out.data[static_cast<size_t>(y) * w]);
  }
  return out;
}

Plane PixelImage::GetPlane(int c) const {
  Plane p(width, height);
  std::copy_n(data.begin() + c * plane_size(), plane_size(), p.data.begin());
  return p;
}

void PixelImage::SetPlane(int c, const Plane& plane) {
  std::copy(plane.data.begin(), plane.data.end(),
            data.begin() + c * plane_size());
}

PixelImage PixelImage::Quantized8() const {
  PixelImage out = *this;
  for (double& v : out.data) v = RoundHalfEven(std::clamp(v, 0.0, 255.0));
  return out;
}

bool PixelImage::IsQuantized8() const {
  return std::all_of(data.begin(), data.end(), [](double v) {
    return v >= 0.0 && v <= 255.0 && v == std::floor(v);
  });
}

double RoundHalfEven(double v) { return std::nearbyint(v); }

double RoundHalfAway(double v) { return std::round(v); }

}  // namespace dct_shield
