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

#ifndef DCT_SHIELD_EVAL_H_
#define DCT_SHIELD_EVAL_H_

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dct_shield/image.h"
#include "dct_shield/jpeg_core.h"

namespace dct_shield {

// 10 log10(255^2 / MSE) over all samples; +inf when the images are equal.
double Psnr(const PixelImage& a, const PixelImage& b);

enum class SsimMode {
  kLuma,     // Y = 0.299 R + 0.587 G + 0.114 B (gray images as-is)
  kRgbMean,  // mean of the per-channel SSIMs
};

// Mean SSIM over all fully contained 11x11 Gaussian windows (sigma 1.5,
// K1 0.01, K2 0.03, L 255). Needs both dims >= 11.
double Ssim(const PixelImage& a, const PixelImage& b,
            SsimMode mode = SsimMode::kLuma);

// Largest per-sample absolute difference, rounded to the nearest integer.
int LinfPixel(const PixelImage& a, const PixelImage& b);

struct ChannelCoeffStats {
  size_t total = 0;
  size_t changed = 0;
  size_t within_one = 0;
  double sum_abs = 0.0;
  double max_abs = 0.0;
  std::map<long, size_t> histogram;  // rounded level delta -> count

  double changed_fraction() const;
  double within_one_fraction() const;
  double mean_abs() const;
};

struct CoeffDiffStats {
  std::vector<ChannelCoeffStats> channels;  // Y, Cb, Cr (or Y alone)
  ChannelCoeffStats overall;
};

// Level deltas b - a between two tensors of the same shape.
CoeffDiffStats CoeffDiff(const CoefficientTensor& a,
                         const CoefficientTensor& b);

struct MetricReport {
  double psnr_db = 0.0;
  double ssim = 0.0;
  int linf_pixel = 0;
  std::optional<CoeffDiffStats> coeff_change;
};

MetricReport CompareImages(const PixelImage& reference,
                           const PixelImage& test,
                           SsimMode mode = SsimMode::kLuma);

enum class ResizeFilter { kBilinear, kNearest };

// Half-pixel-centre resampling; bilinear clamps taps to the edge.
PixelImage Resize(const PixelImage& image, int width, int height,
                  ResizeFilter filter = ResizeFilter::kBilinear);

// Crop `border` pixels from every side and resize back, emitted as 8-bit.
// Requires 2 * border < min(width, height).
PixelImage PurifyCropResize(const PixelImage& image, int border = 64,
                            ResizeFilter filter = ResizeFilter::kBilinear);

// Adds seeded i.i.d. N(0, sigma^2) noise, then clamps and rounds.
PixelImage PurifyGaussian(const PixelImage& image, double sigma,
                          uint64_t seed);

// One row per (image, purifier, setting) with every metric.
struct MetricRow {
  std::string image;
  std::string purifier;  // "none", "jpeg", "crop_resize", "gaussian"
  std::string setting;   // quality, border or sigma
  MetricReport metrics;
};

std::string MetricsCsvHeader();
std::string MetricsCsvRow(const MetricRow& row);
// "inf" for an infinite PSNR, %.17g otherwise.
std::string FormatMetric(double v);

}  // namespace dct_shield

#endif  // DCT_SHIELD_EVAL_H_
