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

#include "dct_shield/eval.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "dct_shield/error.h"
#include "dct_shield/random.h"

namespace dct_shield {

namespace {

constexpr int kSsimWindow = 11;
constexpr double kSsimSigma = 1.5;

void RequireSameShape(const PixelImage& a, const PixelImage& b,
                      const char* what) {
  if (!a.SameShape(b)) {
    throw Error(ErrorKind::kDimension,
                std::string(what) + ": images differ in shape (" +
                    std::to_string(a.width) + "x" + std::to_string(a.height) +
                    "x" + std::to_string(a.channels) + " vs " +
                    std::to_string(b.width) + "x" + std::to_string(b.height) +
                    "x" + std::to_string(b.channels) + ")");
  }
}

const std::array<double, kSsimWindow>& GaussianTaps() {
  static const std::array<double, kSsimWindow> taps = [] {
    std::array<double, kSsimWindow> t{};
    double sum = 0.0;
    for (int i = 0; i < kSsimWindow; ++i) {
      const double d = i - kSsimWindow / 2;
      t[i] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
      sum += t[i];
    }
    for (double& v : t) v /= sum;
    return t;
  }();
  return taps;
}

// Separable Gaussian filter keeping only fully contained windows.
Plane FilterValid(const Plane& p) {
  const auto& g = GaussianTaps();
  const int ow = p.width - kSsimWindow + 1;
  const int oh = p.height - kSsimWindow + 1;
  Plane rows(ow, p.height);
  for (int y = 0; y < p.height; ++y) {
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int k = 0; k < kSsimWindow; ++k) s += g[k] * p.at(y, x + k);
      rows.at(y, x) = s;
    }
  }
  Plane out(ow, oh);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int k = 0; k < kSsimWindow; ++k) s += g[k] * rows.at(y + k, x);
      out.at(y, x) = s;
    }
  }
  return out;
}

Plane Product(const Plane& a, const Plane& b) {
  Plane out(a.width, a.height);
  for (size_t i = 0; i < a.data.size(); ++i) out.data[i] = a.data[i] * b.data[i];
  return out;
}

double SsimPlane(const Plane& x, const Plane& y) {
  const double c1 = (0.01 * 255.0) * (0.01 * 255.0);
  const double c2 = (0.03 * 255.0) * (0.03 * 255.0);
  const Plane mx = FilterValid(x);
  const Plane my = FilterValid(y);
  const Plane sxx = FilterValid(Product(x, x));
  const Plane syy = FilterValid(Product(y, y));
  const Plane sxy = FilterValid(Product(x, y));
  double total = 0.0;
  for (size_t i = 0; i < mx.data.size(); ++i) {
    const double ux = mx.data[i];
    const double uy = my.data[i];
    const double vx = sxx.data[i] - ux * ux;
    const double vy = syy.data[i] - uy * uy;
    const double cxy = sxy.data[i] - ux * uy;
    total += ((2.0 * ux * uy + c1) * (2.0 * cxy + c2)) /
             ((ux * ux + uy * uy + c1) * (vx + vy + c2));
  }
  return total / static_cast<double>(mx.data.size());
}

Plane Luma(const PixelImage& img) {
  if (img.channels == 1) return img.GetPlane(0);
  Plane out(img.width, img.height);
  const size_t n = img.plane_size();
  for (size_t i = 0; i < n; ++i) {
    out.data[i] = 0.299 * img.data[i] + 0.587 * img.data[n + i] +
                  0.114 * img.data[2 * n + i];
  }
  return out;
}

std::string Fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

double Psnr(const PixelImage& a, const PixelImage& b) {
  RequireSameShape(a, b, "psnr");
  if (a.data.empty()) throw Error(ErrorKind::kDimension, "psnr: empty image");
  double sse = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    sse += d * d;
  }
  if (sse == 0.0) return std::numeric_limits<double>::infinity();
  const double mse = sse / static_cast<double>(a.data.size());
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

double Ssim(const PixelImage& a, const PixelImage& b, SsimMode mode) {
  RequireSameShape(a, b, "ssim");
  if (a.width < kSsimWindow || a.height < kSsimWindow) {
    throw Error(ErrorKind::kDimension,
                "ssim: images must be at least 11x11, got " +
                    std::to_string(a.width) + "x" + std::to_string(a.height));
  }
  if (mode == SsimMode::kLuma) return SsimPlane(Luma(a), Luma(b));
  double sum = 0.0;
  for (int c = 0; c < a.channels; ++c) {
    sum += SsimPlane(a.GetPlane(c), b.GetPlane(c));
  }
  return sum / a.channels;
}

int LinfPixel(const PixelImage& a, const PixelImage& b) {
  RequireSameShape(a, b, "linf");
  double m = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    m = std::max(m, std::abs(a.data[i] - b.data[i]));
  }
  return static_cast<int>(RoundHalfEven(m));
}

double ChannelCoeffStats::changed_fraction() const {
  return total ? static_cast<double>(changed) / total : 0.0;
}
double ChannelCoeffStats::within_one_fraction() const {
  return total ? static_cast<double>(within_one) / total : 1.0;
}
double ChannelCoeffStats::mean_abs() const {
  return total ? sum_abs / total : 0.0;
}

CoeffDiffStats CoeffDiff(const CoefficientTensor& a,
                         const CoefficientTensor& b) {
  if (!a.SameShape(b)) {
    throw Error(ErrorKind::kShape, "coeff_diff: tensors differ in shape");
  }
  CoeffDiffStats stats;
  stats.channels.resize(a.channels.size());
  for (size_t c = 0; c < a.channels.size(); ++c) {
    ChannelCoeffStats& s = stats.channels[c];
    const auto& ca = a.channels[c].coeffs;
    const auto& cb = b.channels[c].coeffs;
    for (size_t i = 0; i < ca.size(); ++i) {
      const double d = cb[i] - ca[i];
      const double ad = std::abs(d);
      ++s.total;
      s.changed += d != 0.0;
      s.within_one += ad <= 1.0;
      s.sum_abs += ad;
      s.max_abs = std::max(s.max_abs, ad);
      ++s.histogram[static_cast<long>(RoundHalfAway(d))];
    }
    ChannelCoeffStats& o = stats.overall;
    o.total += s.total;
    o.changed += s.changed;
    o.within_one += s.within_one;
    o.sum_abs += s.sum_abs;
    o.max_abs = std::max(o.max_abs, s.max_abs);
    for (const auto& [k, n] : s.histogram) o.histogram[k] += n;
  }
  return stats;
}

MetricReport CompareImages(const PixelImage& reference, const PixelImage& test,
                           SsimMode mode) {
  MetricReport r;
  r.psnr_db = Psnr(reference, test);
  r.ssim = Ssim(reference, test, mode);
  r.linf_pixel = LinfPixel(reference, test);
  return r;
}

PixelImage Resize(const PixelImage& image, int width, int height,
                  ResizeFilter filter) {
  if (width < 1 || height < 1) {
    throw Error(ErrorKind::kDimension, "resize target must be non-empty");
  }
  PixelImage out(width, height, image.channels);
  const double sx = static_cast<double>(image.width) / width;
  const double sy = static_cast<double>(image.height) / height;
  for (int c = 0; c < image.channels; ++c) {
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        if (filter == ResizeFilter::kNearest) {
          const int ix = std::min(static_cast<int>((x + 0.5) * sx), image.width - 1);
          const int iy = std::min(static_cast<int>((y + 0.5) * sy), image.height - 1);
          out.at(c, y, x) = image.at(c, iy, ix);
          continue;
        }
        const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0,
                                     static_cast<double>(image.width - 1));
        const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0,
                                     static_cast<double>(image.height - 1));
        const int x0 = static_cast<int>(fx);
        const int y0 = static_cast<int>(fy);
        const int x1 = std::min(x0 + 1, image.width - 1);
        const int y1 = std::min(y0 + 1, image.height - 1);
        const double tx = fx - x0;
        const double ty = fy - y0;
        const double top =
            image.at(c, y0, x0) * (1 - tx) + image.at(c, y0, x1) * tx;
        const double bottom =
            image.at(c, y1, x0) * (1 - tx) + image.at(c, y1, x1) * tx;
        out.at(c, y, x) = top * (1 - ty) + bottom * ty;
      }
    }
  }
  return out;
}

PixelImage PurifyCropResize(const PixelImage& image, int border,
                            ResizeFilter filter) {
  if (border < 0 || 2 * border >= std::min(image.width, image.height)) {
    throw Error(ErrorKind::kConfig,
                "crop border " + std::to_string(border) +
                    " must satisfy 0 <= 2*border < min(width, height)");
  }
  const int cw = image.width - 2 * border;
  const int ch = image.height - 2 * border;
  PixelImage cropped(cw, ch, image.channels);
  for (int c = 0; c < image.channels; ++c) {
    for (int y = 0; y < ch; ++y) {
      for (int x = 0; x < cw; ++x) {
        cropped.at(c, y, x) = image.at(c, y + border, x + border);
      }
    }
  }
  return Resize(cropped, image.width, image.height, filter).Quantized8();
}

PixelImage PurifyGaussian(const PixelImage& image, double sigma,
                          uint64_t seed) {
  if (!std::isfinite(sigma) || sigma < 0.0) {
    throw Error(ErrorKind::kConfig, "noise sigma must be >= 0");
  }
  Rng rng(seed);
  PixelImage out = image;
  for (double& v : out.data) v += sigma * rng.Normal();
  return out.Quantized8();
}

std::string FormatMetric(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return Fmt(v);
}

std::string MetricsCsvHeader() {
  return "image,purifier,setting,psnr_db,ssim,linf_pixel,"
         "coeff_changed_fraction,coeff_within_one_fraction,coeff_mean_abs,"
         "coeff_max_abs\n";
}

std::string MetricsCsvRow(const MetricRow& row) {
  const MetricReport& m = row.metrics;
  std::string out = row.image + "," + row.purifier + "," + row.setting + "," +
                    FormatMetric(m.psnr_db) + "," + FormatMetric(m.ssim) + "," +
                    std::to_string(m.linf_pixel) + ",";
  if (m.coeff_change) {
    const ChannelCoeffStats& o = m.coeff_change->overall;
    out += Fmt(o.changed_fraction()) + "," + Fmt(o.within_one_fraction()) +
           "," + Fmt(o.mean_abs()) + "," + Fmt(o.max_abs);
  } else {
    out += ",,,";
  }
  return out + "\n";
}

}  // namespace dct_shield
