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

#include "dct_shield/jpeg_core.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "dct_shield/error.h"

namespace dct_shield {

namespace {

constexpr std::array<int, kBlockSize> kBaseLuma = {
    16, 11, 10, 16, 24,  40,  51,  61,   //
    12, 12, 14, 19, 26,  58,  60,  55,   //
    14, 13, 16, 24, 40,  57,  69,  56,   //
    14, 17, 22, 29, 51,  87,  80,  62,   //
    18, 22, 37, 56, 68,  109, 103, 77,   //
    24, 35, 55, 64, 81,  104, 113, 92,   //
    49, 64, 78, 87, 103, 121, 120, 101,  //
    72, 92, 95, 98, 112, 100, 103, 99};

constexpr std::array<int, kBlockSize> kBaseChroma = {
    17, 18, 24, 47, 99, 99, 99, 99,  //
    18, 21, 26, 66, 99, 99, 99, 99,  //
    24, 26, 56, 99, 99, 99, 99, 99,  //
    47, 66, 99, 99, 99, 99, 99, 99,  //
    99, 99, 99, 99, 99, 99, 99, 99,  //
    99, 99, 99, 99, 99, 99, 99, 99,  //
    99, 99, 99, 99, 99, 99, 99, 99,  //
    99, 99, 99, 99, 99, 99, 99, 99};

// Row u holds C(u)/2 * cos((2x+1) u pi / 16); the matrix is orthonormal.
using DctMatrix = std::array<std::array<double, kBlockDim>, kBlockDim>;

const DctMatrix& DctBasis() {
  static const DctMatrix basis = [] {
    DctMatrix m{};
    for (int u = 0; u < kBlockDim; ++u) {
      const double cu = u == 0 ? 1.0 / std::numbers::sqrt2 : 1.0;
      for (int x = 0; x < kBlockDim; ++x) {
        m[u][x] = 0.5 * cu *
                  std::cos((2 * x + 1) * u * std::numbers::pi / 16.0);
      }
    }
    return m;
  }();
  return basis;
}

ColorMatrix Invert3x3(const ColorMatrix& m) {
  const double a = m[0][0], b = m[0][1], c = m[0][2];
  const double d = m[1][0], e = m[1][1], f = m[1][2];
  const double g = m[2][0], h = m[2][1], i = m[2][2];
  const double det = a * (e * i - f * h) - b * (d * i - f * g) +
                     c * (d * h - e * g);
  return {{{(e * i - f * h) / det, (c * h - b * i) / det,
            (b * f - c * e) / det},
           {(f * g - d * i) / det, (a * i - c * g) / det,
            (c * d - a * f) / det},
           {(d * h - e * g) / det, (b * g - a * h) / det,
            (a * e - b * d) / det}}};
}

int CeilDiv(int a, int b) { return (a + b - 1) / b; }

double Clamp255(double v) { return std::clamp(v, 0.0, 255.0); }

void RequireQuality(int quality) {
  if (quality < 1 || quality > 100) {
    throw Error(ErrorKind::kConfig, "quality must be in 1..100, got " +
                                        std::to_string(quality));
  }
}

// Colour conversion of padded 4:4:4 planes into an RGB image, optionally
// recording which outputs were clamped.
PixelImage ConvertToRgb(const Plane& y, const Plane& cb, const Plane& cr,
                        std::vector<uint8_t>* clamped) {
  const ColorMatrix& m = YcbcrToRgbMatrix();
  PixelImage rgb(y.width, y.height, 3);
  const size_t n = rgb.plane_size();
  if (clamped) clamped->assign(3 * n, 0);
  for (size_t i = 0; i < n; ++i) {
    const double vy = y.data[i];
    const double vcb = cb.data[i] - 128.0;
    const double vcr = cr.data[i] - 128.0;
    for (int c = 0; c < 3; ++c) {
      const double v = m[c][0] * vy + m[c][1] * vcb + m[c][2] * vcr;
      if (clamped && (v < 0.0 || v > 255.0)) (*clamped)[c * n + i] = 1;
      rgb.data[c * n + i] = Clamp255(v);
    }
  }
  return rgb;
}

PixelImage DecodeImpl(const CoefficientTensor& coeffs,
                      const QuantMatrices& tables, bool emit,
                      ClampRecord* record) {
  const BlockGeometry geo = GeometryOf(coeffs);
  const int nc = geo.num_channels;
  std::vector<Plane> planes(nc);
  if (record) {
    record->plane_clamped.assign(nc, {});
    record->rgb_clamped.clear();
  }
  for (int c = 0; c < nc; ++c) {
    const CoefficientChannel& ch = coeffs.channels[c];
    const auto& table = tables.ForChannel(c);
    Plane& plane = planes[c];
    plane = Plane(geo.plane_width(c), geo.plane_height(c));
    for (int by = 0; by < ch.blocks_high; ++by) {
      for (int bx = 0; bx < ch.blocks_wide; ++bx) {
        const size_t b = static_cast<size_t>(by) * ch.blocks_wide + bx;
        const auto deq = Dequantize(ch.block(b), table);
        const auto pix = InverseDctBlock(deq);
        for (int y = 0; y < kBlockDim; ++y) {
          for (int x = 0; x < kBlockDim; ++x) {
            plane.at(by * kBlockDim + y, bx * kBlockDim + x) =
                pix[y * kBlockDim + x] + 128.0;
          }
        }
      }
    }
    std::vector<uint8_t>* mask = nullptr;
    if (record) {
      record->plane_clamped[c].assign(plane.data.size(), 0);
      mask = &record->plane_clamped[c];
    }
    for (size_t i = 0; i < plane.data.size(); ++i) {
      double& v = plane.data[i];
      if (mask && (v < 0.0 || v > 255.0)) (*mask)[i] = 1;
      v = Clamp255(v);
      if (emit) v = RoundHalfEven(v);
    }
  }

  PixelImage padded;
  if (nc == 1) {
    padded = PixelImage(planes[0].width, planes[0].height, 1);
    padded.SetPlane(0, planes[0]);
  } else {
    PlaneSet set{planes[kY], planes[kCb], planes[kCr], geo.subsampling};
    if (geo.subsampling == Subsampling::k420) set = UpsampleChroma(set);
    padded = ConvertToRgb(set.y, set.cb, set.cr,
                          record ? &record->rgb_clamped : nullptr);
  }

  PixelImage out(coeffs.width, coeffs.height, nc);
  for (int c = 0; c < nc; ++c) {
    out.SetPlane(c, padded.GetPlane(c).CroppedTo(coeffs.width, coeffs.height));
  }
  return emit ? out.Quantized8() : out;
}

}  // namespace

size_t CoefficientTensor::ElementCount() const {
  size_t n = 0;
  for (const auto& ch : channels) n += ch.coeffs.size();
  return n;
}

bool CoefficientTensor::IsIntegral() const {
  for (const auto& ch : channels) {
    for (double v : ch.coeffs) {
      if (!std::isfinite(v) || v != std::floor(v)) return false;
    }
  }
  return true;
}

bool CoefficientTensor::SameShape(const CoefficientTensor& other) const {
  if (width != other.width || height != other.height ||
      subsampling != other.subsampling ||
      channels.size() != other.channels.size()) {
    return false;
  }
  for (size_t c = 0; c < channels.size(); ++c) {
    if (channels[c].blocks_wide != other.channels[c].blocks_wide ||
        channels[c].blocks_high != other.channels[c].blocks_high ||
        channels[c].coeffs.size() != other.channels[c].coeffs.size()) {
      return false;
    }
  }
  return true;
}

CoefficientTensor CoefficientTensor::ZerosLike() const {
  CoefficientTensor out = *this;
  for (auto& ch : out.channels) std::fill(ch.coeffs.begin(), ch.coeffs.end(), 0);
  return out;
}

int BlockGeometry::mcu_size() const {
  return (num_channels == 3 && subsampling == Subsampling::k420) ? 16 : 8;
}

BlockGeometry ComputeGeometry(int width, int height, int channels,
                              Subsampling subsampling) {
  if (channels != 1 && channels != 3) {
    throw Error(ErrorKind::kDimension,
                "expected 1 or 3 channels, got " + std::to_string(channels));
  }
  if (width < kBlockDim || height < kBlockDim) {
    throw Error(ErrorKind::kDimension,
                "image " + std::to_string(width) + "x" +
                    std::to_string(height) + " is smaller than one 8x8 block");
  }
  BlockGeometry geo;
  geo.num_channels = channels;
  geo.subsampling = channels == 1 ? Subsampling::k444 : subsampling;
  const int mcu = geo.mcu_size();
  const int mcus_wide = CeilDiv(width, mcu);
  const int mcus_high = CeilDiv(height, mcu);
  geo.padded_width = mcus_wide * mcu;
  geo.padded_height = mcus_high * mcu;
  for (int c = 0; c < channels; ++c) {
    const bool sub = geo.IsSubsampled(c);
    geo.blocks_wide[c] = sub ? mcus_wide : geo.padded_width / kBlockDim;
    geo.blocks_high[c] = sub ? mcus_high : geo.padded_height / kBlockDim;
  }
  return geo;
}

BlockGeometry GeometryOf(const CoefficientTensor& coeffs) {
  const int nc = static_cast<int>(coeffs.channels.size());
  const BlockGeometry geo =
      ComputeGeometry(coeffs.width, coeffs.height, nc, coeffs.subsampling);
  for (int c = 0; c < nc; ++c) {
    const CoefficientChannel& ch = coeffs.channels[c];
    if (ch.blocks_wide != geo.blocks_wide[c] ||
        ch.blocks_high != geo.blocks_high[c] ||
        ch.coeffs.size() != geo.num_blocks(c) * kBlockSize) {
      throw Error(ErrorKind::kDimension,
                  "coefficient grid of channel " + std::to_string(c) +
                      " does not match a " + std::to_string(coeffs.width) +
                      "x" + std::to_string(coeffs.height) + " image");
    }
  }
  return geo;
}

CoefficientTensor MakeCoefficientTensor(int width, int height,
                                        const BlockGeometry& geometry,
                                        int quality) {
  CoefficientTensor t;
  t.width = width;
  t.height = height;
  t.subsampling = geometry.subsampling;
  t.quality = quality;
  for (int c = 0; c < geometry.num_channels; ++c) {
    t.channels.emplace_back(geometry.blocks_wide[c], geometry.blocks_high[c]);
  }
  return t;
}

int QualityFromFraction(double q_alg) {
  if (!(q_alg > 0.0 && q_alg <= 1.0)) {
    throw Error(ErrorKind::kConfig, "q_alg must lie in (0, 1], got " +
                                        std::to_string(q_alg));
  }
  return std::max(1, static_cast<int>(std::lround(100.0 * q_alg)));
}

const ColorMatrix& RgbToYcbcrMatrix() {
  static const ColorMatrix m = {{{0.299, 0.587, 0.114},
                                 {-0.168736, -0.331264, 0.5},
                                 {0.5, -0.418688, -0.081312}}};
  return m;
}

const ColorMatrix& YcbcrToRgbMatrix() {
  static const ColorMatrix m = Invert3x3(RgbToYcbcrMatrix());
  return m;
}

PlaneSet RgbToYcbcr(const PixelImage& image) {
  if (image.channels != 3) {
    throw Error(ErrorKind::kDimension,
                "RGB to YCbCr needs 3 channels, got " +
                    std::to_string(image.channels));
  }
  const ColorMatrix& m = RgbToYcbcrMatrix();
  PlaneSet out;
  out.subsampling = Subsampling::k444;
  out.y = Plane(image.width, image.height);
  out.cb = Plane(image.width, image.height);
  out.cr = Plane(image.width, image.height);
  const size_t n = image.plane_size();
  for (size_t i = 0; i < n; ++i) {
    const double r = image.data[i];
    const double g = image.data[n + i];
    const double b = image.data[2 * n + i];
    out.y.data[i] = Clamp255(m[0][0] * r + m[0][1] * g + m[0][2] * b);
    out.cb.data[i] = Clamp255(m[1][0] * r + m[1][1] * g + m[1][2] * b + 128.0);
    out.cr.data[i] = Clamp255(m[2][0] * r + m[2][1] * g + m[2][2] * b + 128.0);
  }
  return out;
}

PixelImage YcbcrToRgb(const PlaneSet& planes) {
  const bool same = planes.cb.width == planes.y.width &&
                    planes.cb.height == planes.y.height &&
                    planes.cr.width == planes.y.width &&
                    planes.cr.height == planes.y.height;
  if (planes.subsampling != Subsampling::k444 || !same) {
    throw Error(ErrorKind::kDimension,
                "YCbCr to RGB needs 4:4:4 planes; upsample chroma first");
  }
  return ConvertToRgb(planes.y, planes.cb, planes.cr, nullptr);
}

PlaneSet SubsampleChroma(const PlaneSet& planes) {
  if (planes.subsampling == Subsampling::k420) return planes;
  auto reduce = [](const Plane& p) {
    const int w = CeilDiv(p.width, 2);
    const int h = CeilDiv(p.height, 2);
    const Plane even = p.PaddedTo(2 * w, 2 * h);
    Plane out(w, h);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        out.at(y, x) = 0.25 * (even.at(2 * y, 2 * x) +
                               even.at(2 * y, 2 * x + 1) +
                               even.at(2 * y + 1, 2 * x) +
                               even.at(2 * y + 1, 2 * x + 1));
      }
    }
    return out;
  };
  return PlaneSet{planes.y, reduce(planes.cb), reduce(planes.cr),
                  Subsampling::k420};
}

PlaneSet UpsampleChroma(const PlaneSet& planes) {
  if (planes.subsampling == Subsampling::k444) return planes;
  const int w = planes.y.width;
  const int h = planes.y.height;
  auto expand = [w, h](const Plane& p) {
    if (CeilDiv(w, 2) > p.width || CeilDiv(h, 2) > p.height) {
      throw Error(ErrorKind::kDimension,
                  "chroma plane too small for the luma plane");
    }
    Plane out(w, h);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) out.at(y, x) = p.at(y / 2, x / 2);
    }
    return out;
  };
  return PlaneSet{planes.y, expand(planes.cb), expand(planes.cr),
                  Subsampling::k444};
}

std::array<double, kBlockSize> ForwardDctBlock(
    std::span<const double, kBlockSize> block) {
  const DctMatrix& d = DctBasis();
  // tmp = P * D^T, out = D * tmp.
  std::array<double, kBlockSize> tmp{};
  for (int y = 0; y < kBlockDim; ++y) {
    for (int u = 0; u < kBlockDim; ++u) {
      double s = 0.0;
      for (int x = 0; x < kBlockDim; ++x) s += block[y * kBlockDim + x] * d[u][x];
      tmp[y * kBlockDim + u] = s;
    }
  }
  std::array<double, kBlockSize> out{};
  for (int v = 0; v < kBlockDim; ++v) {
    for (int u = 0; u < kBlockDim; ++u) {
      double s = 0.0;
      for (int y = 0; y < kBlockDim; ++y) s += d[v][y] * tmp[y * kBlockDim + u];
      out[v * kBlockDim + u] = s;
    }
  }
  return out;
}

std::array<double, kBlockSize> InverseDctBlock(
    std::span<const double, kBlockSize> coeffs) {
  const DctMatrix& d = DctBasis();
  // tmp = A * D, out = D^T * tmp.
  std::array<double, kBlockSize> tmp{};
  for (int v = 0; v < kBlockDim; ++v) {
    for (int x = 0; x < kBlockDim; ++x) {
      double s = 0.0;
      for (int u = 0; u < kBlockDim; ++u) s += coeffs[v * kBlockDim + u] * d[u][x];
      tmp[v * kBlockDim + x] = s;
    }
  }
  std::array<double, kBlockSize> out{};
  for (int y = 0; y < kBlockDim; ++y) {
    for (int x = 0; x < kBlockDim; ++x) {
      double s = 0.0;
      for (int v = 0; v < kBlockDim; ++v) s += d[v][y] * tmp[v * kBlockDim + x];
      out[y * kBlockDim + x] = s;
    }
  }
  return out;
}

const std::array<int, kBlockSize>& BaseLumaTable() { return kBaseLuma; }
const std::array<int, kBlockSize>& BaseChromaTable() { return kBaseChroma; }

QuantMatrices ScaleQuantTables(int quality) {
  RequireQuality(quality);
  const int scale = quality < 50 ? 5000 / quality : 200 - 2 * quality;
  auto scaled = [scale](const std::array<int, kBlockSize>& base) {
    std::array<int, kBlockSize> out{};
    for (int i = 0; i < kBlockSize; ++i) {
      out[i] = std::clamp((base[i] * scale + 50) / 100, 1, 255);
    }
    return out;
  };
  QuantMatrices q;
  q.luma = scaled(kBaseLuma);
  q.chroma = scaled(kBaseChroma);
  q.quality = quality;
  return q;
}

std::array<int, kBlockSize> Quantize(std::span<const double, kBlockSize> coeffs,
                                     std::span<const int, kBlockSize> table) {
  std::array<int, kBlockSize> out{};
  for (int i = 0; i < kBlockSize; ++i) {
    out[i] = static_cast<int>(RoundHalfAway(coeffs[i] / table[i]));
  }
  return out;
}

std::array<double, kBlockSize> Dequantize(
    std::span<const double, kBlockSize> levels,
    std::span<const int, kBlockSize> table) {
  std::array<double, kBlockSize> out{};
  for (int i = 0; i < kBlockSize; ++i) out[i] = levels[i] * table[i];
  return out;
}

CoefficientTensor JpegEncodeTransform(const PixelImage& image, int quality,
                                      Subsampling subsampling) {
  const QuantMatrices tables = ScaleQuantTables(quality);
  const BlockGeometry geo =
      ComputeGeometry(image.width, image.height, image.channels, subsampling);
  for (double v : image.data) {
    if (!std::isfinite(v)) {
      throw Error(ErrorKind::kPrecondition, "image has non-finite samples");
    }
  }

  std::vector<Plane> planes;
  if (image.channels == 1) {
    planes.push_back(
        image.GetPlane(0).PaddedTo(geo.padded_width, geo.padded_height));
  } else {
    PixelImage padded(geo.padded_width, geo.padded_height, 3);
    for (int c = 0; c < 3; ++c) {
      padded.SetPlane(
          c, image.GetPlane(c).PaddedTo(geo.padded_width, geo.padded_height));
    }
    PlaneSet set = RgbToYcbcr(padded);
    if (geo.subsampling == Subsampling::k420) set = SubsampleChroma(set);
    planes = {std::move(set.y), std::move(set.cb), std::move(set.cr)};
  }

  CoefficientTensor out =
      MakeCoefficientTensor(image.width, image.height, geo, quality);
  for (int c = 0; c < geo.num_channels; ++c) {
    CoefficientChannel& ch = out.channels[c];
    const auto& table = tables.ForChannel(c);
    std::array<double, kBlockSize> block{};
    for (int by = 0; by < ch.blocks_high; ++by) {
      for (int bx = 0; bx < ch.blocks_wide; ++bx) {
        for (int y = 0; y < kBlockDim; ++y) {
          for (int x = 0; x < kBlockDim; ++x) {
            block[y * kBlockDim + x] =
                planes[c].at(by * kBlockDim + y, bx * kBlockDim + x) - 128.0;
          }
        }
        const auto levels = Quantize(ForwardDctBlock(block), table);
        auto dst = ch.block(static_cast<size_t>(by) * ch.blocks_wide + bx);
        std::copy(levels.begin(), levels.end(), dst.begin());
      }
    }
  }
  return out;
}

PixelImage JpegDecodeTransform(const CoefficientTensor& coeffs,
                               const QuantMatrices& tables, DecodeMode mode) {
  return DecodeImpl(coeffs, tables, mode == DecodeMode::kEmit, nullptr);
}

PixelImage JpegDecodeTransform(const CoefficientTensor& coeffs,
                               DecodeMode mode) {
  return JpegDecodeTransform(coeffs, ScaleQuantTables(coeffs.quality), mode);
}

PixelImage DecodeAnalysisRecorded(const CoefficientTensor& coeffs,
                                  const QuantMatrices& tables,
                                  ClampRecord* record) {
  return DecodeImpl(coeffs, tables, false, record);
}

}  // namespace dct_shield
