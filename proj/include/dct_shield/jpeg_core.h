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

#ifndef DCT_SHIELD_JPEG_CORE_H_
#define DCT_SHIELD_JPEG_CORE_H_

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "dct_shield/image.h"

namespace dct_shield {

constexpr int kBlockDim = 8;
constexpr int kBlockSize = 64;

enum class Subsampling { k444, k420 };

// Channel indices into CoefficientTensor::channels and PlaneSet.
enum Channel : int { kY = 0, kCb = 1, kCr = 2 };

struct PlaneSet {
  Plane y;
  Plane cb;
  Plane cr;
  Subsampling subsampling = Subsampling::k444;
};

// Quality-scaled quantization tables, natural (row-major) order.
struct QuantMatrices {
  std::array<int, kBlockSize> luma{};
  std::array<int, kBlockSize> chroma{};
  // 1..100 for tables produced by ScaleQuantTables; 0 when the tables came
  // from a stream and match no IJG quality.
  int quality = 0;

  const std::array<int, kBlockSize>& ForChannel(int c) const {
    return c == kY ? luma : chroma;
  }
  bool operator==(const QuantMatrices&) const = default;
};

// The quantized DCT coefficients of one colour channel. Blocks are stored
// raster order over the block grid, each block in natural order
// (row = vertical frequency, column = horizontal frequency).
struct CoefficientChannel {
  int blocks_wide = 0;
  int blocks_high = 0;
  std::vector<double> coeffs;

  CoefficientChannel() = default;
  CoefficientChannel(int bw, int bh)
      : blocks_wide(bw),
        blocks_high(bh),
        coeffs(static_cast<size_t>(bw) * bh * kBlockSize, 0.0) {}

  size_t num_blocks() const {
    return static_cast<size_t>(blocks_wide) * blocks_high;
  }
  std::span<double, kBlockSize> block(size_t i) {
    return std::span<double, kBlockSize>(coeffs.data() + i * kBlockSize,
                                         kBlockSize);
  }
  std::span<const double, kBlockSize> block(size_t i) const {
    return std::span<const double, kBlockSize>(coeffs.data() + i * kBlockSize,
                                               kBlockSize);
  }
  bool operator==(const CoefficientChannel&) const = default;
};

// alpha: per-channel grids of 8x8 coefficient blocks plus the geometry needed
// to reassemble the image. Grids cover the image padded to whole MCUs.
struct CoefficientTensor {
  int width = 0;
  int height = 0;
  Subsampling subsampling = Subsampling::k420;
  int quality = 0;
  std::vector<CoefficientChannel> channels;  // 1 (gray) or 3 (Y, Cb, Cr)

  size_t ElementCount() const;
  bool IsIntegral() const;
  bool SameShape(const CoefficientTensor& other) const;
  // A tensor of zeros with this tensor's geometry.
  CoefficientTensor ZerosLike() const;
  bool operator==(const CoefficientTensor&) const = default;
};

// Block-grid geometry implied by image size, channel count and subsampling.
struct BlockGeometry {
  int padded_width = 0;   // luma plane width after MCU padding
  int padded_height = 0;
  int num_channels = 0;
  Subsampling subsampling = Subsampling::k444;
  std::array<int, 3> blocks_wide{};
  std::array<int, 3> blocks_high{};

  // MCU edge in pixels: 16 for 3-channel 4:2:0, else 8.
  int mcu_size() const;
  int plane_width(int c) const { return blocks_wide[c] * kBlockDim; }
  int plane_height(int c) const { return blocks_high[c] * kBlockDim; }
  size_t num_blocks(int c) const {
    return static_cast<size_t>(blocks_wide[c]) * blocks_high[c];
  }
  // Chroma planes are half resolution.
  bool IsSubsampled(int c) const {
    return c != kY && subsampling == Subsampling::k420;
  }
};

BlockGeometry ComputeGeometry(int width, int height, int channels,
                              Subsampling subsampling);
BlockGeometry GeometryOf(const CoefficientTensor& coeffs);
CoefficientTensor MakeCoefficientTensor(int width, int height,
                                        const BlockGeometry& geometry,
                                        int quality);

// Maps a (0, 1] quality fraction onto the 1..100 integer scale.
int QualityFromFraction(double q_alg);

// JFIF colour transform, clamped to [0, 255].
PlaneSet RgbToYcbcr(const PixelImage& image);
// Exact inverse of the forward matrix, then clamped to [0, 255].
PixelImage YcbcrToRgb(const PlaneSet& planes);
// 2x2 box average. Odd plane sizes are edge-replicated first.
PlaneSet SubsampleChroma(const PlaneSet& planes);
// Nearest-neighbour 2x replication, cropped to the luma plane size.
PlaneSet UpsampleChroma(const PlaneSet& planes);

// The 3x3 matrices of the colour transforms (offsets excluded).
using ColorMatrix = std::array<std::array<double, 3>, 3>;
const ColorMatrix& RgbToYcbcrMatrix();
const ColorMatrix& YcbcrToRgbMatrix();

// Orthonormal 2-D DCT-II / DCT-III on one level-shifted block.
std::array<double, kBlockSize> ForwardDctBlock(
    std::span<const double, kBlockSize> block);
std::array<double, kBlockSize> InverseDctBlock(
    std::span<const double, kBlockSize> coeffs);

// JPEG Annex K base tables, natural order.
const std::array<int, kBlockSize>& BaseLumaTable();
const std::array<int, kBlockSize>& BaseChromaTable();

// IJG quality scaling. Throws kConfig for quality outside 1..100.
QuantMatrices ScaleQuantTables(int quality);

std::array<int, kBlockSize> Quantize(std::span<const double, kBlockSize> coeffs,
                                     std::span<const int, kBlockSize> table);
std::array<double, kBlockSize> Dequantize(
    std::span<const double, kBlockSize> levels,
    std::span<const int, kBlockSize> table);

// pixels -> quantized coefficients. Grayscale input produces a single
// channel and is always treated as 4:4:4.
CoefficientTensor JpegEncodeTransform(const PixelImage& image, int quality,
                                      Subsampling subsampling =
                                          Subsampling::k420);

enum class DecodeMode {
  kAnalysis,  // real-valued samples, differentiable almost everywhere
  kEmit,      // 8-bit samples, as a baseline decoder would produce
};

// coefficients -> pixels, cropped to the tensor's width x height.
PixelImage JpegDecodeTransform(const CoefficientTensor& coeffs,
                               const QuantMatrices& tables, DecodeMode mode);
// Uses ScaleQuantTables(coeffs.quality).
PixelImage JpegDecodeTransform(const CoefficientTensor& coeffs,
                               DecodeMode mode);

// Clamp activity recorded by an analysis decode; 1 = the value was outside
// [0, 255] and got clamped.
struct ClampRecord {
  // Per channel, the padded component plane after the IDCT.
  std::vector<std::vector<uint8_t>> plane_clamped;
  // Padded luma-sized RGB planes (3-channel decodes only), planar.
  std::vector<uint8_t> rgb_clamped;
};

// Analysis decode that also fills `record`. Shared by JpegDecodeTransform
// and the gradient tape so both produce identical pixels.
PixelImage DecodeAnalysisRecorded(const CoefficientTensor& coeffs,
                                  const QuantMatrices& tables,
                                  ClampRecord* record);

}  // namespace dct_shield

#endif  // DCT_SHIELD_JPEG_CORE_H_
