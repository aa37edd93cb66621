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

#ifndef DCT_SHIELD_ENCODER_H_
#define DCT_SHIELD_ENCODER_H_

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "dct_shield/error.h"
#include "dct_shield/image.h"

namespace dct_shield {

// 3x3 convolution with padding 1. Weights are [out][in][3][3], stored as
// float32 (the on-disk precision) and evaluated in double.
struct ConvLayer {
  int in_channels = 0;
  int out_channels = 0;
  int stride = 1;  // 1 or 2
  std::vector<float> weights;
  std::vector<float> bias;

  bool operator==(const ConvLayer&) const = default;
};

struct LeakyReluLayer {
  float slope = 0.2f;

  bool operator==(const LeakyReluLayer&) const = default;
};

using EncoderLayer = std::variant<ConvLayer, LeakyReluLayer>;

// Differentiable pixel -> latent encoder. Inputs in [0, 255] are mapped to
// x / 127.5 - 1 before the first layer.
class EncoderNet {
 public:
  EncoderNet() = default;
  EncoderNet(std::string name, std::vector<EncoderLayer> layers);

  const std::string& name() const { return name_; }
  const std::vector<EncoderLayer>& layers() const { return layers_; }
  int input_channels() const { return input_channels_; }
  int latent_channels() const { return latent_channels_; }
  int downsample_factor() const { return downsample_; }

  bool operator==(const EncoderNet& other) const {
    return layers_ == other.layers_;
  }

 private:
  std::string name_;
  std::vector<EncoderLayer> layers_;
  int input_channels_ = 0;
  int latent_channels_ = 0;
  int downsample_ = 1;
};

struct LatentTensor {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<double> data;  // planar, row-major

  LatentTensor() = default;
  LatentTensor(int c, int h, int w, double fill = 0.0)
      : channels(c),
        height(h),
        width(w),
        data(static_cast<size_t>(c) * h * w, fill) {}

  bool SameShape(const LatentTensor& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }
  bool operator==(const LatentTensor&) const = default;
};

// 3 -> 32 -> 64 -> 128 (stride-2 conv + leaky_relu(0.2) each) -> 4, with
// fan-in scaled uniform weights drawn from `seed`.
EncoderNet SurrogateInit(uint64_t seed);

// Requires image dims divisible by the net's downsample factor.
LatentTensor EncoderForward(const EncoderNet& net, const PixelImage& image);
std::vector<LatentTensor> EncoderForwardBatch(
    const EncoderNet& net, std::span<const PixelImage> images);

// Gradient of <latent_cotangent, E(image)> with respect to the image.
PixelImage EncoderVjp(const EncoderNet& net, const PixelImage& image,
                      const LatentTensor& latent_cotangent);

// One forward pass that keeps its activations, so the VJP does not rerun
// the network. Holds a reference to `net`, which must outlive it.
class EncoderPass {
 public:
  EncoderPass(const EncoderNet& net, const PixelImage& image);
  ~EncoderPass();
  EncoderPass(EncoderPass&&) noexcept;
  EncoderPass& operator=(EncoderPass&&) noexcept;

  const LatentTensor& latent() const { return latent_; }
  PixelImage Vjp(const LatentTensor& latent_cotangent) const;

 private:
  struct Activations;
  const EncoderNet* net_;
  int width_;
  int height_;
  std::unique_ptr<Activations> saved_;
  LatentTensor latent_;
};

struct LossValue {
  double value = 0.0;
  LatentTensor cotangent;  // d value / d z
};

// ||z||_2 over the flattened latent; cotangent z / ||z||, zero at z = 0.
LossValue LossNorm(const LatentTensor& z);
// ||z - target||_2.
LossValue LossTargeted(const LatentTensor& z, const LatentTensor& target);

// Weight file ("DSW1"): little-endian
//   magic[4] version:u16 layer_count:u32
//   per layer: tag:u8 ndims:u8 dims:u32[ndims] data:f32[prod(dims)]
//   crc32:u32 over everything before it.
// Tags: 1 = conv stride 1 [out,in,3,3], 2 = conv stride 2 [out,in,3,3],
// 3 = bias [out] for the preceding conv, 4 = leaky relu [1] (slope).
constexpr uint16_t kWeightFileVersion = 1;
enum class WeightTag : uint8_t {
  kConvStride1 = 1,
  kConvStride2 = 2,
  kBias = 3,
  kLeakyRelu = 4,
};

// Load failures, one reason per check so callers can tell them apart.
class WeightFileError : public Error {
 public:
  enum class Reason { kBadMagic, kBadVersion, kTruncated, kBadCrc, kBadShape };

  WeightFileError(Reason reason, const std::string& message)
      : Error(ErrorKind::kFormat, message), reason_(reason) {}

  Reason reason() const { return reason_; }

 private:
  Reason reason_;
};

std::vector<uint8_t> SerializeWeights(const EncoderNet& net);
EncoderNet ParseWeights(std::span<const uint8_t> bytes,
                        const std::string& name = "imported");
void SaveWeights(const EncoderNet& net, const std::string& path);
EncoderNet LoadWeights(const std::string& path);

// Replicate-pads an image so both dims are multiples of `multiple`, and the
// adjoint of that padding (padding gradients fold back onto the edge).
PixelImage PadToMultiple(const PixelImage& image, int multiple);
PixelImage PadToMultipleAdjoint(const PixelImage& grad, int width, int height);

}  // namespace dct_shield

#endif  // DCT_SHIELD_ENCODER_H_
