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

#include "dct_shield/encoder.h"

#include <zlib.h>

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "dct_shield/png_io.h"
#include "dct_shield/random.h"

namespace dct_shield {

namespace {

constexpr int kKernel = 3;
constexpr int kTaps = kKernel * kKernel;
constexpr int kRequiredDownsample = 8;
constexpr int kRequiredLatentChannels = 4;

using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Activations: planar C x H x W.
struct Activation {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<double> data;

  Activation() = default;
  Activation(int c, int h, int w)
      : channels(c), height(h), width(w),
        data(static_cast<size_t>(c) * h * w, 0.0) {}
  size_t pixels() const { return static_cast<size_t>(height) * width; }
};

int OutputSize(int in, int stride) { return (in - 1) / stride + 1; }

// Rows are (channel, ky, kx) taps, columns are output positions.
RowMatrix Im2Col(const Activation& in, int stride, int out_h, int out_w) {
  RowMatrix col(in.channels * kTaps, static_cast<Eigen::Index>(out_h) * out_w);
  for (int c = 0; c < in.channels; ++c) {
    const double* src = in.data.data() + c * in.pixels();
    for (int ky = 0; ky < kKernel; ++ky) {
      for (int kx = 0; kx < kKernel; ++kx) {
        double* row = col.row(c * kTaps + ky * kKernel + kx).data();
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * stride + ky - 1;
          double* dst = row + static_cast<size_t>(oy) * out_w;
          if (iy < 0 || iy >= in.height) {
            std::fill_n(dst, out_w, 0.0);
            continue;
          }
          const double* src_row = src + static_cast<size_t>(iy) * in.width;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * stride + kx - 1;
            dst[ox] = (ix >= 0 && ix < in.width) ? src_row[ix] : 0.0;
          }
        }
      }
    }
  }
  return col;
}

void Col2ImAccumulate(const RowMatrix& col, int stride, int out_h, int out_w,
                      Activation* grad_in) {
  for (int c = 0; c < grad_in->channels; ++c) {
    double* dst = grad_in->data.data() + c * grad_in->pixels();
    for (int ky = 0; ky < kKernel; ++ky) {
      for (int kx = 0; kx < kKernel; ++kx) {
        const double* row = col.row(c * kTaps + ky * kKernel + kx).data();
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * stride + ky - 1;
          if (iy < 0 || iy >= grad_in->height) continue;
          double* dst_row = dst + static_cast<size_t>(iy) * grad_in->width;
          const double* src = row + static_cast<size_t>(oy) * out_w;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * stride + kx - 1;
            if (ix >= 0 && ix < grad_in->width) dst_row[ix] += src[ox];
          }
        }
      }
    }
  }
}

RowMatrix WeightMatrix(const ConvLayer& conv) {
  RowMatrix w(conv.out_channels, conv.in_channels * kTaps);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = conv.weights[i];
  return w;
}

Activation ConvForward(const ConvLayer& conv, const Activation& in) {
  const int out_h = OutputSize(in.height, conv.stride);
  const int out_w = OutputSize(in.width, conv.stride);
  Activation out(conv.out_channels, out_h, out_w);
  const RowMatrix col = Im2Col(in, conv.stride, out_h, out_w);
  Eigen::Map<RowMatrix> result(out.data.data(), conv.out_channels,
                               static_cast<Eigen::Index>(out.pixels()));
  result.noalias() = WeightMatrix(conv) * col;
  for (int o = 0; o < conv.out_channels; ++o) {
    result.row(o).array() += static_cast<double>(conv.bias[o]);
  }
  return out;
}

Activation ConvInputGrad(const ConvLayer& conv, const Activation& grad_out,
                         int in_h, int in_w) {
  Activation grad_in(conv.in_channels, in_h, in_w);
  Eigen::Map<const RowMatrix> g(grad_out.data.data(), conv.out_channels,
                                static_cast<Eigen::Index>(grad_out.pixels()));
  const RowMatrix col = WeightMatrix(conv).transpose() * g;
  Col2ImAccumulate(col, conv.stride, grad_out.height, grad_out.width,
                   &grad_in);
  return grad_in;
}

Activation Normalize(const EncoderNet& net, const PixelImage& image) {
  if (image.channels != net.input_channels()) {
    throw Error(ErrorKind::kShape,
                "encoder expects " + std::to_string(net.input_channels()) +
                    " channels, image has " + std::to_string(image.channels));
  }
  const int f = net.downsample_factor();
  if (image.width % f != 0 || image.height % f != 0) {
    throw Error(ErrorKind::kShape,
                "encoder input " + std::to_string(image.width) + "x" +
                    std::to_string(image.height) +
                    " is not divisible by " + std::to_string(f));
  }
  Activation a(image.channels, image.height, image.width);
  for (size_t i = 0; i < a.data.size(); ++i) {
    a.data[i] = image.data[i] / 127.5 - 1.0;
  }
  return a;
}

// Runs the layers, keeping every layer's input when `inputs` is non-null.
Activation RunLayers(const EncoderNet& net, Activation a,
                     std::vector<Activation>* inputs) {
  for (const EncoderLayer& layer : net.layers()) {
    if (inputs) inputs->push_back(a);
    if (const auto* conv = std::get_if<ConvLayer>(&layer)) {
      a = ConvForward(*conv, a);
    } else {
      const double slope = std::get<LeakyReluLayer>(layer).slope;
      for (double& v : a.data) {
        if (!(v > 0.0)) v *= slope;
      }
    }
  }
  return a;
}

// ---------------------------------------------------------------------------
// Weight file helpers.

void PutU8(std::vector<uint8_t>* out, uint8_t v) { out->push_back(v); }
void PutU16(std::vector<uint8_t>* out, uint16_t v) {
  out->push_back(static_cast<uint8_t>(v & 0xFF));
  out->push_back(static_cast<uint8_t>(v >> 8));
}
void PutU32(std::vector<uint8_t>* out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out->push_back(static_cast<uint8_t>(v >> (8 * i)));
}
void PutF32(std::vector<uint8_t>* out, float f) {
  uint32_t bits;
  std::memcpy(&bits, &f, sizeof(bits));
  PutU32(out, bits);
}

void PutRecord(std::vector<uint8_t>* out, WeightTag tag,
               const std::vector<uint32_t>& dims,
               const std::vector<float>& data) {
  PutU8(out, static_cast<uint8_t>(tag));
  PutU8(out, static_cast<uint8_t>(dims.size()));
  for (uint32_t d : dims) PutU32(out, d);
  for (float f : data) PutF32(out, f);
}

uint32_t Crc32(std::span<const uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  size_t done = 0;
  while (done < bytes.size()) {
    const uInt chunk = static_cast<uInt>(
        std::min<size_t>(bytes.size() - done, 1u << 30));
    crc = crc32(crc, bytes.data() + done, chunk);
    done += chunk;
  }
  return static_cast<uint32_t>(crc);
}

class ByteCursor {
 public:
  explicit ByteCursor(std::span<const uint8_t> bytes) : bytes_(bytes) {}

  size_t remaining() const { return bytes_.size() - pos_; }

  void Need(size_t n) const {
    if (remaining() < n) {
      throw WeightFileError(WeightFileError::Reason::kTruncated,
                            "weight file truncated at byte " +
                                std::to_string(pos_));
    }
  }
  uint8_t U8() {
    Need(1);
    return bytes_[pos_++];
  }
  uint16_t U16() {
    Need(2);
    const uint16_t v = bytes_[pos_] | (bytes_[pos_ + 1] << 8);
    pos_ += 2;
    return v;
  }
  uint32_t U32() {
    Need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  float F32() {
    const uint32_t bits = U32();
    float f;
    std::memcpy(&f, &bits, sizeof(f));
    return f;
  }

 private:
  std::span<const uint8_t> bytes_;
  size_t pos_ = 0;
};

struct Record {
  WeightTag tag;
  std::vector<uint32_t> dims;
  std::vector<float> data;
};

[[noreturn]] void BadShape(const std::string& message) {
  throw WeightFileError(WeightFileError::Reason::kBadShape, message);
}

}  // namespace

EncoderNet::EncoderNet(std::string name, std::vector<EncoderLayer> layers)
    : name_(std::move(name)), layers_(std::move(layers)) {
  int channels = 0;
  bool seen_conv = false;
  for (size_t i = 0; i < layers_.size(); ++i) {
    if (const auto* conv = std::get_if<ConvLayer>(&layers_[i])) {
      if (conv->stride != 1 && conv->stride != 2) {
        BadShape("layer " + std::to_string(i) + ": stride must be 1 or 2");
      }
      if (conv->in_channels <= 0 || conv->out_channels <= 0) {
        BadShape("layer " + std::to_string(i) + ": empty convolution");
      }
      if (seen_conv && conv->in_channels != channels) {
        BadShape("layer " + std::to_string(i) + ": expects " +
                 std::to_string(conv->in_channels) + " input channels, gets " +
                 std::to_string(channels));
      }
      const size_t expected =
          static_cast<size_t>(conv->out_channels) * conv->in_channels * kTaps;
      if (conv->weights.size() != expected ||
          conv->bias.size() != static_cast<size_t>(conv->out_channels)) {
        BadShape("layer " + std::to_string(i) + ": weight count mismatch");
      }
      if (!seen_conv) input_channels_ = conv->in_channels;
      seen_conv = true;
      channels = conv->out_channels;
      downsample_ *= conv->stride;
    } else if (!seen_conv) {
      BadShape("activation before the first convolution");
    }
  }
  if (!seen_conv) BadShape("encoder has no convolution layers");
  if (downsample_ != kRequiredDownsample) {
    BadShape("total downsampling is " + std::to_string(downsample_) +
             ", expected 8");
  }
  if (channels != kRequiredLatentChannels) {
    BadShape("latent has " + std::to_string(channels) +
             " channels, expected 4");
  }
  latent_channels_ = channels;
}

EncoderNet SurrogateInit(uint64_t seed) {
  Rng rng(seed);
  std::vector<EncoderLayer> layers;
  auto conv = [&rng](int in, int out, int stride) {
    ConvLayer c;
    c.in_channels = in;
    c.out_channels = out;
    c.stride = stride;
    const double fan_in = static_cast<double>(in) * kTaps;
    const double w_bound = std::sqrt(6.0 / fan_in);
    const double b_bound = 1.0 / std::sqrt(fan_in);
    c.weights.resize(static_cast<size_t>(out) * in * kTaps);
    for (float& w : c.weights) w = static_cast<float>(rng.Uniform(-w_bound, w_bound));
    c.bias.resize(out);
    for (float& b : c.bias) b = static_cast<float>(rng.Uniform(-b_bound, b_bound));
    return c;
  };
  const int widths[] = {3, 32, 64, 128};
  for (int i = 0; i < 3; ++i) {
    layers.emplace_back(conv(widths[i], widths[i + 1], 2));
    layers.emplace_back(LeakyReluLayer{0.2f});
  }
  layers.emplace_back(conv(128, kRequiredLatentChannels, 1));
  return EncoderNet("surrogate-seed-" + std::to_string(seed), std::move(layers));
}

LatentTensor EncoderForward(const EncoderNet& net, const PixelImage& image) {
  Activation a = RunLayers(net, Normalize(net, image), nullptr);
  LatentTensor z(a.channels, a.height, a.width);
  z.data = std::move(a.data);
  return z;
}

std::vector<LatentTensor> EncoderForwardBatch(
    const EncoderNet& net, std::span<const PixelImage> images) {
  std::vector<LatentTensor> out;
  out.reserve(images.size());
  for (const PixelImage& image : images) out.push_back(EncoderForward(net, image));
  return out;
}

struct EncoderPass::Activations {
  std::vector<Activation> inputs;  // input of every layer
};

EncoderPass::EncoderPass(const EncoderNet& net, const PixelImage& image)
    : net_(&net),
      width_(image.width),
      height_(image.height),
      saved_(std::make_unique<Activations>()) {
  Activation a = RunLayers(net, Normalize(net, image), &saved_->inputs);
  latent_ = LatentTensor(a.channels, a.height, a.width);
  latent_.data = std::move(a.data);
}

EncoderPass::~EncoderPass() = default;
EncoderPass::EncoderPass(EncoderPass&&) noexcept = default;
EncoderPass& EncoderPass::operator=(EncoderPass&&) noexcept = default;

PixelImage EncoderPass::Vjp(const LatentTensor& latent_cotangent) const {
  if (!latent_cotangent.SameShape(latent_)) {
    throw Error(ErrorKind::kShape, "latent cotangent shape mismatch");
  }
  const auto& layers = net_->layers();
  Activation g(latent_.channels, latent_.height, latent_.width);
  g.data = latent_cotangent.data;
  for (size_t i = layers.size(); i-- > 0;) {
    const Activation& in = saved_->inputs[i];
    if (const auto* conv = std::get_if<ConvLayer>(&layers[i])) {
      g = ConvInputGrad(*conv, g, in.height, in.width);
    } else {
      const double slope = std::get<LeakyReluLayer>(layers[i]).slope;
      for (size_t k = 0; k < g.data.size(); ++k) {
        if (!(in.data[k] > 0.0)) g.data[k] *= slope;
      }
    }
  }
  PixelImage grad(width_, height_, g.channels);
  for (size_t i = 0; i < grad.data.size(); ++i) grad.data[i] = g.data[i] / 127.5;
  return grad;
}

PixelImage EncoderVjp(const EncoderNet& net, const PixelImage& image,
                      const LatentTensor& latent_cotangent) {
  return EncoderPass(net, image).Vjp(latent_cotangent);
}

LossValue LossNorm(const LatentTensor& z) {
  LossValue out;
  out.cotangent = LatentTensor(z.channels, z.height, z.width);
  double s = 0.0;
  for (double v : z.data) s += v * v;
  out.value = std::sqrt(s);
  if (out.value > 0.0) {
    for (size_t i = 0; i < z.data.size(); ++i) {
      out.cotangent.data[i] = z.data[i] / out.value;
    }
  }
  return out;
}

LossValue LossTargeted(const LatentTensor& z, const LatentTensor& target) {
  if (!z.SameShape(target)) {
    throw Error(ErrorKind::kShape, "target latent shape mismatch");
  }
  LatentTensor diff = z;
  for (size_t i = 0; i < diff.data.size(); ++i) diff.data[i] -= target.data[i];
  return LossNorm(diff);
}

std::vector<uint8_t> SerializeWeights(const EncoderNet& net) {
  std::vector<uint8_t> out = {'D', 'S', 'W', '1'};
  PutU16(&out, kWeightFileVersion);
  uint32_t records = 0;
  for (const EncoderLayer& layer : net.layers()) {
    records += std::holds_alternative<ConvLayer>(layer) ? 2 : 1;
  }
  PutU32(&out, records);
  for (const EncoderLayer& layer : net.layers()) {
    if (const auto* conv = std::get_if<ConvLayer>(&layer)) {
      const auto out_ch = static_cast<uint32_t>(conv->out_channels);
      PutRecord(&out,
                conv->stride == 2 ? WeightTag::kConvStride2
                                  : WeightTag::kConvStride1,
                {out_ch, static_cast<uint32_t>(conv->in_channels), kKernel,
                 kKernel},
                conv->weights);
      PutRecord(&out, WeightTag::kBias, {out_ch}, conv->bias);
    } else {
      PutRecord(&out, WeightTag::kLeakyRelu, {1},
                {std::get<LeakyReluLayer>(layer).slope});
    }
  }
  PutU32(&out, Crc32(out));
  return out;
}

EncoderNet ParseWeights(std::span<const uint8_t> bytes,
                        const std::string& name) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "DSW1", 4) != 0) {
    throw WeightFileError(WeightFileError::Reason::kBadMagic,
                          "not a weight file (magic is not DSW1)");
  }
  if (bytes.size() < 4 + 2 + 4 + 4) {
    throw WeightFileError(WeightFileError::Reason::kTruncated,
                          "weight file shorter than its header");
  }
  const auto body = bytes.first(bytes.size() - 4);
  ByteCursor crc_cursor(bytes.subspan(bytes.size() - 4));
  if (Crc32(body) != crc_cursor.U32()) {
    throw WeightFileError(WeightFileError::Reason::kBadCrc,
                          "weight file CRC32 mismatch");
  }
  ByteCursor cur(body.subspan(4));
  const uint16_t version = cur.U16();
  if (version != kWeightFileVersion) {
    throw WeightFileError(WeightFileError::Reason::kBadVersion,
                          "unsupported weight file version " +
                              std::to_string(version));
  }
  const uint32_t count = cur.U32();
  std::vector<Record> records;
  for (uint32_t i = 0; i < count; ++i) {
    Record r;
    r.tag = static_cast<WeightTag>(cur.U8());
    const int ndims = cur.U8();
    uint64_t elements = 1;
    for (int d = 0; d < ndims; ++d) {
      r.dims.push_back(cur.U32());
      elements *= r.dims.back();
      if (elements > cur.remaining()) {
        throw WeightFileError(WeightFileError::Reason::kTruncated,
                              "record " + std::to_string(i) +
                                  " is larger than the file");
      }
    }
    cur.Need(elements * 4);
    r.data.resize(elements);
    for (float& f : r.data) f = cur.F32();
    records.push_back(std::move(r));
  }
  if (cur.remaining() != 0) BadShape("trailing bytes after the last record");

  std::vector<EncoderLayer> layers;
  for (size_t i = 0; i < records.size(); ++i) {
    const Record& r = records[i];
    switch (r.tag) {
      case WeightTag::kConvStride1:
      case WeightTag::kConvStride2: {
        if (r.dims.size() != 4 || r.dims[2] != kKernel || r.dims[3] != kKernel) {
          BadShape("record " + std::to_string(i) +
                   ": conv dims must be [out, in, 3, 3]");
        }
        if (i + 1 >= records.size() || records[i + 1].tag != WeightTag::kBias ||
            records[i + 1].dims.size() != 1 ||
            records[i + 1].dims[0] != r.dims[0]) {
          BadShape("record " + std::to_string(i) +
                   ": conv must be followed by a matching bias");
        }
        ConvLayer conv;
        conv.out_channels = static_cast<int>(r.dims[0]);
        conv.in_channels = static_cast<int>(r.dims[1]);
        conv.stride = r.tag == WeightTag::kConvStride2 ? 2 : 1;
        conv.weights = r.data;
        conv.bias = records[i + 1].data;
        layers.emplace_back(std::move(conv));
        ++i;
        break;
      }
      case WeightTag::kLeakyRelu:
        if (r.dims.size() != 1 || r.dims[0] != 1) {
          BadShape("record " + std::to_string(i) + ": leaky relu takes [1]");
        }
        layers.emplace_back(LeakyReluLayer{r.data[0]});
        break;
      case WeightTag::kBias:
        BadShape("record " + std::to_string(i) + ": bias without a conv");
      default:
        BadShape("record " + std::to_string(i) + ": unknown tag " +
                 std::to_string(static_cast<int>(r.tag)));
    }
  }
  return EncoderNet(name, std::move(layers));
}

void SaveWeights(const EncoderNet& net, const std::string& path) {
  WriteFileBytes(path, SerializeWeights(net));
}

EncoderNet LoadWeights(const std::string& path) {
  const std::vector<uint8_t> bytes = ReadFileBytes(path);
  return ParseWeights(bytes, path);
}

PixelImage PadToMultiple(const PixelImage& image, int multiple) {
  const int w = (image.width + multiple - 1) / multiple * multiple;
  const int h = (image.height + multiple - 1) / multiple * multiple;
  if (w == image.width && h == image.height) return image;
  PixelImage out(w, h, image.channels);
  for (int c = 0; c < image.channels; ++c) {
    out.SetPlane(c, image.GetPlane(c).PaddedTo(w, h));
  }
  return out;
}

PixelImage PadToMultipleAdjoint(const PixelImage& grad, int width,
                                int height) {
  if (grad.width == width && grad.height == height) return grad;
  PixelImage out(width, height, grad.channels);
  for (int c = 0; c < grad.channels; ++c) {
    for (int y = 0; y < grad.height; ++y) {
      for (int x = 0; x < grad.width; ++x) {
        out.at(c, std::min(y, height - 1), std::min(x, width - 1)) +=
            grad.at(c, y, x);
      }
    }
  }
  return out;
}

}  // namespace dct_shield
