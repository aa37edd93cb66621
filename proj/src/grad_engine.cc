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

#include "dct_shield/grad_engine.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "dct_shield/error.h"
#include "dct_shield/random.h"

namespace dct_shield {

size_t DecodeTape::CountClampedOutputs() const {
  if (geometry.num_channels == 1) {
    // Gray output is the luma plane itself.
    size_t n = 0;
    const auto& mask = clamps.plane_clamped[0];
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        n += mask[static_cast<size_t>(y) * geometry.padded_width + x];
      }
    }
    return n;
  }
  const size_t plane =
      static_cast<size_t>(geometry.padded_width) * geometry.padded_height;
  size_t n = 0;
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        n += clamps.rgb_clamped[c * plane +
                                static_cast<size_t>(y) * geometry.padded_width +
                                x];
      }
    }
  }
  return n;
}

size_t DecodeTape::CountClampedPlaneSamples() const {
  size_t n = 0;
  for (const auto& mask : clamps.plane_clamped) {
    n += static_cast<size_t>(std::count(mask.begin(), mask.end(), 1));
  }
  return n;
}

TapedDecode DecodeForwardWithTape(const CoefficientTensor& coeffs,
                                  const QuantMatrices& tables) {
  TapedDecode out;
  out.image = DecodeAnalysisRecorded(coeffs, tables, &out.tape.clamps);
  out.tape.width = coeffs.width;
  out.tape.height = coeffs.height;
  out.tape.geometry = GeometryOf(coeffs);
  out.tape.tables = tables;
  return out;
}

Plane UpsampleNearestAdjoint(const Plane& grad, int chroma_w, int chroma_h) {
  Plane out(chroma_w, chroma_h);
  for (int y = 0; y < grad.height; ++y) {
    for (int x = 0; x < grad.width; ++x) out.at(y / 2, x / 2) += grad.at(y, x);
  }
  return out;
}

Plane BoxDownsampleAdjoint(const Plane& grad, int full_w, int full_h) {
  Plane out(full_w, full_h);
  for (int y = 0; y < grad.height; ++y) {
    for (int x = 0; x < grad.width; ++x) {
      const double g = 0.25 * grad.at(y, x);
      for (int dy = 0; dy < 2; ++dy) {
        for (int dx = 0; dx < 2; ++dx) {
          out.at(std::min(2 * y + dy, full_h - 1),
                 std::min(2 * x + dx, full_w - 1)) += g;
        }
      }
    }
  }
  return out;
}

void ColorMatrixAdjoint(const ColorMatrix& m, const double in[3],
                        double out[3]) {
  for (int k = 0; k < 3; ++k) {
    out[k] = m[0][k] * in[0] + m[1][k] * in[1] + m[2][k] * in[2];
  }
}

CoefficientTensor DecodeVjp(const DecodeTape& tape,
                            const PixelImage& pixel_cotangent) {
  const BlockGeometry& geo = tape.geometry;
  const int nc = geo.num_channels;
  if (pixel_cotangent.width != tape.width ||
      pixel_cotangent.height != tape.height ||
      pixel_cotangent.channels != nc) {
    throw Error(ErrorKind::kShape,
                "cotangent is " + std::to_string(pixel_cotangent.width) + "x" +
                    std::to_string(pixel_cotangent.height) + "x" +
                    std::to_string(pixel_cotangent.channels) +
                    ", decode produced " + std::to_string(tape.width) + "x" +
                    std::to_string(tape.height) + "x" + std::to_string(nc));
  }
  if (static_cast<int>(tape.clamps.plane_clamped.size()) != nc) {
    throw Error(ErrorKind::kShape, "tape does not match its geometry");
  }

  // Crop adjoint: zero-fill the padding.
  const int pw = geo.padded_width;
  const int ph = geo.padded_height;
  std::vector<Plane> out_grad(nc, Plane(pw, ph));
  for (int c = 0; c < nc; ++c) {
    for (int y = 0; y < tape.height; ++y) {
      for (int x = 0; x < tape.width; ++x) {
        out_grad[c].at(y, x) = pixel_cotangent.at(c, y, x);
      }
    }
  }

  std::vector<Plane> plane_grad(nc);
  if (nc == 1) {
    plane_grad[0] = std::move(out_grad[0]);
  } else {
    const size_t n = static_cast<size_t>(pw) * ph;
    const ColorMatrix& m = YcbcrToRgbMatrix();
    Plane gy(pw, ph), gcb(pw, ph), gcr(pw, ph);
    for (size_t i = 0; i < n; ++i) {
      double g_rgb[3];
      for (int c = 0; c < 3; ++c) {
        g_rgb[c] = tape.clamps.rgb_clamped[c * n + i] ? 0.0 : out_grad[c].data[i];
      }
      double g_ycc[3];
      ColorMatrixAdjoint(m, g_rgb, g_ycc);
      gy.data[i] = g_ycc[0];
      gcb.data[i] = g_ycc[1];
      gcr.data[i] = g_ycc[2];
    }
    plane_grad[kY] = std::move(gy);
    if (geo.subsampling == Subsampling::k420) {
      plane_grad[kCb] = UpsampleNearestAdjoint(gcb, geo.plane_width(kCb),
                                               geo.plane_height(kCb));
      plane_grad[kCr] = UpsampleNearestAdjoint(gcr, geo.plane_width(kCr),
                                               geo.plane_height(kCr));
    } else {
      plane_grad[kCb] = std::move(gcb);
      plane_grad[kCr] = std::move(gcr);
    }
  }

  CoefficientTensor grad;
  grad.width = tape.width;
  grad.height = tape.height;
  grad.subsampling = geo.subsampling;
  grad.quality = tape.tables.quality;
  for (int c = 0; c < nc; ++c) {
    const auto& mask = tape.clamps.plane_clamped[c];
    Plane& g = plane_grad[c];
    for (size_t i = 0; i < g.data.size(); ++i) {
      if (mask[i]) g.data[i] = 0.0;
    }
    CoefficientChannel ch(geo.blocks_wide[c], geo.blocks_high[c]);
    const auto& table = tape.tables.ForChannel(c);
    std::array<double, kBlockSize> block{};
    for (int by = 0; by < ch.blocks_high; ++by) {
      for (int bx = 0; bx < ch.blocks_wide; ++bx) {
        for (int y = 0; y < kBlockDim; ++y) {
          for (int x = 0; x < kBlockDim; ++x) {
            block[y * kBlockDim + x] =
                g.at(by * kBlockDim + y, bx * kBlockDim + x);
          }
        }
        // The IDCT is orthonormal, so its adjoint is the forward DCT.
        const auto coeff_grad = ForwardDctBlock(block);
        auto dst = ch.block(static_cast<size_t>(by) * ch.blocks_wide + bx);
        for (int k = 0; k < kBlockSize; ++k) dst[k] = coeff_grad[k] * table[k];
      }
    }
    grad.channels.push_back(std::move(ch));
  }
  return grad;
}

double RelativeError(double analytic, double numeric) {
  const double denom =
      std::max({std::abs(analytic), std::abs(numeric), 1e-12});
  return std::abs(analytic - numeric) / denom;
}

double Dot(const CoefficientTensor& a, const CoefficientTensor& b) {
  if (!a.SameShape(b)) throw Error(ErrorKind::kShape, "dot of unequal tensors");
  double s = 0.0;
  for (size_t c = 0; c < a.channels.size(); ++c) {
    s += std::inner_product(a.channels[c].coeffs.begin(),
                            a.channels[c].coeffs.end(),
                            b.channels[c].coeffs.begin(), 0.0);
  }
  return s;
}

double Dot(const PixelImage& a, const PixelImage& b) {
  if (!a.SameShape(b)) throw Error(ErrorKind::kShape, "dot of unequal images");
  return std::inner_product(a.data.begin(), a.data.end(), b.data.begin(), 0.0);
}

CoefficientTensor Axpy(const CoefficientTensor& a, double s,
                       const CoefficientTensor& b) {
  if (!a.SameShape(b)) throw Error(ErrorKind::kShape, "axpy of unequal tensors");
  CoefficientTensor out = a;
  for (size_t c = 0; c < a.channels.size(); ++c) {
    auto& dst = out.channels[c].coeffs;
    const auto& src = b.channels[c].coeffs;
    for (size_t i = 0; i < dst.size(); ++i) dst[i] += s * src[i];
  }
  return out;
}

CoefficientTensor RandomUnitDirection(const CoefficientTensor& like,
                                      uint64_t seed) {
  Rng rng(seed);
  CoefficientTensor dir = like.ZerosLike();
  double norm2 = 0.0;
  for (auto& ch : dir.channels) {
    for (double& v : ch.coeffs) {
      v = rng.Normal();
      norm2 += v * v;
    }
  }
  const double inv = 1.0 / std::sqrt(norm2);
  for (auto& ch : dir.channels) {
    for (double& v : ch.coeffs) v *= inv;
  }
  return dir;
}

CheckReport FiniteDiffCheck(const CoefficientTensor& coeffs,
                            const QuantMatrices& tables,
                            const FiniteDiffOptions& options) {
  if (options.n_probes < 1) {
    throw Error(ErrorKind::kConfig, "gradient check needs at least one probe");
  }
  CheckReport report;
  report.probes = options.n_probes;
  report.tolerance = options.tolerance;

  const TapedDecode base = DecodeForwardWithTape(coeffs, tables);
  PixelImage weights(base.image.width, base.image.height, base.image.channels,
                     1.0);
  Rng rng(options.seed);
  if (options.functional == ProbeFunctional::kRandom) {
    for (double& w : weights.data) w = rng.Normal();
  }
  CoefficientTensor grad = DecodeVjp(base.tape, weights);
  if (options.tamper_gradient) options.tamper_gradient(grad);

  auto loss = [&](const CoefficientTensor& at) {
    return Dot(weights, JpegDecodeTransform(at, tables, DecodeMode::kAnalysis));
  };
  bool all_pass = true;
  for (int p = 0; p < options.n_probes; ++p) {
    const CoefficientTensor dir = RandomUnitDirection(coeffs, rng.Next());
    const double plus = loss(Axpy(coeffs, options.h, dir));
    const double minus = loss(Axpy(coeffs, -options.h, dir));
    const double numeric = (plus - minus) / (2.0 * options.h);
    const double analytic = Dot(grad, dir);
    const double err = RelativeError(analytic, numeric);
    report.relative_errors.push_back(err);
    report.max_relative_error = std::max(report.max_relative_error, err);
    if (!(err < options.tolerance)) all_pass = false;
  }
  report.passed = all_pass;
  return report;
}

CheckReport FiniteDiffCheck(const CoefficientTensor& coeffs, int quality,
                            int n_probes, double h, double tolerance) {
  FiniteDiffOptions options;
  options.n_probes = n_probes;
  options.h = h;
  options.tolerance = tolerance;
  return FiniteDiffCheck(coeffs, ScaleQuantTables(quality), options);
}

}  // namespace dct_shield
