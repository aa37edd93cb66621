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

#ifndef DCT_SHIELD_GRAD_ENGINE_H_
#define DCT_SHIELD_GRAD_ENGINE_H_

#include <cstdint>
#include <functional>
#include <vector>

#include "dct_shield/image.h"
#include "dct_shield/jpeg_core.h"

namespace dct_shield {

// Everything the reverse pass of an analysis decode needs: geometry, the
// tables used for dequantization, and which samples hit a clamp.
struct DecodeTape {
  int width = 0;
  int height = 0;
  BlockGeometry geometry;
  QuantMatrices tables;
  ClampRecord clamps;

  // Output pixels (all channels, cropped region) whose final clamp fired.
  size_t CountClampedOutputs() const;
  // Component samples clamped after the IDCT, over all planes.
  size_t CountClampedPlaneSamples() const;
};

struct TapedDecode {
  PixelImage image;
  DecodeTape tape;
};

// Same pixels as JpegDecodeTransform(kAnalysis), plus the tape.
TapedDecode DecodeForwardWithTape(const CoefficientTensor& coeffs,
                                  const QuantMatrices& tables);

// J^T * cotangent, shaped like the coefficient tensor that produced `tape`.
// Clamped samples pass no gradient.
CoefficientTensor DecodeVjp(const DecodeTape& tape,
                            const PixelImage& pixel_cotangent);

// Stage adjoints, exposed for stage-wise testing.
// Adjoint of nearest 2x upsampling cropped to (luma_w, luma_h): 2x2 sums
// into a (chroma_w, chroma_h) plane.
Plane UpsampleNearestAdjoint(const Plane& grad, int chroma_w, int chroma_h);
// Adjoint of the 2x2 box average: each input gets a quarter of its cell's
// gradient (edge-replicated samples accumulate).
Plane BoxDownsampleAdjoint(const Plane& grad, int full_w, int full_h);
// Adjoint of the colour matrix: M^T applied per pixel.
void ColorMatrixAdjoint(const ColorMatrix& m, const double in[3],
                        double out[3]);

enum class ProbeFunctional {
  kRandom,  // <w, decode(alpha)> with w ~ N(0, 1) per pixel
  kSum,     // sum of all output samples
};

struct FiniteDiffOptions {
  int n_probes = 16;
  double h = 1e-3;
  double tolerance = 1e-5;
  uint64_t seed = 0;
  ProbeFunctional functional = ProbeFunctional::kRandom;
  // Test hook: applied to the analytic gradient before comparison.
  std::function<void(CoefficientTensor&)> tamper_gradient;
};

struct CheckReport {
  int probes = 0;
  double tolerance = 0.0;
  double max_relative_error = 0.0;
  std::vector<double> relative_errors;
  bool passed = false;
};

// Relative error used by all gradient checks: |a-b| / max(|a|, |b|, 1e-12).
double RelativeError(double analytic, double numeric);

// Compares <DecodeVjp(w), e> with the central difference of
// L(alpha) = <w, decode(alpha)> along random unit directions e.
// Passes iff every probe's relative error is strictly below the tolerance.
CheckReport FiniteDiffCheck(const CoefficientTensor& coeffs,
                            const QuantMatrices& tables,
                            const FiniteDiffOptions& options);
CheckReport FiniteDiffCheck(const CoefficientTensor& coeffs, int quality,
                            int n_probes, double h, double tolerance);

// Random unit-norm direction shaped like `like`.
CoefficientTensor RandomUnitDirection(const CoefficientTensor& like,
                                      uint64_t seed);
// Sum over all channels of elementwise products.
double Dot(const CoefficientTensor& a, const CoefficientTensor& b);
double Dot(const PixelImage& a, const PixelImage& b);
// a + s * b
CoefficientTensor Axpy(const CoefficientTensor& a, double s,
                       const CoefficientTensor& b);

}  // namespace dct_shield

#endif  // DCT_SHIELD_GRAD_ENGINE_H_
