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

#ifndef DCT_SHIELD_SHIELD_H_
#define DCT_SHIELD_SHIELD_H_

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dct_shield/encoder.h"
#include "dct_shield/grad_engine.h"
#include "dct_shield/image.h"
#include "dct_shield/jpeg_core.h"

namespace dct_shield {

enum class Variant { kBase, kYOnly, kMasked };
enum class StepRule { kSign, kGradient };

std::string_view VariantName(Variant v);
Variant ParseVariant(std::string_view name);  // "base", "y_only"/"y-only", "masked"

// Binary pixel mask, row-major, 1 = protect.
struct PixelMask {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> data;

  PixelMask() = default;
  PixelMask(int w, int h, uint8_t fill = 0)
      : width(w), height(h), data(static_cast<size_t>(w) * h, fill) {}

  uint8_t& at(int y, int x) { return data[static_cast<size_t>(y) * width + x]; }
  uint8_t at(int y, int x) const {
    return data[static_cast<size_t>(y) * width + x];
  }
};

// Any nonzero sample (of any channel) marks the pixel.
PixelMask MaskFromImage(const PixelImage& image);

struct ImmunizeConfig {
  double q_alg = 0.95;
  double epsilon = 1.0;
  // Overrides `epsilon` per Y/Cb/Cr channel when set.
  std::optional<std::array<double, 3>> channel_epsilon;
  double gamma = 0.1;
  int iterations = 1000;
  Variant variant = Variant::kBase;
  std::optional<PixelMask> mask;
  bool round_final = false;
  // Requires epsilon >= 1 and implies round_final.
  bool robust_mode = false;
  uint64_t seed = 0;
  Subsampling subsampling = Subsampling::k420;
  StepRule step_rule = StepRule::kSign;
  // Targeted loss ||E(x') - target|| instead of ||E(x')||.
  std::optional<LatentTensor> target;

  // Per-channel bound actually used.
  std::array<double, 3> EffectiveEpsilon() const;
};

// "base", "y-only", "inpaint", "jpeg-robust".
ImmunizeConfig PresetConfig(std::string_view name);

// Throws Error(kConfig) for invalid settings and Error(kDimension) for a mask
// that does not match the image.
void ValidateConfig(const ImmunizeConfig& cfg, const PixelImage& image);

// Which coefficients may move: per channel, per block.
struct Activity {
  std::array<bool, 3> channel_enable{};
  std::vector<std::vector<uint8_t>> block_active;  // [channel][block]

  size_t ActiveParameterCount() const;
  bool IsActive(int channel, size_t block) const {
    return channel_enable[channel] && block_active[channel][block];
  }
};

// Y block active iff any pixel of its 8x8 footprint is masked; for 4:2:0
// chroma the mask is first 2x2 any-reduced.
std::vector<std::vector<uint8_t>> BuildBlockMask(const PixelMask& mask,
                                                 const BlockGeometry& geometry,
                                                 int width, int height);

// Channel enables and block activity for a variant on `geometry`.
Activity ApplyVariant(const ImmunizeConfig& cfg, const BlockGeometry& geometry,
                      int width, int height);

struct Perturbation {
  CoefficientTensor delta;
  Activity activity;

  double MaxAbs() const;
  // True when every inactive entry is exactly zero.
  bool RespectsActivity() const;
};

Perturbation ZeroPerturbation(const CoefficientTensor& like, Activity activity);

// delta' = clamp(delta - gamma * step(grad), -eps_c, eps_c), zeroed where
// inactive. step is sign (sign(0) = 0) or the raw gradient.
Perturbation PgdStep(const Perturbation& delta, const CoefficientTensor& grad,
                     double gamma, const std::array<double, 3>& epsilon,
                     StepRule rule = StepRule::kSign);

// Rounds half away from zero.
CoefficientTensor RoundCoefficients(const CoefficientTensor& coeffs);

// E(image) after the same channel replication and padding the objective
// applies; used to build target latents.
LatentTensor EncodeImage(const EncoderNet& net, const PixelImage& image);

// L(E(x')) with x' = JPEG_D(coeffs) in analysis mode. Gray images are
// replicated to three channels and every image is edge-padded to a multiple
// of the encoder's downsample factor before encoding.
class Objective {
 public:
  Objective(const EncoderNet& net, QuantMatrices tables,
            std::optional<LatentTensor> target = std::nullopt);

  struct Evaluation {
    double loss = 0.0;
    CoefficientTensor gradient;
    DecodeTape tape;
  };

  double Value(const CoefficientTensor& coeffs) const;
  Evaluation ValueAndGradient(const CoefficientTensor& coeffs) const;
  // The same loss on an already decoded image.
  double ImageValue(const PixelImage& image) const;

  const QuantMatrices& tables() const { return tables_; }

 private:
  const EncoderNet* net_;
  QuantMatrices tables_;
  std::optional<LatentTensor> target_;
};

// Central differences of the full objective along random unit directions.
// Only `n_probes`, `h`, `tolerance`, `seed` and `tamper_gradient` are used.
CheckReport FullChainCheck(const Objective& objective,
                           const CoefficientTensor& coeffs,
                           const FiniteDiffOptions& options);

struct ImmunizeReport {
  ImmunizeConfig config;
  int quality = 0;
  std::vector<double> loss_trace;  // iterations + 1 entries
  std::vector<double> best_trace;  // running minimum of loss_trace
  double initial_loss = 0.0;
  double final_loss = 0.0;   // best observed (the returned iterate)
  int best_iteration = 0;
  double output_loss = 0.0;  // loss of the emitted 8-bit image
  size_t active_params = 0;
  double wall_time_seconds = 0.0;
  // Distribution of round(delta) over active entries of the returned iterate.
  std::map<long, size_t> delta_histogram;
};

struct ImmunizeResult {
  PixelImage image;             // JPEG_D(alpha + delta_best), emitted
  CoefficientTensor alpha;      // clean quantized coefficients
  CoefficientTensor perturbed;  // alpha + delta_best (rounded if requested)
  Perturbation delta;           // delta_best
  ImmunizeReport report;
};

// Called after every PGD step with the new iterate (1-based step index).
using IterationObserver = std::function<void(int step, const Perturbation&)>;

ImmunizeResult Immunize(const PixelImage& image, const EncoderNet& net,
                        const ImmunizeConfig& cfg,
                        const IterationObserver& observer = {});

// "iteration,loss,best_loss" rows followed by "# key=value" summary lines.
// Wall time is left out so identical runs give identical files.
std::string ReportToCsv(const ImmunizeReport& report);

}  // namespace dct_shield

#endif  // DCT_SHIELD_SHIELD_H_
