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

#include "dct_shield/shield.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>

#include "dct_shield/error.h"
#include "dct_shield/random.h"

namespace dct_shield {

namespace {

std::string FormatDouble(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Encoder input for a decoded image: gray replicated to the encoder's
// channel count, then padded to its downsample factor.
PixelImage EncoderInput(const EncoderNet& net, const PixelImage& image) {
  PixelImage in = image;
  if (image.channels == 1 && net.input_channels() == 3) {
    in = PixelImage(image.width, image.height, 3);
    for (int c = 0; c < 3; ++c) in.SetPlane(c, image.GetPlane(0));
  }
  return PadToMultiple(in, net.downsample_factor());
}

PixelImage EncoderInputAdjoint(const EncoderNet& net, const PixelImage& grad,
                               const PixelImage& image) {
  PixelImage g = PadToMultipleAdjoint(grad, image.width, image.height);
  if (image.channels == 1 && net.input_channels() == 3) {
    PixelImage folded(image.width, image.height, 1);
    const size_t n = folded.plane_size();
    for (int c = 0; c < 3; ++c) {
      for (size_t i = 0; i < n; ++i) folded.data[i] += g.data[c * n + i];
    }
    return folded;
  }
  return g;
}

double Sign(double v) { return (v > 0.0) - (v < 0.0); }

}  // namespace

std::string_view VariantName(Variant v) {
  switch (v) {
    case Variant::kBase:
      return "base";
    case Variant::kYOnly:
      return "y_only";
    case Variant::kMasked:
      return "masked";
  }
  return "unknown";
}

Variant ParseVariant(std::string_view name) {
  if (name == "base") return Variant::kBase;
  if (name == "y_only" || name == "y-only") return Variant::kYOnly;
  if (name == "masked") return Variant::kMasked;
  throw Error(ErrorKind::kConfig, "unknown variant '" + std::string(name) +
                                      "' (expected base, y_only or masked)");
}

PixelMask MaskFromImage(const PixelImage& image) {
  PixelMask mask(image.width, image.height);
  for (int c = 0; c < image.channels; ++c) {
    for (int y = 0; y < image.height; ++y) {
      for (int x = 0; x < image.width; ++x) {
        if (image.at(c, y, x) != 0.0) mask.at(y, x) = 1;
      }
    }
  }
  return mask;
}

std::array<double, 3> ImmunizeConfig::EffectiveEpsilon() const {
  if (channel_epsilon) return *channel_epsilon;
  return {epsilon, epsilon, epsilon};
}

ImmunizeConfig PresetConfig(std::string_view name) {
  ImmunizeConfig cfg;
  if (name == "base") return cfg;
  if (name == "y-only" || name == "y_only") {
    cfg.variant = Variant::kYOnly;
    return cfg;
  }
  if (name == "inpaint") {
    cfg.q_alg = 0.9;
    cfg.variant = Variant::kMasked;
    return cfg;
  }
  if (name == "jpeg-robust") {
    cfg.q_alg = 0.85;
    cfg.variant = Variant::kYOnly;
    cfg.robust_mode = true;
    cfg.round_final = true;
    return cfg;
  }
  throw Error(ErrorKind::kConfig,
              "unknown preset '" + std::string(name) +
                  "' (expected base, y-only, inpaint or jpeg-robust)");
}

void ValidateConfig(const ImmunizeConfig& cfg, const PixelImage& image) {
  QualityFromFraction(cfg.q_alg);
  const auto eps = cfg.EffectiveEpsilon();
  for (double e : eps) {
    if (!std::isfinite(e) || e < 0.0) {
      throw Error(ErrorKind::kConfig,
                  "epsilon must be finite and >= 0, got " + FormatDouble(e));
    }
  }
  if (!std::isfinite(cfg.gamma) || cfg.gamma <= 0.0) {
    throw Error(ErrorKind::kConfig,
                "gamma must be > 0, got " + FormatDouble(cfg.gamma));
  }
  if (cfg.iterations < 0) {
    throw Error(ErrorKind::kConfig, "iterations must be >= 0");
  }
  if (cfg.robust_mode) {
    for (double e : eps) {
      if (e < 1.0) {
        throw Error(ErrorKind::kConfig,
                    "robust mode requires epsilon >= 1 so that a perturbed "
                    "coefficient can move by a whole quantization level; got "
                    "epsilon = " +
                        FormatDouble(e));
      }
    }
  }
  if (cfg.variant == Variant::kMasked) {
    if (!cfg.mask) {
      throw Error(ErrorKind::kConfig, "masked variant requires a mask");
    }
  } else if (cfg.mask) {
    throw Error(ErrorKind::kConfig,
                "a mask is only used by the masked variant");
  }
  if (cfg.mask && (cfg.mask->width != image.width ||
                   cfg.mask->height != image.height)) {
    throw Error(ErrorKind::kDimension,
                "mask is " + std::to_string(cfg.mask->width) + "x" +
                    std::to_string(cfg.mask->height) + ", image is " +
                    std::to_string(image.width) + "x" +
                    std::to_string(image.height));
  }
}

size_t Activity::ActiveParameterCount() const {
  size_t n = 0;
  for (size_t c = 0; c < block_active.size(); ++c) {
    if (!channel_enable[c]) continue;
    n += static_cast<size_t>(
             std::count(block_active[c].begin(), block_active[c].end(), 1)) *
         kBlockSize;
  }
  return n;
}

std::vector<std::vector<uint8_t>> BuildBlockMask(const PixelMask& mask,
                                                 const BlockGeometry& geometry,
                                                 int width, int height) {
  if (mask.width != width || mask.height != height) {
    throw Error(ErrorKind::kDimension,
                "mask is " + std::to_string(mask.width) + "x" +
                    std::to_string(mask.height) + ", image is " +
                    std::to_string(width) + "x" + std::to_string(height));
  }
  PixelMask chroma((width + 1) / 2, (height + 1) / 2);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      if (mask.at(y, x)) chroma.at(y / 2, x / 2) = 1;
    }
  }
  std::vector<std::vector<uint8_t>> out(geometry.num_channels);
  for (int c = 0; c < geometry.num_channels; ++c) {
    const PixelMask& m = geometry.IsSubsampled(c) ? chroma : mask;
    const int bw = geometry.blocks_wide[c];
    out[c].assign(geometry.num_blocks(c), 0);
    for (int y = 0; y < m.height; ++y) {
      for (int x = 0; x < m.width; ++x) {
        if (m.at(y, x)) {
          out[c][static_cast<size_t>(y / kBlockDim) * bw + x / kBlockDim] = 1;
        }
      }
    }
  }
  return out;
}

Activity ApplyVariant(const ImmunizeConfig& cfg, const BlockGeometry& geometry,
                      int width, int height) {
  Activity a;
  const int nc = geometry.num_channels;
  for (int c = 0; c < nc; ++c) {
    a.channel_enable[c] = cfg.variant != Variant::kYOnly || c == kY;
  }
  if (cfg.variant == Variant::kMasked) {
    if (!cfg.mask) {
      throw Error(ErrorKind::kConfig, "masked variant requires a mask");
    }
    a.block_active = BuildBlockMask(*cfg.mask, geometry, width, height);
  } else {
    a.block_active.resize(nc);
    for (int c = 0; c < nc; ++c) a.block_active[c].assign(geometry.num_blocks(c), 1);
  }
  return a;
}

double Perturbation::MaxAbs() const {
  double m = 0.0;
  for (const auto& ch : delta.channels) {
    for (double v : ch.coeffs) m = std::max(m, std::abs(v));
  }
  return m;
}

bool Perturbation::RespectsActivity() const {
  for (size_t c = 0; c < delta.channels.size(); ++c) {
    const auto& ch = delta.channels[c];
    for (size_t b = 0; b < ch.num_blocks(); ++b) {
      if (activity.IsActive(static_cast<int>(c), b)) continue;
      for (double v : ch.block(b)) {
        if (v != 0.0) return false;
      }
    }
  }
  return true;
}

Perturbation ZeroPerturbation(const CoefficientTensor& like,
                              Activity activity) {
  if (activity.block_active.size() != like.channels.size()) {
    throw Error(ErrorKind::kShape, "activity does not match the tensor");
  }
  for (size_t c = 0; c < like.channels.size(); ++c) {
    if (activity.block_active[c].size() != like.channels[c].num_blocks()) {
      throw Error(ErrorKind::kShape, "activity does not match the tensor");
    }
  }
  return Perturbation{like.ZerosLike(), std::move(activity)};
}

Perturbation PgdStep(const Perturbation& delta, const CoefficientTensor& grad,
                     double gamma, const std::array<double, 3>& epsilon,
                     StepRule rule) {
  if (!delta.delta.SameShape(grad)) {
    throw Error(ErrorKind::kShape, "gradient does not match the perturbation");
  }
  Perturbation out = delta;
  for (size_t c = 0; c < out.delta.channels.size(); ++c) {
    auto& ch = out.delta.channels[c];
    const auto& g = grad.channels[c];
    const double eps = epsilon[c];
    for (size_t b = 0; b < ch.num_blocks(); ++b) {
      auto dst = ch.block(b);
      if (!out.activity.IsActive(static_cast<int>(c), b)) {
        std::fill(dst.begin(), dst.end(), 0.0);
        continue;
      }
      const auto src = g.block(b);
      for (int k = 0; k < kBlockSize; ++k) {
        const double step = rule == StepRule::kSign ? Sign(src[k]) : src[k];
        dst[k] = std::clamp(dst[k] - gamma * step, -eps, eps);
      }
    }
  }
  return out;
}

CoefficientTensor RoundCoefficients(const CoefficientTensor& coeffs) {
  CoefficientTensor out = coeffs;
  for (auto& ch : out.channels) {
    for (double& v : ch.coeffs) v = RoundHalfAway(v);
  }
  return out;
}

LatentTensor EncodeImage(const EncoderNet& net, const PixelImage& image) {
  return EncoderForward(net, EncoderInput(net, image));
}

Objective::Objective(const EncoderNet& net, QuantMatrices tables,
                     std::optional<LatentTensor> target)
    : net_(&net), tables_(tables), target_(std::move(target)) {}

double Objective::ImageValue(const PixelImage& image) const {
  const LatentTensor z = EncoderForward(*net_, EncoderInput(*net_, image));
  return target_ ? LossTargeted(z, *target_).value : LossNorm(z).value;
}

double Objective::Value(const CoefficientTensor& coeffs) const {
  return ImageValue(
      JpegDecodeTransform(coeffs, tables_, DecodeMode::kAnalysis));
}

Objective::Evaluation Objective::ValueAndGradient(
    const CoefficientTensor& coeffs) const {
  TapedDecode decoded = DecodeForwardWithTape(coeffs, tables_);
  const EncoderPass pass(*net_, EncoderInput(*net_, decoded.image));
  const LossValue loss = target_ ? LossTargeted(pass.latent(), *target_)
                                 : LossNorm(pass.latent());
  const PixelImage pixel_grad =
      EncoderInputAdjoint(*net_, pass.Vjp(loss.cotangent), decoded.image);
  Evaluation out;
  out.loss = loss.value;
  out.gradient = DecodeVjp(decoded.tape, pixel_grad);
  out.tape = std::move(decoded.tape);
  return out;
}

CheckReport FullChainCheck(const Objective& objective,
                           const CoefficientTensor& coeffs,
                           const FiniteDiffOptions& options) {
  if (options.n_probes < 1) {
    throw Error(ErrorKind::kConfig, "gradient check needs at least one probe");
  }
  CheckReport report;
  report.probes = options.n_probes;
  report.tolerance = options.tolerance;
  CoefficientTensor grad = objective.ValueAndGradient(coeffs).gradient;
  if (options.tamper_gradient) options.tamper_gradient(grad);
  Rng rng(options.seed);
  bool all_pass = true;
  for (int p = 0; p < options.n_probes; ++p) {
    const CoefficientTensor dir = RandomUnitDirection(coeffs, rng.Next());
    const double plus = objective.Value(Axpy(coeffs, options.h, dir));
    const double minus = objective.Value(Axpy(coeffs, -options.h, dir));
    const double numeric = (plus - minus) / (2.0 * options.h);
    const double err = RelativeError(Dot(grad, dir), numeric);
    report.relative_errors.push_back(err);
    report.max_relative_error = std::max(report.max_relative_error, err);
    if (!(err < options.tolerance)) all_pass = false;
  }
  report.passed = all_pass;
  return report;
}

ImmunizeResult Immunize(const PixelImage& image, const EncoderNet& net,
                        const ImmunizeConfig& cfg,
                        const IterationObserver& observer) {
  const auto start = std::chrono::steady_clock::now();
  ValidateConfig(cfg, image);
  const int quality = QualityFromFraction(cfg.q_alg);
  const bool round_final = cfg.round_final || cfg.robust_mode;
  const auto eps = cfg.EffectiveEpsilon();

  ImmunizeResult result;
  result.alpha = JpegEncodeTransform(image, quality, cfg.subsampling);
  const QuantMatrices tables = ScaleQuantTables(quality);
  const Objective objective(net, tables, cfg.target);
  Perturbation delta = ZeroPerturbation(
      result.alpha,
      ApplyVariant(cfg, GeometryOf(result.alpha), image.width, image.height));

  ImmunizeReport& report = result.report;
  report.config = cfg;
  report.quality = quality;
  report.active_params = delta.activity.ActiveParameterCount();

  Perturbation best = delta;
  double best_loss = std::numeric_limits<double>::infinity();
  for (int t = 0; t <= cfg.iterations; ++t) {
    const CoefficientTensor x = Axpy(result.alpha, 1.0, delta.delta);
    double loss;
    CoefficientTensor grad;
    if (t < cfg.iterations) {
      Objective::Evaluation ev = objective.ValueAndGradient(x);
      loss = ev.loss;
      grad = std::move(ev.gradient);
    } else {
      loss = objective.Value(x);
    }
    report.loss_trace.push_back(loss);
    if (loss < best_loss) {
      best_loss = loss;
      best = delta;
      report.best_iteration = t;
    }
    report.best_trace.push_back(best_loss);
    if (t == cfg.iterations) break;
    delta = PgdStep(delta, grad, cfg.gamma, eps, cfg.step_rule);
    if (observer) observer(t + 1, delta);
  }
  report.initial_loss = report.loss_trace.front();
  report.final_loss = best_loss;

  if (round_final) {
    for (size_t c = 0; c < best.delta.channels.size(); ++c) {
      const double bound = std::floor(eps[c]);
      for (double& v : best.delta.channels[c].coeffs) {
        v = std::clamp(RoundHalfAway(v), -bound, bound);
      }
    }
  }
  result.perturbed = Axpy(result.alpha, 1.0, best.delta);
  result.image = JpegDecodeTransform(result.perturbed, tables, DecodeMode::kEmit);
  report.output_loss = objective.ImageValue(result.image);
  for (size_t c = 0; c < best.delta.channels.size(); ++c) {
    const auto& ch = best.delta.channels[c];
    for (size_t b = 0; b < ch.num_blocks(); ++b) {
      if (!best.activity.IsActive(static_cast<int>(c), b)) continue;
      for (double v : ch.block(b)) {
        ++report.delta_histogram[static_cast<long>(RoundHalfAway(v))];
      }
    }
  }
  result.delta = std::move(best);
  report.wall_time_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  return result;
}

std::string ReportToCsv(const ImmunizeReport& report) {
  const ImmunizeConfig& cfg = report.config;
  std::string out = "iteration,loss,best_loss\n";
  for (size_t t = 0; t < report.loss_trace.size(); ++t) {
    out += std::to_string(t) + "," + FormatDouble(report.loss_trace[t]) + "," +
           FormatDouble(report.best_trace[t]) + "\n";
  }
  auto line = [&out](const std::string& key, const std::string& value) {
    out += "# " + key + "=" + value + "\n";
  };
  const auto eps = cfg.EffectiveEpsilon();
  line("q_alg", FormatDouble(cfg.q_alg));
  line("quality", std::to_string(report.quality));
  line("epsilon", FormatDouble(eps[0]) + ";" + FormatDouble(eps[1]) + ";" +
                      FormatDouble(eps[2]));
  line("gamma", FormatDouble(cfg.gamma));
  line("iterations", std::to_string(cfg.iterations));
  line("variant", std::string(VariantName(cfg.variant)));
  line("subsampling", cfg.subsampling == Subsampling::k420 ? "420" : "444");
  line("step_rule", cfg.step_rule == StepRule::kSign ? "sign" : "gradient");
  line("round_final", cfg.round_final || cfg.robust_mode ? "true" : "false");
  line("robust_mode", cfg.robust_mode ? "true" : "false");
  line("targeted", cfg.target ? "true" : "false");
  line("seed", std::to_string(cfg.seed));
  line("active_params", std::to_string(report.active_params));
  line("initial_loss", FormatDouble(report.initial_loss));
  line("final_loss", FormatDouble(report.final_loss));
  line("best_iteration", std::to_string(report.best_iteration));
  line("output_loss", FormatDouble(report.output_loss));
  line("reduction_ratio",
       FormatDouble(report.initial_loss > 0.0
                        ? report.final_loss / report.initial_loss
                        : 1.0));
  std::string hist;
  for (const auto& [level, count] : report.delta_histogram) {
    if (!hist.empty()) hist += ";";
    hist += std::to_string(level) + ":" + std::to_string(count);
  }
  line("delta_histogram", hist);
  return out;
}

}  // namespace dct_shield
