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

// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Run from ctest or directly.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <opencv2/core.hpp>

#include "dct_shield/cli.h"
#include "dct_shield/encoder.h"
#include "dct_shield/error.h"
#include "dct_shield/eval.h"
#include "dct_shield/grad_engine.h"
#include "dct_shield/jpeg_codec.h"
#include "dct_shield/jpeg_core.h"
#include "dct_shield/png_io.h"
#include "dct_shield/random.h"
#include "dct_shield/shield.h"
#include "libjpeg_oracle.h"
#include "opencv_oracle.h"
#include "test_support.h"

namespace dct_shield {
namespace {

namespace fs = std::filesystem;
using testing::LoadFixture;

using Clock = std::chrono::steady_clock;

double SecondsSince(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Outcome {
  bool pass = true;
  std::string detail;
};

// Appends to the detail string and ANDs the condition into the verdict.
class Verdict {
 public:
  void Check(bool ok, const std::string& what) {
    if (!ok) {
      pass_ = false;
      failures_ += (failures_.empty() ? "" : "; ") + what;
    }
  }
  void Note(const std::string& s) { notes_ += (notes_.empty() ? "" : " ") + s; }
  Outcome Done() const {
    return {pass_, failures_.empty() ? notes_ : notes_ + " | " + failures_};
  }

 private:
  bool pass_ = true;
  std::string notes_;
  std::string failures_;
};

std::string Fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

const EncoderNet& Net() {
  static const EncoderNet net = SurrogateInit(0);
  return net;
}

// The five colour fixtures used by the optimisation criteria.
const std::vector<std::string>& DescentFixtures() {
  static const std::vector<std::string> names = {
      "astronaut_256", "chelsea_256", "coffee_256", "rocket_256",
      "retina_256"};
  return names;
}

// ---------------------------------------------------------------------------

Outcome DctRoundTrip() {
  Verdict v;
  const auto start = Clock::now();
  Rng rng(2024);
  double worst = 0.0, worst_parseval = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::array<double, kBlockSize> b;
    for (double& x : b) x = rng.Uniform(-128.0, 127.0);
    const auto f = ForwardDctBlock(b);
    const auto back = InverseDctBlock(f);
    double e_pix = 0.0, e_freq = 0.0;
    for (int k = 0; k < kBlockSize; ++k) {
      worst = std::max(worst, std::abs(back[k] - b[k]));
      e_pix += b[k] * b[k];
      e_freq += f[k] * f[k];
    }
    worst_parseval =
        std::max(worst_parseval, std::abs(e_pix - e_freq) / std::max(1.0, e_pix));
  }
  const double secs = SecondsSince(start);
  v.Note("max_abs=" + Fmt("%.3g", worst) + " parseval_rel=" +
         Fmt("%.3g", worst_parseval) + " time=" + Fmt("%.3fs", secs));
  v.Check(worst < 1e-10, "round trip error >= 1e-10");
  v.Check(worst_parseval <= 1e-8, "Parseval error > 1e-8");
  v.Check(secs < 1.0, "runtime >= 1 s");
  return v.Done();
}

Outcome FullChainGradient() {
  Verdict v;
  const auto start = Clock::now();
  const Objective obj(Net(), ScaleQuantTables(95));
  int instances = 0, probes = 0;
  double worst = 0.0;
  for (uint64_t seed = 0; instances < 5 && seed < 50; ++seed) {
    const PixelImage img = testing::RandomImage(16, 16, 3, 100 + seed, 64, 192);
    const CoefficientTensor alpha = JpegEncodeTransform(img, 95);
    if (obj.ValueAndGradient(alpha).tape.CountClampedOutputs() != 0) continue;
    FiniteDiffOptions opt;
    opt.n_probes = 10;
    opt.h = 1e-3;
    opt.tolerance = 1e-4;
    opt.seed = seed;
    const CheckReport rep = FullChainCheck(obj, alpha, opt);
    ++instances;
    probes += rep.probes;
    worst = std::max(worst, rep.max_relative_error);
    v.Check(rep.passed, "instance seed " + std::to_string(seed) + " failed");
  }
  const double secs = SecondsSince(start);
  v.Note("instances=" + std::to_string(instances) + " probes=" +
         std::to_string(probes) + " max_rel=" + Fmt("%.3g", worst) +
         " time=" + Fmt("%.2fs", secs));
  v.Check(instances >= 5, "fewer than 5 clamp-inactive instances");
  v.Check(probes >= 50, "fewer than 50 probes");
  v.Check(worst < 1e-4, "relative error >= 1e-4");
  v.Check(secs < 30.0, "runtime >= 30 s");
  return v.Done();
}

Outcome Codec() {
  Verdict v;
  const auto start = Clock::now();

  // (a) entropy round trip.
  Rng rng(9);
  int exact = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int w = 8 + static_cast<int>(rng.Below(120));
    const int h = 8 + static_cast<int>(rng.Below(120));
    const int channels = trial % 5 == 0 ? 1 : 3;
    const Subsampling ss = trial % 2 ? Subsampling::k420 : Subsampling::k444;
    const int range = trial % 3 == 0 ? 1000 : 16;
    CoefficientTensor t =
        testing::RandomIntegerTensor(w, h, channels, ss, 5000 + trial, range);
    const QuantMatrices q = ScaleQuantTables(1 + static_cast<int>(rng.Below(100)));
    t.quality = q.quality;
    try {
      if (ReadJfif(WriteJfif(t, q)).coefficients == t) ++exact;
    } catch (const Error&) {
    }
  }
  v.Note("roundtrip=" + std::to_string(exact) + "/200");
  v.Check(exact == 200, "round trip not bit-exact");

  // (b) an independent baseline decoder on our streams.
  int worst_dev = 0, decoded = 0;
  for (const std::string& name : testing::AllFixtures()) {
    const PixelImage img = LoadFixture(name);
    const CoefficientTensor t = JpegEncodeTransform(img, 95);
    const auto stream = WriteJfif(t, ScaleQuantTables(95));
    try {
      const PixelImage ref = testing::LibjpegDecode(stream, {.float_idct = true});
      const PixelImage ours = JpegDecodeTransform(t, DecodeMode::kEmit);
      if (!ref.SameShape(ours)) {
        v.Check(false, name + " shape mismatch");
        continue;
      }
      worst_dev = std::max(worst_dev, LinfPixel(ref, ours));
      ++decoded;
    } catch (const std::exception& e) {
      v.Check(false, name + ": libjpeg rejected the stream: " + e.what());
    }
  }
  v.Note("libjpeg_fixtures=" + std::to_string(decoded) +
         " max_dev=" + std::to_string(worst_dev));
  v.Check(decoded == 10, "not all 10 fixtures decoded");
  v.Check(worst_dev <= 1, "deviation > 1");

  // (c) fuzz: half pure noise, half mutations of a valid stream.
  const auto good = WriteJfif(
      JpegEncodeTransform(testing::RandomImage(40, 24, 3, 8), 85),
      ScaleQuantTables(85));
  int noise_rejected = 0, mutated_rejected = 0, mutated_parsed = 0, other = 0;
  double slowest = 0.0;
  constexpr int kStreams = 100000;
  for (int trial = 0; trial < kStreams; ++trial) {
    std::vector<uint8_t> s;
    const bool noise = trial % 2 == 0;
    if (noise) {
      s.resize(rng.Below(2048));
      for (uint8_t& b : s) b = static_cast<uint8_t>(rng.Below(256));
      // Every fourth noise stream starts with SOI to get past the first check.
      if (trial % 8 == 0 && s.size() >= 2) {
        s[0] = 0xFF;
        s[1] = 0xD8;
      }
    } else {
      s = good;
      const int edits = 1 + static_cast<int>(rng.Below(8));
      for (int e = 0; e < edits; ++e) {
        s[rng.Below(s.size())] = static_cast<uint8_t>(rng.Below(256));
      }
      if (trial % 10 == 1) s.resize(rng.Below(s.size()));
    }
    const auto t0 = Clock::now();
    try {
      ReadJfif(s);
      if (!noise) ++mutated_parsed;
    } catch (const Error&) {
      (noise ? noise_rejected : mutated_rejected)++;
    } catch (...) {
      ++other;
    }
    slowest = std::max(slowest, SecondsSince(t0));
  }
  v.Note("fuzz=" + std::to_string(kStreams) + " noise_rejected=" +
         std::to_string(noise_rejected) + " mutated_rejected=" +
         std::to_string(mutated_rejected) + " mutated_parsed=" +
         std::to_string(mutated_parsed) + " slowest=" + Fmt("%.3gs", slowest));
  v.Check(noise_rejected == kStreams / 2, "a noise stream was accepted");
  v.Check(other == 0, "non-library exception escaped");
  v.Check(slowest < 1.0, "a stream took >= 1 s");

  const double secs = SecondsSince(start);
  v.Note("time=" + Fmt("%.1fs", secs));
  v.Check(secs < 300.0, "runtime >= 5 min");
  return v.Done();
}

Outcome ParameterCounts() {
  Verdict v;
  const PixelImage img = LoadFixture("astronaut_512");
  auto count = [&](const char* preset) {
    const ImmunizeConfig cfg = PresetConfig(preset);
    const BlockGeometry g =
        ComputeGeometry(img.width, img.height, img.channels, cfg.subsampling);
    return ApplyVariant(cfg, g, img.width, img.height).ActiveParameterCount();
  };
  const size_t base = count("base"), y_only = count("y-only");
  const size_t hw = static_cast<size_t>(img.width) * img.height;
  v.Note("base=" + std::to_string(base) + " y_only=" + std::to_string(y_only));
  v.Check(base == 393216 && base == 3 * hw / 2, "base count");
  v.Check(y_only == 262144 && y_only == hw, "y_only count");
  return v.Done();
}

// Reduction ratios final/initial from a verified run (surrogate seed 0,
// defaults, 200 iterations), in DescentFixtures() order.
constexpr std::array<double, 5> kGoldenDescentRatio = {
    0.57793528904532854, 0.14405920055979629, 0.50658153784964366,
    0.28690108747336585, 0.45273121116058884};
constexpr double kGoldenRatioTolerance = 1e-9;

Outcome Descent() {
  Verdict v;
  const auto start = Clock::now();
  ImmunizeConfig cfg;  // q_alg 0.95, epsilon 1, gamma 0.1
  cfg.iterations = 200;
  const auto& names = DescentFixtures();
  for (size_t i = 0; i < names.size(); ++i) {
    const ImmunizeReport r = Immunize(LoadFixture(names[i]), Net(), cfg).report;
    const double ratio = r.final_loss / r.initial_loss;
    v.Note(names[i] + "=" + Fmt("%.17g", ratio));
    v.Check(r.final_loss < r.initial_loss, names[i] + " did not descend");
    bool monotone = true;
    for (size_t k = 1; k < r.best_trace.size(); ++k) {
      monotone = monotone && r.best_trace[k] <= r.best_trace[k - 1];
    }
    v.Check(monotone, names[i] + " best trace increases");
    v.Check(std::abs(ratio - kGoldenDescentRatio[i]) <= kGoldenRatioTolerance,
            names[i] + " ratio differs from golden " +
                Fmt("%.17g", kGoldenDescentRatio[i]));
  }
  const double secs = SecondsSince(start);
  v.Note("time=" + Fmt("%.1fs", secs));
  v.Check(secs < 600.0, "runtime >= 10 min");
  return v.Done();
}

// Changed Y positions (delta != 0) whose level survives purification at
// `quality`: the purified image re-encoded on the quality-95 grid still
// carries alpha + delta there.
double Survival(const ImmunizeResult& r, int quality) {
  const PixelImage purified = Recompress(r.image, quality, Subsampling::k444);
  const CoefficientTensor back =
      JpegEncodeTransform(purified, r.report.quality, Subsampling::k444);
  const auto& a = r.alpha.channels[kY].coeffs;
  const auto& p = r.perturbed.channels[kY].coeffs;
  const auto& b = back.channels[kY].coeffs;
  size_t changed = 0, kept = 0;
  for (size_t k = 0; k < a.size(); ++k) {
    if (p[k] == a[k]) continue;
    ++changed;
    if (b[k] == p[k]) ++kept;
  }
  return changed ? static_cast<double>(kept) / changed : 0.0;
}

// Calibrated on the five fixtures by an initial run (s95 >= 0.783,
// s65 <= 0.121), then pinned with margin.
constexpr double kMinSurvival95 = 0.75;
constexpr double kMaxSurvival65 = 0.15;

Outcome JpegRobustness() {
  Verdict v;
  ImmunizeConfig cfg;
  cfg.round_final = true;
  cfg.subsampling = Subsampling::k444;
  cfg.iterations = 200;
  for (const std::string& name : DescentFixtures()) {
    const ImmunizeResult r = Immunize(LoadFixture(name), Net(), cfg);
    // Through the codec at quality 95 and back.
    const auto stream = WriteJfif(
        JpegEncodeTransform(r.image, 95, Subsampling::k444), ScaleQuantTables(95));
    const JfifContents reread = ReadJfif(stream);
    const ChannelCoeffStats y =
        CoeffDiff(r.perturbed, reread.coefficients).channels[kY];
    const double s95 = Survival(r, 95), s65 = Survival(r, 65);
    v.Note(name + ":within1=" + Fmt("%.4f", y.within_one_fraction()) +
           ",s95=" + Fmt("%.4f", s95) + ",s65=" + Fmt("%.4f", s65));
    v.Check(y.within_one_fraction() >= 0.95, name + " within-one < 95%");
    v.Check(s95 > s65, name + " survival not higher at 95");
    v.Check(s95 >= kMinSurvival95, name + " s95 below calibration");
    v.Check(s65 <= kMaxSurvival65, name + " s65 above calibration");
  }
  return v.Done();
}

Outcome EpsilonRule() {
  Verdict v;
  ImmunizeConfig cfg = PresetConfig("jpeg-robust");
  cfg.epsilon = 0.5;
  const PixelImage img = LoadFixture("coffee_256");
  std::string message;
  try {
    ValidateConfig(cfg, img);
  } catch (const Error& e) {
    message = e.what();
  }
  v.Note("message=\"" + message + "\"");
  v.Check(!message.empty(), "not rejected");
  v.Check(message.find("epsilon >= 1") != std::string::npos,
          "message does not cite epsilon >= 1");
  bool ran = false;
  try {
    cfg.iterations = 1;
    Immunize(img, Net(), cfg);
    ran = true;
  } catch (const Error&) {
  }
  v.Check(!ran, "Immunize accepted epsilon 0.5");
  return v.Done();
}

Outcome Metrics() {
  Verdict v;
  double worst_psnr = 0.0, worst_ssim = 0.0;
  bool identities = true;
  for (const std::string& name : testing::AllFixtures()) {
    const PixelImage a = LoadFixture(name);
    const PixelImage b = Recompress(a, 75);
    worst_psnr = std::max(
        worst_psnr,
        std::abs(Psnr(a, b) - cv::PSNR(testing::ToMat(a), testing::ToMat(b), 255.0)));
    worst_ssim = std::max(
        worst_ssim, std::abs(Ssim(a, b) - testing::OpenCvSsim(testing::LumaMat(a),
                                                               testing::LumaMat(b))));
    if (a.channels == 3) {
      worst_ssim = std::max(worst_ssim,
                            std::abs(Ssim(a, b, SsimMode::kRgbMean) -
                                     testing::OpenCvSsimRgbMean(a, b)));
    }
    identities = identities &&
                 Psnr(a, a) == std::numeric_limits<double>::infinity() &&
                 Ssim(a, a) == 1.0 && Ssim(a, a, SsimMode::kRgbMean) == 1.0;
  }
  v.Note("max_psnr_diff=" + Fmt("%.3g", worst_psnr) +
         " max_ssim_diff=" + Fmt("%.3g", worst_ssim));
  v.Check(worst_psnr <= 0.01, "PSNR differs by > 0.01 dB");
  v.Check(worst_ssim <= 1e-3, "SSIM differs by > 1e-3");
  v.Check(identities, "self-compare identities");
  return v.Done();
}

std::string Slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome Determinism() {
  Verdict v;
  const std::string dir = testing::FreshTempDir("acceptance_determinism");
  auto run = [&](const std::string& out) {
    std::ostringstream o, e;
    return RunCli({"dct-shield", "immunize", testing::DataPath("coffee_256.png"),
                   testing::DataPath("camera_256.png"), "--out", dir + "/" + out,
                   "--iterations", "30", "--seed", "7", "--save-jpeg",
                   "--threads", "2"},
                  o, e);
  };
  const int c1 = run("a"), c2 = run("b");
  v.Check(c1 == kExitOk && c2 == kExitOk, "immunize failed");
  size_t files = 0;
  if (fs::exists(dir + "/a")) {
    for (const auto& entry : fs::directory_iterator(dir + "/a")) {
      const fs::path other = fs::path(dir) / "b" / entry.path().filename();
      ++files;
      v.Check(fs::exists(other) && Slurp(entry.path()) == Slurp(other),
              entry.path().filename().string() + " differs");
    }
  }
  v.Note("files=" + std::to_string(files));
  v.Check(files >= 6, "expected image, jpeg and report per input");
  return v.Done();
}

}  // namespace
}  // namespace dct_shield

int main() {
  using namespace dct_shield;
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria =
      {
          {"dct_round_trip", DctRoundTrip},
          {"full_chain_gradient", FullChainGradient},
          {"codec", Codec},
          {"parameter_counts", ParameterCounts},
          {"optimization_descent", Descent},
          {"jpeg_robustness", JpegRobustness},
          {"epsilon_rule", EpsilonRule},
          {"metrics", Metrics},
          {"determinism", Determinism},
      };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
    std::fflush(stdout);
    failed += !o.pass;
  }
  std::printf("%d/%zu criteria passed\n",
              static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed ? 1 : 0;
}
