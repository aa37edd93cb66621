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

#include "dct_shield/cli.h"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <thread>

#include "dct_shield/encoder.h"
#include "dct_shield/error.h"
#include "dct_shield/eval.h"
#include "dct_shield/grad_engine.h"
#include "dct_shield/jpeg_codec.h"
#include "dct_shield/jpeg_core.h"
#include "dct_shield/png_io.h"
#include "dct_shield/random.h"
#include "dct_shield/shield.h"

namespace dct_shield {

namespace {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string ShortFmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

std::string Trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

Subsampling ParseSubsampling(const std::string& s) {
  if (s == "420") return Subsampling::k420;
  if (s == "444") return Subsampling::k444;
  throw UsageError("subsampling must be 420 or 444, got '" + s + "'");
}

std::string SubsamplingName(Subsampling s) {
  return s == Subsampling::k420 ? "420" : "444";
}

std::vector<int> ParseIntList(const std::string& s, const char* what) {
  std::vector<int> out;
  size_t pos = 0;
  while (pos <= s.size()) {
    const size_t comma = std::min(s.find(',', pos), s.size());
    const std::string item = Trim(std::string_view(s).substr(pos, comma - pos));
    if (item.empty()) throw UsageError(std::string("empty entry in ") + what);
    char* end = nullptr;
    const long v = std::strtol(item.c_str(), &end, 10);
    if (*end != '\0') {
      throw UsageError(std::string(what) + ": '" + item + "' is not an integer");
    }
    out.push_back(static_cast<int>(v));
    pos = comma + 1;
  }
  return out;
}

std::array<double, 3> ParseEpsilonTriple(const std::string& s) {
  std::array<double, 3> out{};
  size_t pos = 0;
  for (int i = 0; i < 3; ++i) {
    const size_t comma = std::min(s.find(',', pos), s.size());
    const std::string item = Trim(std::string_view(s).substr(pos, comma - pos));
    char* end = nullptr;
    out[i] = std::strtod(item.c_str(), &end);
    if (item.empty() || *end != '\0' || (i < 2 && comma == s.size())) {
      throw UsageError("--epsilon-ycbcr expects three comma-separated numbers");
    }
    pos = comma + 1;
  }
  if (pos <= s.size()) {
    throw UsageError("--epsilon-ycbcr expects three comma-separated numbers");
  }
  return out;
}

std::vector<std::string> ExpandInputs(const std::vector<std::string>& inputs) {
  std::vector<std::string> out;
  for (const std::string& in : inputs) {
    if (fs::is_directory(in)) {
      std::vector<std::string> found;
      for (const auto& entry : fs::directory_iterator(in)) {
        if (entry.is_regular_file() && entry.path().extension() == ".png") {
          found.push_back(entry.path().string());
        }
      }
      std::sort(found.begin(), found.end());
      out.insert(out.end(), found.begin(), found.end());
    } else {
      out.push_back(in);
    }
  }
  if (out.empty()) throw UsageError("no input images");
  return out;
}

std::string Stem(const std::string& path) {
  return fs::path(path).stem().string();
}

void EnsureDir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::kIo, "cannot create '" + dir + "': " + ec.message());
}

void WriteText(const std::string& path, const std::string& text) {
  WriteFileBytes(path, std::vector<uint8_t>(text.begin(), text.end()));
}

// Runs fn(i) for i in [0, n) on up to `threads` workers. fn must not throw.
template <typename Fn>
void ParallelFor(size_t n, int threads, Fn fn) {
  std::atomic<size_t> next{0};
  auto worker = [&] {
    for (size_t i; (i = next.fetch_add(1)) < n;) fn(i);
  };
  const int extra = std::max(0, std::min<int>(threads, static_cast<int>(n)) - 1);
  std::vector<std::thread> pool;
  for (int t = 0; t < extra; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
}

bool IsJpegPath(const std::string& path) {
  std::string ext = fs::path(path).extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return ext == ".jpg" || ext == ".jpeg";
}

// ---------------------------------------------------------------------------
// immunize

struct ImmunizeArgs {
  std::vector<std::string> inputs;
  std::string out;
  std::string config;
  std::string preset;
  double q_alg = 0.95;
  double epsilon = 1.0;
  std::string epsilon_ycbcr;
  double gamma = 0.1;
  int iterations = 1000;
  std::string variant = "base";
  std::string mask;
  bool round_final = false;
  bool robust = false;
  uint64_t seed = 0;
  std::string subsampling = "420";
  std::string step_rule = "sign";
  std::string weights;
  std::string target;
  bool save_jpeg = false;
  int threads = 0;
  bool verbose = false;
};

void AddImmunize(CLI::App& app, ImmunizeArgs& a) {
  CLI::App* sub = app.add_subcommand(
      "immunize", "Protect images; writes <stem>.immunized.png and "
                  "<stem>.report.csv per input");
  sub->add_option("inputs", a.inputs, "PNG files or directories")->required();
  sub->add_option("--out", a.out, "Output directory")->required();
  sub->add_option("--config", a.config, "key = value config file");
  sub->add_option("--preset", a.preset)
      ->check(CLI::IsMember({"base", "y-only", "inpaint", "jpeg-robust"}));
  sub->add_option("--q-alg", a.q_alg, "Quality fraction in (0, 1]");
  sub->add_option("--epsilon", a.epsilon, "L-inf bound on level changes");
  sub->add_option("--epsilon-ycbcr", a.epsilon_ycbcr,
                  "Per-channel bounds, e.g. 1,0.5,0.5");
  sub->add_option("--gamma", a.gamma, "Step size");
  sub->add_option("--iterations", a.iterations);
  sub->add_option("--variant", a.variant)
      ->check(CLI::IsMember({"base", "y_only", "y-only", "masked"}));
  sub->add_option("--mask", a.mask, "Mask PNG; nonzero pixels are protected");
  sub->add_flag("--round-final", a.round_final,
                "Round the final perturbation to whole levels");
  sub->add_flag("--robust", a.robust, "Robust mode (needs epsilon >= 1)");
  sub->add_option("--seed", a.seed, "Surrogate encoder seed");
  sub->add_option("--subsampling", a.subsampling)
      ->check(CLI::IsMember({"420", "444"}));
  sub->add_option("--step-rule", a.step_rule)
      ->check(CLI::IsMember({"sign", "gradient"}));
  sub->add_option("--weights", a.weights, "DSW1 weight file (default: surrogate)");
  sub->add_option("--target", a.target, "Target image for the targeted loss");
  sub->add_flag("--save-jpeg", a.save_jpeg,
                "Also write <stem>.immunized.jpg from the rounded coefficients");
  sub->add_option("--threads", a.threads, "Worker threads across images");
  sub->add_flag("-v,--verbose", a.verbose);
}

EncoderNet LoadNet(const std::string& weights, uint64_t seed) {
  return weights.empty() ? SurrogateInit(seed) : LoadWeights(weights);
}

int CmdImmunize(const CLI::App& sub, const ImmunizeArgs& a, std::ostream& out,
                std::ostream& err) {
  ImmunizeConfig cfg = a.preset.empty() ? ImmunizeConfig{} : PresetConfig(a.preset);
  if (sub.count("--q-alg")) cfg.q_alg = a.q_alg;
  if (sub.count("--epsilon")) cfg.epsilon = a.epsilon;
  if (sub.count("--epsilon-ycbcr")) {
    cfg.channel_epsilon = ParseEpsilonTriple(a.epsilon_ycbcr);
  }
  if (sub.count("--gamma")) cfg.gamma = a.gamma;
  if (sub.count("--iterations")) cfg.iterations = a.iterations;
  if (sub.count("--variant")) cfg.variant = ParseVariant(a.variant);
  if (sub.count("--round-final")) cfg.round_final = a.round_final;
  if (sub.count("--robust")) cfg.robust_mode = a.robust;
  if (sub.count("--subsampling")) cfg.subsampling = ParseSubsampling(a.subsampling);
  if (sub.count("--step-rule")) {
    cfg.step_rule = a.step_rule == "sign" ? StepRule::kSign : StepRule::kGradient;
  }
  cfg.seed = a.seed;
  if (cfg.variant == Variant::kMasked && a.mask.empty()) {
    throw UsageError("the masked variant needs --mask");
  }
  if (cfg.variant != Variant::kMasked && !a.mask.empty()) {
    throw UsageError("--mask is only used with --variant masked");
  }
  const std::vector<std::string> inputs = ExpandInputs(a.inputs);
  if (!a.mask.empty()) cfg.mask = MaskFromImage(ReadPng(a.mask));
  const EncoderNet net = LoadNet(a.weights, cfg.seed);
  if (!a.target.empty()) cfg.target = EncodeImage(net, ReadPng(a.target));
  EnsureDir(a.out);

  std::vector<std::string> messages(inputs.size());
  std::vector<std::string> failures(inputs.size());
  ParallelFor(inputs.size(), ResolveThreadCount(a.threads), [&](size_t i) {
    try {
      const PixelImage image = ReadPng(inputs[i]);
      const ImmunizeResult r = Immunize(image, net, cfg);
      const std::string base = (fs::path(a.out) / Stem(inputs[i])).string();
      WritePng(base + ".immunized.png", r.image);
      WriteText(base + ".report.csv", ReportToCsv(r.report));
      if (a.save_jpeg) {
        WriteFileBytes(base + ".immunized.jpg",
                       WriteJfif(RoundCoefficients(r.perturbed),
                                 ScaleQuantTables(r.report.quality)));
      }
      messages[i] = inputs[i] + " -> " + base + ".immunized.png loss " +
                    ShortFmt(r.report.initial_loss) + " -> " +
                    ShortFmt(r.report.final_loss);
      if (a.verbose) {
        messages[i] += " (" + ShortFmt(r.report.wall_time_seconds) + " s)";
      }
    } catch (const std::exception& e) {
      failures[i] = e.what();
    }
  });
  size_t failed = 0;
  for (size_t i = 0; i < inputs.size(); ++i) {
    if (failures[i].empty()) {
      out << messages[i] << "\n";
    } else {
      ++failed;
      err << "error: " << inputs[i] << ": " << failures[i] << "\n";
    }
  }
  if (failed) {
    err << failed << " of " << inputs.size() << " images failed\n";
    return kExitDomainError;
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// purify

struct PurifyArgs {
  std::vector<std::string> inputs;
  std::string out;
  std::string config;
  std::string jpeg;
  bool sweep = false;
  int crop_resize = -1;
  bool nearest = false;
  double noise = -1.0;
  uint64_t noise_seed = 0;
  std::string subsampling = "420";
  std::string metrics;
  int threads = 0;
};

void AddPurify(CLI::App& app, PurifyArgs& a) {
  CLI::App* sub = app.add_subcommand(
      "purify", "Apply purifiers and write outputs plus a metrics CSV");
  sub->add_option("inputs", a.inputs, "PNG files or directories")->required();
  sub->add_option("--out", a.out, "Output directory")->required();
  sub->add_option("--config", a.config, "key = value config file");
  sub->add_option("--jpeg", a.jpeg, "Comma-separated JPEG qualities");
  sub->add_flag("--sweep", a.sweep, "JPEG at 65,75,85,95");
  sub->add_option("--crop-resize", a.crop_resize, "Border in pixels");
  sub->add_flag("--nearest", a.nearest, "Nearest instead of bilinear resize");
  sub->add_option("--noise", a.noise, "Gaussian noise sigma");
  sub->add_option("--noise-seed", a.noise_seed);
  sub->add_option("--subsampling", a.subsampling)
      ->check(CLI::IsMember({"420", "444"}));
  sub->add_option("--metrics", a.metrics,
                  "Metrics CSV path (default <out>/purify_metrics.csv)");
  sub->add_option("--threads", a.threads, "Worker threads across images");
}

struct Purifier {
  std::string name;     // CSV purifier column
  std::string setting;  // CSV setting column
  std::string suffix;   // output file suffix
  std::function<PixelImage(const PixelImage&)> apply;
};

int CmdPurify(const CLI::App& sub, const PurifyArgs& a, std::ostream& out,
              std::ostream& err) {
  std::vector<int> qualities;
  if (!a.jpeg.empty()) qualities = ParseIntList(a.jpeg, "--jpeg");
  if (a.sweep) {
    for (int q : {65, 75, 85, 95}) {
      if (std::find(qualities.begin(), qualities.end(), q) == qualities.end()) {
        qualities.push_back(q);
      }
    }
  }
  const Subsampling ss = ParseSubsampling(a.subsampling);
  std::vector<Purifier> purifiers;
  for (int q : qualities) {
    if (q < 1 || q > 100) throw UsageError("JPEG quality must be in 1..100");
    purifiers.push_back({"jpeg", std::to_string(q), "jpeg" + std::to_string(q),
                         [q, ss](const PixelImage& img) {
                           return Recompress(img, q, ss);
                         }});
  }
  if (sub.count("--crop-resize")) {
    const int border = a.crop_resize;
    const ResizeFilter f =
        a.nearest ? ResizeFilter::kNearest : ResizeFilter::kBilinear;
    purifiers.push_back({"crop_resize", std::to_string(border),
                         "crop" + std::to_string(border),
                         [border, f](const PixelImage& img) {
                           return PurifyCropResize(img, border, f);
                         }});
  }
  if (sub.count("--noise")) {
    const double sigma = a.noise;
    const uint64_t seed = a.noise_seed;
    purifiers.push_back({"gaussian", ShortFmt(sigma), "noise" + ShortFmt(sigma),
                         [sigma, seed](const PixelImage& img) {
                           return PurifyGaussian(img, sigma, seed);
                         }});
  }
  if (purifiers.empty()) {
    throw UsageError("no purifier selected (use --jpeg, --sweep, "
                     "--crop-resize or --noise)");
  }
  const std::vector<std::string> inputs = ExpandInputs(a.inputs);
  EnsureDir(a.out);

  std::vector<std::string> rows(inputs.size());
  std::vector<std::string> failures(inputs.size());
  ParallelFor(inputs.size(), ResolveThreadCount(a.threads), [&](size_t i) {
    try {
      const PixelImage image = ReadPng(inputs[i]);
      const std::string stem = Stem(inputs[i]);
      for (const Purifier& p : purifiers) {
        const PixelImage purified = p.apply(image);
        WritePng((fs::path(a.out) / (stem + "." + p.suffix + ".png")).string(),
                 purified);
        rows[i] += MetricsCsvRow(
            {fs::path(inputs[i]).filename().string(), p.name, p.setting, CompareImages(image, purified)});
      }
    } catch (const std::exception& e) {
      failures[i] = e.what();
    }
  });
  std::string csv = MetricsCsvHeader();
  size_t failed = 0;
  for (size_t i = 0; i < inputs.size(); ++i) {
    csv += rows[i];
    if (!failures[i].empty()) {
      ++failed;
      err << "error: " << inputs[i] << ": " << failures[i] << "\n";
    }
  }
  const std::string metrics_path =
      a.metrics.empty() ? (fs::path(a.out) / "purify_metrics.csv").string()
                        : a.metrics;
  WriteText(metrics_path, csv);
  out << "wrote " << metrics_path << "\n";
  if (failed) {
    err << failed << " of " << inputs.size() << " images failed\n";
    return kExitDomainError;
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// metrics

struct MetricsArgs {
  std::string reference;
  std::string test;
  std::string csv;
  bool ssim_rgb = false;
  int quality = 0;
  std::string subsampling = "420";
};

void AddMetrics(CLI::App& app, MetricsArgs& a) {
  CLI::App* sub = app.add_subcommand("metrics", "Compare two images (CSV)");
  sub->add_option("reference", a.reference)->required();
  sub->add_option("test", a.test)->required();
  sub->add_option("--csv", a.csv, "Write the CSV here instead of stdout");
  sub->add_flag("--ssim-rgb", a.ssim_rgb, "Mean SSIM over RGB channels");
  sub->add_option("--quality", a.quality,
                  "Also compare quantized coefficients at this quality")
      ->check(CLI::Range(1, 100));
  sub->add_option("--subsampling", a.subsampling)
      ->check(CLI::IsMember({"420", "444"}));
}

int CmdMetrics(const MetricsArgs& a, std::ostream& out) {
  const PixelImage ref = ReadPng(a.reference);
  const PixelImage test = ReadPng(a.test);
  MetricRow row;
  row.image = fs::path(a.test).filename().string();
  row.purifier = "none";
  row.metrics = CompareImages(
      ref, test, a.ssim_rgb ? SsimMode::kRgbMean : SsimMode::kLuma);
  if (a.quality > 0) {
    const Subsampling ss = ParseSubsampling(a.subsampling);
    row.setting = std::to_string(a.quality);
    row.metrics.coeff_change =
        CoeffDiff(JpegEncodeTransform(ref, a.quality, ss),
                  JpegEncodeTransform(test, a.quality, ss));
  }
  const std::string csv = MetricsCsvHeader() + MetricsCsvRow(row);
  if (a.csv.empty()) {
    out << csv;
  } else {
    WriteText(a.csv, csv);
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// inspect

struct InspectArgs {
  std::vector<std::string> inputs;
  std::string config;
  double q_alg = 0.95;
  std::string variant = "base";
  std::string mask;
  std::string subsampling = "420";
  std::string format = "json";
};

void AddInspect(CLI::App& app, InspectArgs& a) {
  CLI::App* sub = app.add_subcommand(
      "inspect", "Coefficient statistics and active-parameter counts");
  sub->add_option("inputs", a.inputs, "PNG or JPEG files")->required();
  sub->add_option("--config", a.config, "key = value config file");
  sub->add_option("--q-alg", a.q_alg);
  sub->add_option("--variant", a.variant)
      ->check(CLI::IsMember({"base", "y_only", "y-only", "masked"}));
  sub->add_option("--mask", a.mask);
  sub->add_option("--subsampling", a.subsampling)
      ->check(CLI::IsMember({"420", "444"}));
  sub->add_option("--format", a.format)->check(CLI::IsMember({"json", "kv"}));
}

int CmdInspect(const InspectArgs& a, std::ostream& out) {
  ImmunizeConfig cfg;
  cfg.variant = ParseVariant(a.variant);
  cfg.q_alg = a.q_alg;
  if (cfg.variant == Variant::kMasked && a.mask.empty()) {
    throw UsageError("the masked variant needs --mask");
  }
  if (!a.mask.empty()) cfg.mask = MaskFromImage(ReadPng(a.mask));
  const Subsampling ss = ParseSubsampling(a.subsampling);
  bool first = true;
  for (const std::string& path : a.inputs) {
    CoefficientTensor coeffs;
    std::string kind;
    if (IsJpegPath(path)) {
      kind = "jpeg";
      coeffs = ReadJfif(ReadFileBytes(path)).coefficients;
    } else {
      kind = "png";
      coeffs = JpegEncodeTransform(ReadPng(path), QualityFromFraction(cfg.q_alg), ss);
    }
    const BlockGeometry geo = GeometryOf(coeffs);
    const Activity activity = ApplyVariant(cfg, geo, coeffs.width, coeffs.height);
    Json blocks = Json::array();
    size_t nonzero = 0;
    for (size_t c = 0; c < coeffs.channels.size(); ++c) {
      blocks.push_back(coeffs.channels[c].num_blocks());
      for (double v : coeffs.channels[c].coeffs) nonzero += v != 0.0;
    }
    Json j;
    j["path"] = path;
    j["kind"] = kind;
    j["width"] = coeffs.width;
    j["height"] = coeffs.height;
    j["channels"] = coeffs.channels.size();
    j["quality"] = coeffs.quality;
    j["subsampling"] = SubsamplingName(coeffs.subsampling);
    j["blocks"] = blocks;
    j["coefficients"] = coeffs.ElementCount();
    j["nonzero_coefficients"] = nonzero;
    j["variant"] = std::string(VariantName(cfg.variant));
    j["active_params"] = activity.ActiveParameterCount();
    if (a.format == "json") {
      out << j.dump() << "\n";
      continue;
    }
    if (!first) out << "\n";
    first = false;
    for (const auto& [key, value] : j.items()) {
      if (value.is_string()) {
        out << key << "=" << value.get<std::string>() << "\n";
      } else if (value.is_array()) {
        out << key << "=";
        for (size_t i = 0; i < value.size(); ++i) {
          out << (i ? "," : "") << value[i].dump();
        }
        out << "\n";
      } else {
        out << key << "=" << value.dump() << "\n";
      }
    }
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// gradcheck

struct GradcheckArgs {
  std::string image;
  std::string config;
  std::string chain = "decode";
  int probes = 16;
  double h = 1e-3;
  double tol = 0.0;
  uint64_t seed = 0;
  double q_alg = 0.95;
  std::string subsampling = "420";
  std::string weights;
  int size = 16;
};

void AddGradcheck(CLI::App& app, GradcheckArgs& a) {
  CLI::App* sub = app.add_subcommand(
      "gradcheck", "Finite-difference check of the analytic gradients");
  sub->add_option("image", a.image, "PNG (default: random mid-range image)");
  sub->add_option("--config", a.config, "key = value config file");
  sub->add_option("--chain", a.chain, "decode, or full = loss(E(decode))")
      ->check(CLI::IsMember({"decode", "full"}));
  sub->add_option("--probes", a.probes)->check(CLI::PositiveNumber);
  sub->add_option("--fd-step", a.h, "Finite-difference step h")
      ->check(CLI::PositiveNumber);
  sub->add_option("--tol", a.tol,
                  "Relative tolerance (default 1e-5 decode, 1e-4 full)");
  sub->add_option("--seed", a.seed);
  sub->add_option("--q-alg", a.q_alg);
  sub->add_option("--subsampling", a.subsampling)
      ->check(CLI::IsMember({"420", "444"}));
  sub->add_option("--weights", a.weights, "DSW1 weight file (full chain)");
  sub->add_option("--size", a.size, "Random image edge")->check(CLI::Range(8, 512));
}

int CmdGradcheck(const CLI::App& sub, const GradcheckArgs& a,
                 std::ostream& out) {
  PixelImage image;
  if (a.image.empty()) {
    Rng rng(a.seed);
    image = PixelImage(a.size, a.size, 3);
    for (double& v : image.data) v = std::round(rng.Uniform(64.0, 192.0));
  } else {
    image = ReadPng(a.image);
  }
  const int quality = QualityFromFraction(a.q_alg);
  const QuantMatrices tables = ScaleQuantTables(quality);
  const CoefficientTensor coeffs =
      JpegEncodeTransform(image, quality, ParseSubsampling(a.subsampling));
  const bool full = a.chain == "full";
  FiniteDiffOptions options;
  options.n_probes = a.probes;
  options.h = a.h;
  options.tolerance = sub.count("--tol") ? a.tol : (full ? 1e-4 : 1e-5);
  options.seed = a.seed;
  CheckReport report;
  if (full) {
    const EncoderNet net = LoadNet(a.weights, a.seed);
    report = FullChainCheck(Objective(net, tables), coeffs, options);
  } else {
    report = FiniteDiffCheck(coeffs, tables, options);
  }
  const DecodeTape tape = DecodeForwardWithTape(coeffs, tables).tape;
  Json j;
  j["chain"] = a.chain;
  j["width"] = coeffs.width;
  j["height"] = coeffs.height;
  j["quality"] = quality;
  j["probes"] = report.probes;
  j["h"] = a.h;
  j["tolerance"] = report.tolerance;
  j["max_relative_error"] = report.max_relative_error;
  j["clamped_outputs"] = tape.CountClampedOutputs();
  j["passed"] = report.passed;
  out << j.dump() << "\n";
  return report.passed ? kExitOk : kExitDomainError;
}

// ---------------------------------------------------------------------------
// codec

struct CodecArgs {
  std::string input;
  std::string output;
  int quality = 95;
  std::string subsampling = "420";
};

void AddCodec(CLI::App& app, CodecArgs& enc, CodecArgs& dec) {
  CLI::App* sub = app.add_subcommand("codec", "PNG <-> baseline JPEG");
  sub->require_subcommand(1);
  CLI::App* e = sub->add_subcommand("encode", "PNG -> JPEG");
  e->add_option("input", enc.input)->required();
  e->add_option("output", enc.output)->required();
  e->add_option("--quality", enc.quality)->check(CLI::Range(1, 100));
  e->add_option("--subsampling", enc.subsampling)
      ->check(CLI::IsMember({"420", "444"}));
  CLI::App* d = sub->add_subcommand("decode", "JPEG -> PNG");
  d->add_option("input", dec.input)->required();
  d->add_option("output", dec.output)->required();
}

int CmdCodecEncode(const CodecArgs& a, std::ostream& out) {
  const PixelImage image = ReadPng(a.input);
  const CoefficientTensor coeffs =
      JpegEncodeTransform(image, a.quality, ParseSubsampling(a.subsampling));
  const std::vector<uint8_t> bytes =
      WriteJfif(coeffs, ScaleQuantTables(a.quality));
  WriteFileBytes(a.output, bytes);
  out << "wrote " << a.output << " (" << bytes.size() << " bytes)\n";
  return kExitOk;
}

int CmdCodecDecode(const CodecArgs& a, std::ostream& out) {
  const JfifContents contents = ReadJfif(ReadFileBytes(a.input));
  WritePng(a.output, JpegDecodeTransform(contents.coefficients, contents.tables,
                                         DecodeMode::kEmit));
  out << "wrote " << a.output << "\n";
  return kExitOk;
}

// Config-file keys become "--key=value" tokens placed before the user's own
// arguments; every option takes the last value, so flags win.
std::vector<std::string> InjectConfig(const CLI::App& app,
                                      const std::vector<std::string>& args) {
  if (args.size() < 2) return args;
  const CLI::App* sub = app.get_subcommand_no_throw(args[1]);
  if (!sub || !sub->get_option_no_throw("--config")) return args;
  std::string path;
  for (size_t i = 2; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      path = args[i + 1];
    } else if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
    }
  }
  if (path.empty()) return args;
  const std::vector<uint8_t> bytes = ReadFileBytes(path);
  const auto entries =
      ParseConfigText(std::string_view(reinterpret_cast<const char*>(bytes.data()),
                                       bytes.size()));
  std::vector<std::string> injected;
  for (const auto& [key, value] : entries) {
    const CLI::Option* opt = sub->get_option_no_throw("--" + key);
    if (!opt || key == "config" || opt->get_positional()) {
      throw UsageError("unknown key '" + key + "' in config file " + path);
    }
    injected.push_back("--" + key + "=" + value);
  }
  std::vector<std::string> out(args.begin(), args.begin() + 2);
  out.insert(out.end(), injected.begin(), injected.end());
  out.insert(out.end(), args.begin() + 2, args.end());
  return out;
}

}  // namespace

std::vector<std::pair<std::string, std::string>> ParseConfigText(
    std::string_view text) {
  std::vector<std::pair<std::string, std::string>> out;
  size_t line_no = 0;
  size_t pos = 0;
  while (pos < text.size()) {
    size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string line = Trim(text.substr(pos, end - pos));
    ++line_no;
    pos = end + 1;
    if (line.empty() || line[0] == '#') continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorKind::kParse, "config line " + std::to_string(line_no) +
                                         ": expected key = value");
    }
    std::string key = Trim(std::string_view(line).substr(0, eq));
    std::string value = Trim(std::string_view(line).substr(eq + 1));
    if (key.empty()) {
      throw Error(ErrorKind::kParse,
                  "config line " + std::to_string(line_no) + ": empty key");
    }
    std::replace(key.begin(), key.end(), '_', '-');
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
      value = value.substr(1, value.size() - 2);
    }
    out.emplace_back(std::move(key), std::move(value));
  }
  return out;
}

int ResolveThreadCount(int flag) {
  if (flag > 0) return flag;
  if (const char* env = std::getenv("DCT_SHIELD_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<int>(v);
  }
  return 1;
}

int RunCli(const std::vector<std::string>& args, std::ostream& out,
           std::ostream& err) {
  CLI::App app{"Protect images by perturbing their quantized DCT coefficients",
               "dct-shield"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);
  app.set_version_flag("--version", "dct-shield 1.0.0");

  ImmunizeArgs immunize;
  PurifyArgs purify;
  MetricsArgs metrics;
  InspectArgs inspect;
  GradcheckArgs gradcheck;
  CodecArgs encode;
  CodecArgs decode;
  AddImmunize(app, immunize);
  AddPurify(app, purify);
  AddMetrics(app, metrics);
  AddInspect(app, inspect);
  AddGradcheck(app, gradcheck);
  AddCodec(app, encode, decode);

  try {
    const std::vector<std::string> full = InjectConfig(app, args);
    std::vector<const char*> argv;
    for (const std::string& s : full) argv.push_back(s.c_str());
    try {
      app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
      const int code = app.exit(e, out, err);
      return code == 0 ? kExitOk : kExitUsageError;
    }
    const CLI::App* sub = app.get_subcommands().front();
    const std::string name = sub->get_name();
    if (name == "immunize") return CmdImmunize(*sub, immunize, out, err);
    if (name == "purify") return CmdPurify(*sub, purify, out, err);
    if (name == "metrics") return CmdMetrics(metrics, out);
    if (name == "inspect") return CmdInspect(inspect, out);
    if (name == "gradcheck") return CmdGradcheck(*sub, gradcheck, out);
    if (name == "codec") {
      if (sub->got_subcommand("encode")) return CmdCodecEncode(encode, out);
      return CmdCodecDecode(decode, out);
    }
    throw UsageError("unknown subcommand " + name);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsageError;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitDomainError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitDomainError;
  }
}

}  // namespace dct_shield
