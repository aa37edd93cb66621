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

#include <gtest/gtest.h>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dct_shield/cli.h"
#include "dct_shield/error.h"
#include "dct_shield/jpeg_codec.h"
#include "dct_shield/png_io.h"
#include "test_support.h"

namespace dct_shield {
namespace {

namespace fs = std::filesystem;
using testing::FreshTempDir;
using testing::LoadFixture;

struct RunResult {
  int code;
  std::string out;
  std::string err;
};

RunResult Cli(std::vector<std::string> args) {
  args.insert(args.begin(), "dct-shield");
  std::ostringstream out, err;
  const int code = RunCli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string Slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

PixelImage Crop(const PixelImage& img, int w, int h) {
  PixelImage out(w, h, img.channels);
  for (int c = 0; c < img.channels; ++c) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) out.at(c, y, x) = img.at(c, y, x);
    }
  }
  return out;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = FreshTempDir(::testing::UnitTest::GetInstance()->current_test_info()->name());
    small_ = dir_ + "/small.png";
    WritePng(small_, Crop(LoadFixture("coffee_256"), 48, 32));
  }
  std::string dir_;
  std::string small_;
};

TEST_F(CliTest, ImmunizeWritesImageAndReport) {
  const RunResult r = Cli({"immunize", small_, "--out", dir_ + "/out",
                           "--preset", "base", "--iterations", "3"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const PixelImage img = ReadPng(dir_ + "/out/small.immunized.png");
  EXPECT_EQ(img.width, 48);
  EXPECT_EQ(img.height, 32);
  const std::string csv = Slurp(dir_ + "/out/small.report.csv");
  EXPECT_EQ(csv.rfind("iteration,loss,best_loss\n", 0), 0u);
  EXPECT_NE(csv.find("# iterations=3"), std::string::npos);
  EXPECT_NE(csv.find("# variant=base"), std::string::npos);
}

TEST_F(CliTest, ImmunizeIsDeterministic) {
  for (const char* sub : {"a", "b"}) {
    ASSERT_EQ(Cli({"immunize", small_, "--out", dir_ + "/" + sub,
                   "--iterations", "4", "--seed", "3", "--save-jpeg"})
                  .code,
              kExitOk);
  }
  for (const char* file : {"small.immunized.png", "small.report.csv",
                           "small.immunized.jpg"}) {
    EXPECT_EQ(Slurp(dir_ + "/a/" + file), Slurp(dir_ + "/b/" + file)) << file;
  }
  EXPECT_NE(Slurp(dir_ + "/a/small.immunized.jpg").size(), 0u);
  EXPECT_NO_THROW(ReadJfif(ReadFileBytes(dir_ + "/a/small.immunized.jpg")));
}

TEST_F(CliTest, EpsilonRuleIsADomainError) {
  const RunResult r = Cli({"immunize", small_, "--out", dir_ + "/o",
                           "--epsilon", "0.5", "--robust"});
  EXPECT_EQ(r.code, kExitDomainError);
  EXPECT_NE(r.err.find("epsilon >= 1"), std::string::npos) << r.err;
}

TEST_F(CliTest, MaskUsageErrors) {
  EXPECT_EQ(Cli({"immunize", small_, "--out", dir_ + "/o", "--variant",
                 "masked"})
                .code,
            kExitUsageError);
  EXPECT_EQ(Cli({"immunize", small_, "--out", dir_ + "/o", "--mask", small_}).code,
            kExitUsageError);
  EXPECT_EQ(Cli({"immunize", small_}).code, kExitUsageError);  // no --out
  EXPECT_EQ(Cli({"immunize", small_, "--out", dir_, "--variant", "wide"}).code,
            kExitUsageError);
  EXPECT_EQ(Cli({}).code, kExitUsageError);
  EXPECT_EQ(Cli({"frobnicate"}).code, kExitUsageError);
}

TEST_F(CliTest, MaskedVariantWithMask) {
  PixelImage mask(48, 32, 1, 0);
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) mask.at(0, y, x) = 255;
  }
  WritePng(dir_ + "/mask.png", mask);
  const RunResult r = Cli({"immunize", small_, "--out", dir_ + "/m", "--preset",
                           "inpaint", "--mask", dir_ + "/mask.png",
                           "--iterations", "2"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  // One Y block and one block in each chroma channel.
  EXPECT_NE(Slurp(dir_ + "/m/small.report.csv").find("# active_params=192"),
            std::string::npos);
}

TEST_F(CliTest, PartialBatchFailureContinues) {
  const std::string batch = dir_ + "/batch";
  fs::create_directories(batch);
  WritePng(batch + "/good.png", Crop(LoadFixture("rocket_256"), 32, 32));
  std::ofstream(batch + "/broken.png") << "not a png";
  const RunResult r = Cli({"immunize", batch, "--out", dir_ + "/bo",
                           "--iterations", "1", "--threads", "2"});
  EXPECT_EQ(r.code, kExitDomainError);
  EXPECT_TRUE(fs::exists(dir_ + "/bo/good.immunized.png"));
  EXPECT_NE(r.err.find("broken.png"), std::string::npos);
  EXPECT_NE(r.err.find("1 of 2 images failed"), std::string::npos) << r.err;
}

TEST_F(CliTest, ConfigFileAndFlagOverride) {
  std::ofstream(dir_ + "/run.cfg") << "# test config\n"
                                      "iterations = 2\n"
                                      "q_alg = 0.9\n"
                                      "variant = y_only\n";
  ASSERT_EQ(Cli({"immunize", small_, "--out", dir_ + "/c", "--config",
                 dir_ + "/run.cfg"})
                .code,
            kExitOk);
  const std::string csv = Slurp(dir_ + "/c/small.report.csv");
  EXPECT_NE(csv.find("# iterations=2"), std::string::npos);
  EXPECT_NE(csv.find("# quality=90"), std::string::npos);
  EXPECT_NE(csv.find("# variant=y_only"), std::string::npos);

  ASSERT_EQ(Cli({"immunize", small_, "--out", dir_ + "/d", "--config",
                 dir_ + "/run.cfg", "--iterations", "1"})
                .code,
            kExitOk);
  EXPECT_NE(Slurp(dir_ + "/d/small.report.csv").find("# iterations=1"),
            std::string::npos);

  std::ofstream(dir_ + "/bad.cfg") << "iterations = 2\nwarp_factor = 9\n";
  const RunResult bad = Cli({"immunize", small_, "--out", dir_ + "/e",
                             "--config", dir_ + "/bad.cfg"});
  EXPECT_EQ(bad.code, kExitUsageError);
  EXPECT_NE(bad.err.find("warp-factor"), std::string::npos);
}

TEST(ConfigTextTest, Parsing) {
  const auto kv = ParseConfigText(
      "# comment\n\n  epsilon = 2 \nstep_rule=\"gradient\"\r\n");
  ASSERT_EQ(kv.size(), 2u);
  EXPECT_EQ(kv[0].first, "epsilon");
  EXPECT_EQ(kv[0].second, "2");
  EXPECT_EQ(kv[1].first, "step-rule");
  EXPECT_EQ(kv[1].second, "gradient");
  try {
    ParseConfigText("iterations 5\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kParse);
  }
}

TEST(ThreadsTest, FlagThenEnvironmentThenOne) {
  unsetenv("DCT_SHIELD_THREADS");
  EXPECT_EQ(ResolveThreadCount(0), 1);
  EXPECT_EQ(ResolveThreadCount(3), 3);
  setenv("DCT_SHIELD_THREADS", "5", 1);
  EXPECT_EQ(ResolveThreadCount(0), 5);
  EXPECT_EQ(ResolveThreadCount(2), 2);
  setenv("DCT_SHIELD_THREADS", "lots", 1);
  EXPECT_EQ(ResolveThreadCount(0), 1);
  unsetenv("DCT_SHIELD_THREADS");
}

TEST_F(CliTest, PurifyJpegSweep) {
  const RunResult r = Cli({"purify", small_, "--out", dir_ + "/p", "--jpeg",
                           "65,75,85,95"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  for (int q : {65, 75, 85, 95}) {
    EXPECT_TRUE(fs::exists(dir_ + "/p/small.jpeg" + std::to_string(q) + ".png"));
  }
  const std::string csv = Slurp(dir_ + "/p/purify_metrics.csv");
  size_t lines = 0;
  for (char ch : csv) lines += ch == '\n';
  EXPECT_EQ(lines, 5u);
  EXPECT_NE(csv.find("small.png,jpeg,65,"), std::string::npos) << csv;
}

TEST_F(CliTest, PurifyCropResizeAndNoise) {
  const std::string big = dir_ + "/big.png";
  WritePng(big, LoadFixture("chelsea_256"));
  const RunResult r = Cli({"purify", big, "--out", dir_ + "/q", "--crop-resize",
                           "64", "--noise", "4", "--metrics", dir_ + "/m.csv"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const PixelImage c = ReadPng(dir_ + "/q/big.crop64.png");
  EXPECT_EQ(c.width, 256);
  EXPECT_TRUE(fs::exists(dir_ + "/m.csv"));
  EXPECT_EQ(Cli({"purify", small_, "--out", dir_ + "/r"}).code, kExitUsageError);
  EXPECT_EQ(Cli({"purify", small_, "--out", dir_ + "/r", "--jpeg", ""}).code,
            kExitUsageError);
}

TEST_F(CliTest, MetricsOnIdenticalFiles) {
  const RunResult r = Cli({"metrics", small_, small_});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(r.out.find("small.png,none,,inf,1,0"), std::string::npos) << r.out;
  const RunResult q = Cli({"metrics", small_, small_, "--quality", "90",
                           "--csv", dir_ + "/m.csv"});
  ASSERT_EQ(q.code, kExitOk);
  EXPECT_NE(Slurp(dir_ + "/m.csv").find(",inf,1,0,0,1,0,0"), std::string::npos);
  EXPECT_EQ(Cli({"metrics", small_, dir_ + "/missing.png"}).code,
            kExitDomainError);
}

TEST_F(CliTest, InspectReportsParameterCounts) {
  const std::string big = dir_ + "/big.png";
  WritePng(big, LoadFixture("astronaut_512"));
  RunResult r = Cli({"inspect", big});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["active_params"], 393216);
  EXPECT_EQ(j["width"], 512);
  r = Cli({"inspect", big, "--variant", "y_only", "--format", "kv"});
  ASSERT_EQ(r.code, kExitOk);
  EXPECT_NE(r.out.find("active_params=262144"), std::string::npos) << r.out;
  EXPECT_EQ(Cli({"inspect", big, "--variant", "masked"}).code, kExitUsageError);
}

TEST_F(CliTest, GradcheckPassesWithDefaults) {
  RunResult r = Cli({"gradcheck"});
  ASSERT_EQ(r.code, kExitOk) << r.out << r.err;
  EXPECT_TRUE(nlohmann::json::parse(r.out)["passed"].get<bool>());
  r = Cli({"gradcheck", "--chain", "full", "--probes", "8"});
  ASSERT_EQ(r.code, kExitOk) << r.out << r.err;
  r = Cli({"gradcheck", "--tol", "0"});
  EXPECT_EQ(r.code, kExitDomainError);
}

TEST_F(CliTest, CodecRoundTrip) {
  const std::string jpg = dir_ + "/x.jpg";
  ASSERT_EQ(Cli({"codec", "encode", small_, jpg, "--quality", "90"}).code,
            kExitOk);
  ASSERT_EQ(Cli({"codec", "decode", jpg, dir_ + "/x.png"}).code, kExitOk);
  const PixelImage back = ReadPng(dir_ + "/x.png");
  EXPECT_EQ(back.data, Recompress(ReadPng(small_), 90).data);
  EXPECT_EQ(Cli({"codec", "decode", small_, dir_ + "/y.png"}).code,
            kExitDomainError);
}

}  // namespace
}  // namespace dct_shield
