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

#include <cmath>
#include <numbers>

#include "dct_shield/error.h"
#include "dct_shield/eval.h"
#include "dct_shield/jpeg_core.h"
#include "dct_shield/random.h"
#include "libjpeg_oracle.h"
#include "test_support.h"

namespace dct_shield {
namespace {

using testing::LoadFixture;
using testing::RandomImage;

// Straight from the definition, no separability.
std::array<double, kBlockSize> NaiveDct(const std::array<double, kBlockSize>& p) {
  std::array<double, kBlockSize> out{};
  for (int u = 0; u < 8; ++u) {
    for (int v = 0; v < 8; ++v) {
      const double cu = u == 0 ? 1 / std::sqrt(2.0) : 1.0;
      const double cv = v == 0 ? 1 / std::sqrt(2.0) : 1.0;
      double s = 0.0;
      for (int x = 0; x < 8; ++x) {
        for (int y = 0; y < 8; ++y) {
          // Row index is vertical frequency: u pairs with y here.
          s += p[y * 8 + x] * std::cos((2 * y + 1) * u * std::numbers::pi / 16) *
               std::cos((2 * x + 1) * v * std::numbers::pi / 16);
        }
      }
      out[u * 8 + v] = 0.25 * cu * cv * s;
    }
  }
  return out;
}

PixelImage Solid(int w, int h, std::array<double, 3> rgb) {
  PixelImage img(w, h, 3);
  for (int c = 0; c < 3; ++c) {
    for (size_t i = 0; i < img.plane_size(); ++i) img.data[c * img.plane_size() + i] = rgb[c];
  }
  return img;
}

TEST(ColorTest, BlackWhiteAndRed) {
  PlaneSet black = RgbToYcbcr(Solid(8, 8, {0, 0, 0}));
  EXPECT_DOUBLE_EQ(black.y.at(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(black.cb.at(0, 0), 128.0);
  EXPECT_DOUBLE_EQ(black.cr.at(0, 0), 128.0);

  PlaneSet white = RgbToYcbcr(Solid(8, 8, {255, 255, 255}));
  EXPECT_NEAR(white.y.at(3, 3), 255.0, 1e-9);
  EXPECT_NEAR(white.cb.at(3, 3), 128.0, 1e-9);
  EXPECT_NEAR(white.cr.at(3, 3), 128.0, 1e-9);

  PlaneSet red = RgbToYcbcr(Solid(8, 8, {255, 0, 0}));
  EXPECT_NEAR(red.y.at(0, 0), 0.299 * 255, 1e-9);
  EXPECT_NEAR(red.y.at(0, 0), 76.245, 1e-9);
  EXPECT_NEAR(red.cb.at(0, 0), -0.168736 * 255 + 128, 1e-9);
  EXPECT_NEAR(red.cb.at(0, 0), 84.97232, 1e-9);
  EXPECT_DOUBLE_EQ(red.cr.at(0, 0), 255.0);  // 255.5 before the clamp
}

TEST(ColorTest, InverseFixedPointsAndRoundTrip) {
  PlaneSet mid;
  mid.y = Plane(8, 8, 128);
  mid.cb = Plane(8, 8, 128);
  mid.cr = Plane(8, 8, 128);
  PixelImage gray = YcbcrToRgb(mid);
  for (double v : gray.data) EXPECT_NEAR(v, 128.0, 1e-10);

  mid.y = Plane(8, 8, 0);
  PixelImage black = YcbcrToRgb(mid);
  for (double v : black.data) EXPECT_NEAR(v, 0.0, 1e-10);

  // Interior colours never clamp in either direction.
  const PixelImage img = RandomImage(16, 16, 3, 7, 60, 190);
  const PixelImage back = YcbcrToRgb(RgbToYcbcr(img));
  for (size_t i = 0; i < img.data.size(); ++i) {
    EXPECT_NEAR(back.data[i], img.data[i], 1e-10);
  }
}

TEST(ColorTest, ErrorsOnWrongChannelCount) {
  try {
    RgbToYcbcr(PixelImage(8, 8, 1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kDimension);
  }
  PlaneSet sub;
  sub.y = Plane(16, 16);
  sub.cb = Plane(8, 8);
  sub.cr = Plane(8, 8);
  sub.subsampling = Subsampling::k420;
  EXPECT_THROW(YcbcrToRgb(sub), Error);
}

TEST(ChromaTest, BoxAverageAndReplication) {
  PlaneSet p;
  p.y = Plane(2, 2, 9);
  p.cb = Plane(2, 2, 100);
  p.cr = Plane(2, 2, 0);
  p.cr.at(1, 1) = 200;
  const PlaneSet s = SubsampleChroma(p);
  EXPECT_EQ(s.subsampling, Subsampling::k420);
  EXPECT_EQ(s.cb.width, 1);
  EXPECT_DOUBLE_EQ(s.cb.at(0, 0), 100.0);
  EXPECT_DOUBLE_EQ(s.cr.at(0, 0), 50.0);
  EXPECT_EQ(s.y.data, p.y.data);

  PlaneSet q;
  q.y = Plane(2, 2);
  q.cb = Plane(1, 1, 77);
  q.cr = Plane(1, 1, 77);
  q.subsampling = Subsampling::k420;
  const PlaneSet up = UpsampleChroma(q);
  EXPECT_EQ(up.cb.width, 2);
  for (double v : up.cb.data) EXPECT_DOUBLE_EQ(v, 77.0);
}

TEST(ChromaTest, OddSizesAndProjection) {
  const PixelImage img = RandomImage(13, 11, 3, 3);
  const PlaneSet full = RgbToYcbcr(img);
  const PlaneSet sub = SubsampleChroma(full);
  EXPECT_EQ(sub.cb.width, 7);
  EXPECT_EQ(sub.cb.height, 6);
  const PlaneSet up = UpsampleChroma(sub);
  EXPECT_EQ(up.cb.width, 13);
  EXPECT_EQ(up.cb.height, 11);
  // upsample o subsample is idempotent on its image.
  const PlaneSet again = UpsampleChroma(SubsampleChroma(up));
  for (size_t i = 0; i < up.cb.data.size(); ++i) {
    EXPECT_NEAR(again.cb.data[i], up.cb.data[i], 1e-12);
  }

  PlaneSet constant;
  constant.y = Plane(10, 10, 1);
  constant.cb = Plane(10, 10, 42);
  constant.cr = Plane(10, 10, 42);
  const PlaneSet c2 = UpsampleChroma(SubsampleChroma(constant));
  for (double v : c2.cb.data) EXPECT_DOUBLE_EQ(v, 42.0);
}

TEST(DctTest, ConstantBlocks) {
  std::array<double, kBlockSize> zero{};
  for (double v : ForwardDctBlock(zero)) EXPECT_EQ(v, 0.0);
  for (double v : InverseDctBlock(zero)) EXPECT_EQ(v, 0.0);

  std::array<double, kBlockSize> c;
  c.fill(-37.0);
  const auto f = ForwardDctBlock(c);
  EXPECT_NEAR(f[0], 8 * -37.0, 1e-12);
  for (int k = 1; k < kBlockSize; ++k) EXPECT_NEAR(f[k], 0.0, 1e-12);

  std::array<double, kBlockSize> dc{};
  dc[0] = 8 * 12.5;
  for (double v : InverseDctBlock(dc)) EXPECT_NEAR(v, 12.5, 1e-12);
}

TEST(DctTest, MatchesDefinitionRoundTripAndParseval) {
  Rng rng(11);
  double worst_roundtrip = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::array<double, kBlockSize> b;
    for (double& v : b) v = rng.Uniform(-128.0, 127.0);
    const auto f = ForwardDctBlock(b);
    const auto naive = NaiveDct(b);
    double e_pix = 0.0, e_freq = 0.0;
    for (int k = 0; k < kBlockSize; ++k) {
      ASSERT_NEAR(f[k], naive[k], 1e-9);
      e_pix += b[k] * b[k];
      e_freq += f[k] * f[k];
    }
    EXPECT_NEAR(e_pix, e_freq, 1e-8 * std::max(1.0, e_pix));
    const auto back = InverseDctBlock(f);
    for (int k = 0; k < kBlockSize; ++k) {
      worst_roundtrip = std::max(worst_roundtrip, std::abs(back[k] - b[k]));
    }
  }
  EXPECT_LT(worst_roundtrip, 1e-10);
}

TEST(QuantTablesTest, NamedQualities) {
  const QuantMatrices q50 = ScaleQuantTables(50);
  EXPECT_EQ(q50.luma, BaseLumaTable());
  EXPECT_EQ(q50.chroma, BaseChromaTable());
  EXPECT_EQ(q50.luma[0], 16);
  EXPECT_EQ(ScaleQuantTables(95).luma[0], 2);
  for (int v : ScaleQuantTables(100).luma) EXPECT_EQ(v, 1);
  for (int v : ScaleQuantTables(100).chroma) EXPECT_EQ(v, 1);
  EXPECT_EQ(ScaleQuantTables(1).luma[63], 255);
}

TEST(QuantTablesTest, MatchesLibjpegAtEveryQuality) {
  for (int q = 1; q <= 100; ++q) {
    const QuantMatrices ours = ScaleQuantTables(q);
    const QuantMatrices ref = testing::LibjpegQualityTables(q);
    EXPECT_EQ(ours.luma, ref.luma) << "quality " << q;
    EXPECT_EQ(ours.chroma, ref.chroma) << "quality " << q;
    EXPECT_EQ(ours.quality, q);
  }
}

TEST(QuantTablesTest, RejectsOutOfRange) {
  for (int q : {0, 101, -5}) {
    try {
      ScaleQuantTables(q);
      FAIL() << q;
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::kConfig);
    }
  }
  EXPECT_EQ(QualityFromFraction(0.95), 95);
  EXPECT_EQ(QualityFromFraction(1.0), 100);
  EXPECT_THROW(QualityFromFraction(0.0), Error);
  EXPECT_THROW(QualityFromFraction(1.2), Error);
}

TEST(QuantizeTest, Examples) {
  std::array<double, kBlockSize> c{};
  std::array<int, kBlockSize> table;
  table.fill(10);
  c[0] = 100;
  c[1] = 4;
  c[2] = -15;
  c[3] = 15;
  c[4] = -4.9999;
  const auto q = Quantize(c, table);
  EXPECT_EQ(q[0], 10);
  EXPECT_EQ(q[1], 0);
  EXPECT_EQ(q[2], -2);
  EXPECT_EQ(q[3], 2);
  EXPECT_EQ(q[4], 0);

  std::array<double, kBlockSize> levels{};
  std::array<int, kBlockSize> s;
  s.fill(10);
  s[2] = 2;
  levels[0] = 10;
  levels[2] = -1.4;
  const auto d = Dequantize(levels, s);
  EXPECT_DOUBLE_EQ(d[0], 100.0);
  EXPECT_DOUBLE_EQ(d[1], 0.0);
  EXPECT_DOUBLE_EQ(d[2], -2.8);
}

TEST(EncodeTest, ParameterCounts512) {
  const PixelImage img = LoadFixture("astronaut_512");
  const CoefficientTensor t = JpegEncodeTransform(img, 95);
  ASSERT_EQ(t.channels.size(), 3u);
  EXPECT_EQ(t.channels[kY].num_blocks(), 4096u);
  EXPECT_EQ(t.channels[kCb].num_blocks(), 1024u);
  EXPECT_EQ(t.channels[kCr].num_blocks(), 1024u);
  EXPECT_EQ(t.ElementCount(), 393216u);
  EXPECT_EQ(t.ElementCount(), 3u * 512 * 512 / 2);
  EXPECT_TRUE(t.IsIntegral());
  EXPECT_EQ(JpegEncodeTransform(img, 95, Subsampling::k444).ElementCount(),
            3u * 512 * 512);
}

TEST(EncodeTest, BlockCountsFollowGeometry) {
  Rng rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    const int w = 8 + static_cast<int>(rng.Below(60));
    const int h = 8 + static_cast<int>(rng.Below(60));
    const PixelImage img = RandomImage(w, h, 3, trial);
    const CoefficientTensor t444 = JpegEncodeTransform(img, 80, Subsampling::k444);
    for (int c = 0; c < 3; ++c) {
      EXPECT_EQ(t444.channels[c].blocks_wide, (w + 7) / 8);
      EXPECT_EQ(t444.channels[c].blocks_high, (h + 7) / 8);
    }
    // 4:2:0 grids cover whole 16x16 MCUs.
    const CoefficientTensor t420 = JpegEncodeTransform(img, 80);
    EXPECT_EQ(t420.channels[kY].blocks_wide, 2 * ((w + 15) / 16));
    EXPECT_EQ(t420.channels[kY].blocks_high, 2 * ((h + 15) / 16));
    EXPECT_EQ(t420.channels[kCb].blocks_wide, (w + 15) / 16);
    EXPECT_EQ(t420.channels[kCr].blocks_high, (h + 15) / 16);
    // Chroma blocks still cover ceil(W/2) x ceil(H/2).
    EXPECT_GE(t420.channels[kCb].blocks_wide * 8, (w + 1) / 2);
    EXPECT_TRUE(t420.IsIntegral());
  }
  const PixelImage g = RandomImage(24, 40, 1, 1);
  const CoefficientTensor tg = JpegEncodeTransform(g, 80);
  ASSERT_EQ(tg.channels.size(), 1u);
  EXPECT_EQ(tg.subsampling, Subsampling::k444);
  EXPECT_EQ(tg.ElementCount(), 24u * 40);
}

TEST(EncodeTest, MidGrayIsAllZero) {
  const CoefficientTensor t = JpegEncodeTransform(Solid(32, 32, {128, 128, 128}), 75);
  for (const auto& ch : t.channels) {
    for (double v : ch.coeffs) EXPECT_EQ(v, 0.0);
  }
}

TEST(EncodeTest, WhiteGrayBlockDc) {
  const PixelImage white(8, 8, 1, 255.0);
  const CoefficientTensor t = JpegEncodeTransform(white, 100);
  EXPECT_EQ(t.channels[0].coeffs[0], 1016.0);
  for (int k = 1; k < kBlockSize; ++k) EXPECT_EQ(t.channels[0].coeffs[k], 0.0);
}

TEST(EncodeTest, RejectsTinyImages) {
  EXPECT_THROW(JpegEncodeTransform(PixelImage(7, 16, 3), 90), Error);
  EXPECT_THROW(JpegEncodeTransform(PixelImage(16, 4, 1), 90), Error);
  EXPECT_THROW(JpegEncodeTransform(PixelImage(16, 16, 2), 90), Error);
}

TEST(DecodeTest, ZeroTensorIsMidGray) {
  for (Subsampling ss : {Subsampling::k420, Subsampling::k444}) {
    CoefficientTensor t = JpegEncodeTransform(Solid(24, 40, {0, 0, 0}), 50, ss);
    t = t.ZerosLike();
    for (DecodeMode mode : {DecodeMode::kAnalysis, DecodeMode::kEmit}) {
      const PixelImage img = JpegDecodeTransform(t, mode);
      EXPECT_EQ(img.width, 24);
      EXPECT_EQ(img.height, 40);
      for (double v : img.data) EXPECT_NEAR(v, 128.0, 1e-9);
    }
  }
}

TEST(DecodeTest, SuperpositionWhereNothingClamps) {
  const PixelImage base = RandomImage(32, 24, 3, 9, 120, 136);
  const CoefficientTensor shape = JpegEncodeTransform(base, 90);
  const QuantMatrices tables = ScaleQuantTables(90);
  Rng rng(2);
  auto random_small = [&]() {
    CoefficientTensor t = shape.ZerosLike();
    for (auto& ch : t.channels) {
      for (double& v : ch.coeffs) v = rng.Uniform(-0.5, 0.5);
    }
    return t;
  };
  const CoefficientTensor a = random_small();
  const CoefficientTensor b = random_small();
  CoefficientTensor ab = a;
  for (size_t c = 0; c < ab.channels.size(); ++c) {
    for (size_t i = 0; i < ab.channels[c].coeffs.size(); ++i) {
      ab.channels[c].coeffs[i] += b.channels[c].coeffs[i];
    }
  }
  auto dec = [&](const CoefficientTensor& t) {
    return JpegDecodeTransform(t, tables, DecodeMode::kAnalysis);
  };
  const PixelImage d0 = dec(shape.ZerosLike());
  const PixelImage da = dec(a), db = dec(b), dab = dec(ab);
  for (size_t i = 0; i < d0.data.size(); ++i) {
    EXPECT_NEAR(dab.data[i] - d0.data[i],
                (da.data[i] - d0.data[i]) + (db.data[i] - d0.data[i]), 1e-8);
  }
}

TEST(DecodeTest, EmitIsEightBitAndMatchesRoundedPlanes) {
  const PixelImage img = LoadFixture("chelsea_256");
  const CoefficientTensor t = JpegEncodeTransform(img, 75);
  const PixelImage emitted = JpegDecodeTransform(t, DecodeMode::kEmit);
  const PixelImage analysis = JpegDecodeTransform(t, DecodeMode::kAnalysis);
  EXPECT_TRUE(emitted.IsQuantized8());
  EXPECT_EQ(emitted.width, 256);
  // Emission rounds twice (planes, then RGB), so it stays within ~2 levels.
  EXPECT_LE(LinfPixel(emitted, analysis), 2);
}

TEST(DecodeTest, HighQualityRoundTripPsnr) {
  for (const std::string& name : testing::AllFixtures()) {
    const PixelImage img = LoadFixture(name);
    const CoefficientTensor t = JpegEncodeTransform(img, 100, Subsampling::k444);
    const PixelImage out = JpegDecodeTransform(t, DecodeMode::kEmit);
    EXPECT_GT(Psnr(img, out), 45.0) << name;
  }
}

TEST(DecodeTest, GeometryMismatchIsRejected) {
  CoefficientTensor t = JpegEncodeTransform(RandomImage(32, 32, 3, 1), 90);
  t.width = 64;
  EXPECT_THROW(JpegDecodeTransform(t, DecodeMode::kEmit), Error);
  CoefficientTensor u = JpegEncodeTransform(RandomImage(32, 32, 3, 1), 90);
  u.channels[kCb].coeffs.pop_back();
  EXPECT_THROW(JpegDecodeTransform(u, DecodeMode::kEmit), Error);
}

TEST(DecodeTest, ApproximateIdempotence444) {
  for (const char* name : {"astronaut_256", "coffee_256", "camera_256"}) {
    const PixelImage img = LoadFixture(name);
    for (int q : {50, 75, 95}) {
      const CoefficientTensor a = JpegEncodeTransform(img, q, Subsampling::k444);
      const PixelImage d = JpegDecodeTransform(a, DecodeMode::kEmit);
      const CoefficientTensor b = JpegEncodeTransform(d, q, Subsampling::k444);
      size_t within = 0, total = 0;
      for (size_t c = 0; c < a.channels.size(); ++c) {
        for (size_t i = 0; i < a.channels[c].coeffs.size(); ++i) {
          within += std::abs(a.channels[c].coeffs[i] - b.channels[c].coeffs[i]) <= 1;
          ++total;
        }
      }
      EXPECT_GE(static_cast<double>(within) / total, 0.95) << name << " q" << q;
    }
  }
}

}  // namespace
}  // namespace dct_shield
