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

#include "dct_shield/jpeg_codec.h"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <optional>
#include <string>

#include "dct_shield/error.h"

namespace dct_shield {

namespace {

constexpr std::array<int, kBlockSize> kZigzag = {
    0,  1,  8,  16, 9,  2,  3,  10, 17, 24, 32, 25, 18, 11, 4,  5,
    12, 19, 26, 33, 40, 48, 41, 34, 27, 20, 13, 6,  7,  14, 21, 28,
    35, 42, 49, 56, 57, 50, 43, 36, 29, 22, 15, 23, 30, 37, 44, 51,
    58, 59, 52, 45, 38, 31, 39, 46, 53, 60, 61, 54, 47, 55, 62, 63};

// Markers.
constexpr uint8_t kSOI = 0xD8;
constexpr uint8_t kEOI = 0xD9;
constexpr uint8_t kSOS = 0xDA;
constexpr uint8_t kDQT = 0xDB;
constexpr uint8_t kDRI = 0xDD;
constexpr uint8_t kDHT = 0xC4;
constexpr uint8_t kSOF0 = 0xC0;
constexpr uint8_t kSOF1 = 0xC1;
constexpr uint8_t kSOF2 = 0xC2;
constexpr uint8_t kAPP0 = 0xE0;
constexpr uint8_t kRST0 = 0xD0;

// Largest magnitudes representable by baseline 8-bit Huffman categories.
constexpr int kMaxDcDiff = 2047;
constexpr int kMaxAc = 1023;

HuffmanSpec MakeSpec(HuffmanClass cls, int id,
                     std::array<uint8_t, 16> bits,
                     std::vector<uint8_t> values) {
  HuffmanSpec s;
  s.table_class = cls;
  s.id = id;
  s.bits = bits;
  s.huffval = std::move(values);
  return s;
}

std::vector<uint8_t> DcValues() {
  return {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11};
}

const HuffmanSpec kDcLuma = MakeSpec(
    HuffmanClass::kDc, 0, {0, 1, 5, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0},
    DcValues());
const HuffmanSpec kDcChroma = MakeSpec(
    HuffmanClass::kDc, 1, {0, 3, 1, 1, 1, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0},
    DcValues());
const HuffmanSpec kAcLuma = MakeSpec(
    HuffmanClass::kAc, 0, {0, 2, 1, 3, 3, 2, 4, 3, 5, 5, 4, 4, 0, 0, 1, 0x7d},
    {0x01, 0x02, 0x03, 0x00, 0x04, 0x11, 0x05, 0x12, 0x21, 0x31, 0x41, 0x06,
     0x13, 0x51, 0x61, 0x07, 0x22, 0x71, 0x14, 0x32, 0x81, 0x91, 0xa1, 0x08,
     0x23, 0x42, 0xb1, 0xc1, 0x15, 0x52, 0xd1, 0xf0, 0x24, 0x33, 0x62, 0x72,
     0x82, 0x09, 0x0a, 0x16, 0x17, 0x18, 0x19, 0x1a, 0x25, 0x26, 0x27, 0x28,
     0x29, 0x2a, 0x34, 0x35, 0x36, 0x37, 0x38, 0x39, 0x3a, 0x43, 0x44, 0x45,
     0x46, 0x47, 0x48, 0x49, 0x4a, 0x53, 0x54, 0x55, 0x56, 0x57, 0x58, 0x59,
     0x5a, 0x63, 0x64, 0x65, 0x66, 0x67, 0x68, 0x69, 0x6a, 0x73, 0x74, 0x75,
     0x76, 0x77, 0x78, 0x79, 0x7a, 0x83, 0x84, 0x85, 0x86, 0x87, 0x88, 0x89,
     0x8a, 0x92, 0x93, 0x94, 0x95, 0x96, 0x97, 0x98, 0x99, 0x9a, 0xa2, 0xa3,
     0xa4, 0xa5, 0xa6, 0xa7, 0xa8, 0xa9, 0xaa, 0xb2, 0xb3, 0xb4, 0xb5, 0xb6,
     0xb7, 0xb8, 0xb9, 0xba, 0xc2, 0xc3, 0xc4, 0xc5, 0xc6, 0xc7, 0xc8, 0xc9,
     0xca, 0xd2, 0xd3, 0xd4, 0xd5, 0xd6, 0xd7, 0xd8, 0xd9, 0xda, 0xe1, 0xe2,
     0xe3, 0xe4, 0xe5, 0xe6, 0xe7, 0xe8, 0xe9, 0xea, 0xf1, 0xf2, 0xf3, 0xf4,
     0xf5, 0xf6, 0xf7, 0xf8, 0xf9, 0xfa});
const HuffmanSpec kAcChroma = MakeSpec(
    HuffmanClass::kAc, 1, {0, 2, 1, 2, 4, 4, 3, 4, 7, 5, 4, 4, 0, 1, 2, 0x77},
    {0x00, 0x01, 0x02, 0x03, 0x11, 0x04, 0x05, 0x21, 0x31, 0x06, 0x12, 0x41,
     0x51, 0x07, 0x61, 0x71, 0x13, 0x22, 0x32, 0x81, 0x08, 0x14, 0x42, 0x91,
     0xa1, 0xb1, 0xc1, 0x09, 0x23, 0x33, 0x52, 0xf0, 0x15, 0x62, 0x72, 0xd1,
     0x0a, 0x16, 0x24, 0x34, 0xe1, 0x25, 0xf1, 0x17, 0x18, 0x19, 0x1a, 0x26,
     0x27, 0x28, 0x29, 0x2a, 0x35, 0x36, 0x37, 0x38, 0x39, 0x3a, 0x43, 0x44,
     0x45, 0x46, 0x47, 0x48, 0x49, 0x4a, 0x53, 0x54, 0x55, 0x56, 0x57, 0x58,
     0x59, 0x5a, 0x63, 0x64, 0x65, 0x66, 0x67, 0x68, 0x69, 0x6a, 0x73, 0x74,
     0x75, 0x76, 0x77, 0x78, 0x79, 0x7a, 0x82, 0x83, 0x84, 0x85, 0x86, 0x87,
     0x88, 0x89, 0x8a, 0x92, 0x93, 0x94, 0x95, 0x96, 0x97, 0x98, 0x99, 0x9a,
     0xa2, 0xa3, 0xa4, 0xa5, 0xa6, 0xa7, 0xa8, 0xa9, 0xaa, 0xb2, 0xb3, 0xb4,
     0xb5, 0xb6, 0xb7, 0xb8, 0xb9, 0xba, 0xc2, 0xc3, 0xc4, 0xc5, 0xc6, 0xc7,
     0xc8, 0xc9, 0xca, 0xd2, 0xd3, 0xd4, 0xd5, 0xd6, 0xd7, 0xd8, 0xd9, 0xda,
     0xe2, 0xe3, 0xe4, 0xe5, 0xe6, 0xe7, 0xe8, 0xe9, 0xea, 0xf2, 0xf3, 0xf4,
     0xf5, 0xf6, 0xf7, 0xf8, 0xf9, 0xfa});

// ---------------------------------------------------------------------------
// Encoding

struct HuffmanCode {
  uint16_t code = 0;
  uint8_t length = 0;
};

// Annex C: canonical code assignment indexed by symbol.
std::array<HuffmanCode, 256> BuildEncodeTable(const HuffmanSpec& spec) {
  std::array<HuffmanCode, 256> table{};
  uint32_t code = 0;
  size_t k = 0;
  for (int len = 1; len <= 16; ++len) {
    for (int i = 0; i < spec.bits[len - 1]; ++i, ++k) {
      table[spec.huffval[k]] = {static_cast<uint16_t>(code),
                                static_cast<uint8_t>(len)};
      ++code;
    }
    code <<= 1;
  }
  return table;
}

class BitWriter {
 public:
  explicit BitWriter(std::vector<uint8_t>* out) : out_(out) {}

  void Write(uint32_t bits, int count) {
    for (int i = count - 1; i >= 0; --i) {
      acc_ = static_cast<uint8_t>((acc_ << 1) | ((bits >> i) & 1));
      if (++used_ == 8) Emit();
    }
  }

  // Pads the final byte with 1-bits.
  void Flush() {
    while (used_ != 0) Write(1, 1);
  }

 private:
  void Emit() {
    out_->push_back(acc_);
    if (acc_ == 0xFF) out_->push_back(0x00);
    acc_ = 0;
    used_ = 0;
  }

  std::vector<uint8_t>* out_;
  uint8_t acc_ = 0;
  int used_ = 0;
};

int Category(int v) {
  int magnitude = std::abs(v);
  int bits = 0;
  while (magnitude > 0) {
    ++bits;
    magnitude >>= 1;
  }
  return bits;
}

// Low `category` bits of v's JPEG amplitude encoding.
uint32_t Amplitude(int v, int category) {
  if (v < 0) v += (1 << category) - 1;
  return static_cast<uint32_t>(v) & ((1u << category) - 1);
}

struct EncodeTables {
  std::array<HuffmanCode, 256> dc;
  std::array<HuffmanCode, 256> ac;
};

void EncodeBlock(std::span<const double, kBlockSize> block, int* dc_pred,
                 const EncodeTables& t, BitWriter* writer) {
  const int dc = static_cast<int>(block[0]);
  const int diff = dc - *dc_pred;
  if (std::abs(diff) > kMaxDcDiff) {
    throw Error(ErrorKind::kFormat, "DC difference " + std::to_string(diff) +
                                        " exceeds baseline range");
  }
  *dc_pred = dc;
  const int dc_cat = Category(diff);
  writer->Write(t.dc[dc_cat].code, t.dc[dc_cat].length);
  writer->Write(Amplitude(diff, dc_cat), dc_cat);

  int run = 0;
  for (int k = 1; k < kBlockSize; ++k) {
    const int v = static_cast<int>(block[kZigzag[k]]);
    if (v == 0) {
      ++run;
      continue;
    }
    while (run > 15) {
      writer->Write(t.ac[0xF0].code, t.ac[0xF0].length);
      run -= 16;
    }
    const int cat = Category(v);
    const int symbol = (run << 4) | cat;
    writer->Write(t.ac[symbol].code, t.ac[symbol].length);
    writer->Write(Amplitude(v, cat), cat);
    run = 0;
  }
  if (run > 0) writer->Write(t.ac[0x00].code, t.ac[0x00].length);
}

void PutU16(std::vector<uint8_t>* out, int v) {
  out->push_back(static_cast<uint8_t>((v >> 8) & 0xFF));
  out->push_back(static_cast<uint8_t>(v & 0xFF));
}

void PutMarker(std::vector<uint8_t>* out, uint8_t marker) {
  out->push_back(0xFF);
  out->push_back(marker);
}

void CheckCoefficientRanges(const CoefficientTensor& coeffs) {
  for (size_t c = 0; c < coeffs.channels.size(); ++c) {
    const CoefficientChannel& ch = coeffs.channels[c];
    for (size_t b = 0; b < ch.num_blocks(); ++b) {
      const auto block = ch.block(b);
      for (int k = 1; k < kBlockSize; ++k) {
        if (std::abs(block[k]) > kMaxAc) {
          throw Error(ErrorKind::kFormat,
                      "AC level " + std::to_string(block[k]) +
                          " exceeds baseline range in channel " +
                          std::to_string(c));
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Decoding

struct DecodeTable {
  bool defined = false;
  std::array<int32_t, 18> maxcode{};
  std::array<int32_t, 17> valptr{};
  std::array<int32_t, 17> mincode{};
  std::vector<uint8_t> huffval;
};

struct FrameComponent {
  int id = 0;
  int h = 1;
  int v = 1;
  int tq = 0;
  int dc_table = 0;
  int ac_table = 0;
  bool scanned = false;
};

class Reader {
 public:
  explicit Reader(std::span<const uint8_t> data) : data_(data) {}

  JfifContents Read();

 private:
  uint8_t Byte(size_t at) const {
    if (at >= data_.size()) {
      throw ParseError(at, "truncated stream");
    }
    return data_[at];
  }
  int U16(size_t at) const { return (Byte(at) << 8) | Byte(at + 1); }

  // Returns the marker code at pos_, advancing past it.
  uint8_t NextMarker();
  // Returns [start, end) of the current segment payload.
  std::pair<size_t, size_t> SegmentBounds();

  void ParseDqt(size_t begin, size_t end);
  void ParseDht(size_t begin, size_t end);
  void ParseDri(size_t begin, size_t end);
  void ParseSof(size_t begin, size_t end);
  void ParseSosAndScan(size_t begin, size_t end);

  // Entropy-coded segment state.
  int ReadBit();
  int ReceiveExtend(int size);
  int DecodeSymbol(const DecodeTable& table);
  void DecodeBlock(FrameComponent& comp, int* dc_pred,
                   std::span<double, kBlockSize> block);
  void ProcessRestart(int* expected_rst, std::vector<int>* preds);

  std::span<const uint8_t> data_;
  size_t pos_ = 0;

  std::array<std::optional<std::array<int, kBlockSize>>, 4> qtables_;
  std::array<DecodeTable, 4> dc_tables_;
  std::array<DecodeTable, 4> ac_tables_;
  int restart_interval_ = 0;

  bool have_frame_ = false;
  int width_ = 0;
  int height_ = 0;
  int hmax_ = 1;
  int vmax_ = 1;
  std::vector<FrameComponent> components_;
  CoefficientTensor coeffs_;
  std::optional<QuantMatrices> tables_at_scan_;

  uint32_t bit_acc_ = 0;
  int bits_left_ = 0;
};

uint8_t Reader::NextMarker() {
  if (Byte(pos_) != 0xFF) {
    throw ParseError(pos_, "expected a marker (0xFF), found 0x" +
                               std::to_string(Byte(pos_)));
  }
  while (Byte(pos_) == 0xFF) ++pos_;  // fill bytes
  return Byte(pos_++);
}

std::pair<size_t, size_t> Reader::SegmentBounds() {
  const size_t len_at = pos_;
  const int length = U16(pos_);
  if (length < 2) throw ParseError(len_at, "segment length below 2");
  const size_t end = pos_ + static_cast<size_t>(length);
  if (end > data_.size()) {
    throw ParseError(data_.size(), "truncated segment, expected " +
                                       std::to_string(length) + " bytes");
  }
  pos_ = end;
  return {len_at + 2, end};
}

void Reader::ParseDqt(size_t begin, size_t end) {
  size_t p = begin;
  while (p < end) {
    const int pq = Byte(p) >> 4;
    const int tq = Byte(p) & 15;
    ++p;
    if (tq > 3) throw ParseError(p - 1, "quantization table id above 3");
    if (pq > 1) throw ParseError(p - 1, "bad quantization table precision");
    const size_t need = pq == 0 ? 64 : 128;
    if (p + need > end) throw ParseError(p, "DQT segment too short");
    std::array<int, kBlockSize> table{};
    for (int k = 0; k < kBlockSize; ++k) {
      const int v = pq == 0 ? Byte(p + k) : U16(p + 2 * k);
      if (v == 0) throw ParseError(p, "zero quantization table entry");
      if (v > 255) {
        throw Error(ErrorKind::kUnsupported,
                    "quantization entries above 255 are not supported");
      }
      table[kZigzag[k]] = v;
    }
    p += need;
    qtables_[tq] = table;
  }
}

void Reader::ParseDht(size_t begin, size_t end) {
  size_t p = begin;
  while (p < end) {
    const int tc = Byte(p) >> 4;
    const int th = Byte(p) & 15;
    if (tc > 1 || th > 3) throw ParseError(p, "bad Huffman table class/id");
    ++p;
    if (p + 16 > end) throw ParseError(p, "DHT segment too short");
    std::array<int, 17> bits{};
    int total = 0;
    for (int i = 1; i <= 16; ++i) {
      bits[i] = Byte(p + i - 1);
      total += bits[i];
    }
    p += 16;
    if (total > 256 || p + total > end) {
      throw ParseError(p, "bad Huffman symbol count");
    }
    DecodeTable t;
    t.huffval.assign(data_.begin() + p, data_.begin() + p + total);
    p += total;
    // Annex F.2.2.3 decoder tables; reject over-subscribed code spaces.
    int32_t code = 0;
    int k = 0;
    for (int len = 1; len <= 16; ++len) {
      t.valptr[len] = k;
      t.mincode[len] = code;
      code += bits[len];
      k += bits[len];
      if (code > (1 << len)) throw ParseError(p, "over-subscribed Huffman table");
      t.maxcode[len] = bits[len] ? code - 1 : -1;
      code <<= 1;
    }
    t.maxcode[17] = 0x7FFFFFFF;
    t.defined = true;
    (tc == 0 ? dc_tables_ : ac_tables_)[th] = std::move(t);
  }
}

void Reader::ParseDri(size_t begin, size_t end) {
  if (end - begin != 2) throw ParseError(begin, "DRI length must be 4");
  restart_interval_ = U16(begin);
}

void Reader::ParseSof(size_t begin, size_t end) {
  if (have_frame_) throw ParseError(begin, "second frame header");
  if (end - begin < 6) throw ParseError(begin, "SOF segment too short");
  const int precision = Byte(begin);
  if (precision != 8) {
    throw Error(ErrorKind::kUnsupported,
                "sample precision " + std::to_string(precision));
  }
  height_ = U16(begin + 1);
  width_ = U16(begin + 3);
  const int nc = Byte(begin + 5);
  if (height_ == 0) {
    throw Error(ErrorKind::kUnsupported, "DNL-defined image height");
  }
  if (width_ == 0) throw ParseError(begin + 3, "zero image width");
  if (nc != 1 && nc != 3) {
    throw Error(ErrorKind::kUnsupported,
                std::to_string(nc) + " components (need 1 or 3)");
  }
  if (end - begin != 6 + 3 * static_cast<size_t>(nc)) {
    throw ParseError(begin, "SOF length does not match component count");
  }
  for (int i = 0; i < nc; ++i) {
    const size_t at = begin + 6 + 3 * i;
    FrameComponent comp;
    comp.id = Byte(at);
    comp.h = Byte(at + 1) >> 4;
    comp.v = Byte(at + 1) & 15;
    comp.tq = Byte(at + 2);
    if (comp.h < 1 || comp.h > 4 || comp.v < 1 || comp.v > 4 || comp.tq > 3) {
      throw ParseError(at, "bad component parameters");
    }
    for (const auto& other : components_) {
      if (other.id == comp.id) throw ParseError(at, "duplicate component id");
    }
    components_.push_back(comp);
  }

  Subsampling subsampling = Subsampling::k444;
  if (nc == 1) {
    components_[0].h = components_[0].v = 1;
  } else {
    const auto& y = components_[0];
    const bool chroma_1x1 = components_[1].h == 1 && components_[1].v == 1 &&
                            components_[2].h == 1 && components_[2].v == 1;
    if (chroma_1x1 && y.h == 1 && y.v == 1) {
      subsampling = Subsampling::k444;
    } else if (chroma_1x1 && y.h == 2 && y.v == 2) {
      subsampling = Subsampling::k420;
    } else {
      throw Error(ErrorKind::kUnsupported,
                  "component sampling other than 4:4:4 or 4:2:0");
    }
  }
  for (const auto& comp : components_) {
    hmax_ = std::max(hmax_, comp.h);
    vmax_ = std::max(vmax_, comp.v);
  }

  if (width_ < kBlockDim || height_ < kBlockDim) {
    throw Error(ErrorKind::kUnsupported, "images smaller than 8x8");
  }
  const BlockGeometry geo = ComputeGeometry(width_, height_, nc, subsampling);
  size_t total_blocks = 0;
  for (int c = 0; c < nc; ++c) total_blocks += geo.num_blocks(c);
  // Every block costs at least two bits of entropy-coded data, which bounds
  // what an honest stream of this size can describe.
  if (total_blocks > 4 * data_.size() + 64) {
    throw ParseError(begin + 1, "frame dimensions exceed what the stream "
                                "can encode");
  }
  coeffs_ = MakeCoefficientTensor(width_, height_, geo, 0);
  have_frame_ = true;
}

int Reader::ReadBit() {
  if (bits_left_ == 0) {
    if (pos_ >= data_.size()) {
      throw ParseError(pos_, "truncated entropy-coded data");
    }
    uint8_t b = data_[pos_];
    if (b == 0xFF) {
      if (pos_ + 1 >= data_.size()) {
        throw ParseError(pos_, "truncated entropy-coded data");
      }
      if (data_[pos_ + 1] != 0x00) {
        throw ParseError(pos_, "entropy-coded data ended early at marker");
      }
      pos_ += 2;
    } else {
      ++pos_;
    }
    bit_acc_ = b;
    bits_left_ = 8;
  }
  --bits_left_;
  return (bit_acc_ >> bits_left_) & 1;
}

int Reader::ReceiveExtend(int size) {
  if (size == 0) return 0;
  int v = 0;
  for (int i = 0; i < size; ++i) v = (v << 1) | ReadBit();
  if (v < (1 << (size - 1))) v -= (1 << size) - 1;
  return v;
}

int Reader::DecodeSymbol(const DecodeTable& table) {
  int32_t code = ReadBit();
  int len = 1;
  while (code > table.maxcode[len]) {
    if (++len > 16) throw ParseError(pos_, "invalid Huffman code");
    code = (code << 1) | ReadBit();
  }
  const int idx = table.valptr[len] + code - table.mincode[len];
  if (idx < 0 || idx >= static_cast<int>(table.huffval.size())) {
    throw ParseError(pos_, "invalid Huffman code");
  }
  return table.huffval[idx];
}

void Reader::DecodeBlock(FrameComponent& comp, int* dc_pred,
                         std::span<double, kBlockSize> block) {
  const int t = DecodeSymbol(dc_tables_[comp.dc_table]);
  if (t > 15) throw ParseError(pos_, "bad DC magnitude category");
  *dc_pred += ReceiveExtend(t);
  block[0] = *dc_pred;
  for (int k = 1; k < kBlockSize;) {
    const int rs = DecodeSymbol(ac_tables_[comp.ac_table]);
    const int r = rs >> 4;
    const int s = rs & 15;
    if (s == 0) {
      if (r != 15) break;  // EOB
      k += 16;
      continue;
    }
    k += r;
    if (k > 63) throw ParseError(pos_, "AC run past end of block");
    block[kZigzag[k]] = ReceiveExtend(s);
    ++k;
  }
}

void Reader::ProcessRestart(int* expected_rst, std::vector<int>* preds) {
  bits_left_ = 0;
  if (pos_ + 1 >= data_.size() || data_[pos_] != 0xFF ||
      data_[pos_ + 1] != kRST0 + *expected_rst) {
    throw ParseError(pos_, "expected RST" + std::to_string(*expected_rst) +
                               " marker");
  }
  pos_ += 2;
  *expected_rst = (*expected_rst + 1) & 7;
  std::fill(preds->begin(), preds->end(), 0);
}

void Reader::ParseSosAndScan(size_t begin, size_t end) {
  if (!have_frame_) throw ParseError(begin, "SOS before frame header");
  const int ns = Byte(begin);
  if (ns < 1 || ns > static_cast<int>(components_.size()) ||
      end - begin != 4 + 2 * static_cast<size_t>(ns)) {
    throw ParseError(begin, "bad scan header");
  }
  std::vector<int> scan_comps;
  for (int i = 0; i < ns; ++i) {
    const size_t at = begin + 1 + 2 * i;
    const int id = Byte(at);
    auto it = std::find_if(components_.begin(), components_.end(),
                           [id](const FrameComponent& c) { return c.id == id; });
    if (it == components_.end()) throw ParseError(at, "unknown scan component");
    const int index = static_cast<int>(it - components_.begin());
    if (std::find(scan_comps.begin(), scan_comps.end(), index) !=
        scan_comps.end()) {
      throw ParseError(at, "component repeated in scan");
    }
    it->dc_table = Byte(at + 1) >> 4;
    it->ac_table = Byte(at + 1) & 15;
    if (it->dc_table > 3 || it->ac_table > 3 ||
        !dc_tables_[it->dc_table].defined ||
        !ac_tables_[it->ac_table].defined) {
      throw ParseError(at + 1, "scan references an undefined Huffman table");
    }
    if (!qtables_[it->tq]) {
      throw ParseError(at, "component references an undefined quantization "
                           "table");
    }
    scan_comps.push_back(index);
  }
  const size_t sel = begin + 1 + 2 * ns;
  if (Byte(sel) != 0 || Byte(sel + 1) != 63 || Byte(sel + 2) != 0) {
    throw Error(ErrorKind::kUnsupported, "non-sequential scan parameters");
  }

  if (!tables_at_scan_) {
    QuantMatrices q;
    q.luma = *qtables_[components_[0].tq];
    q.chroma = q.luma;
    if (components_.size() == 3) {
      const auto& cb = *qtables_[components_[1].tq];
      const auto& cr = *qtables_[components_[2].tq];
      if (cb != cr) {
        throw Error(ErrorKind::kUnsupported,
                    "distinct Cb and Cr quantization tables");
      }
      q.chroma = cb;
    }
    tables_at_scan_ = q;
  }

  bits_left_ = 0;
  std::vector<int> preds(components_.size(), 0);
  int expected_rst = 0;
  if (ns == 1) {
    // Non-interleaved: the component's own block grid, no MCU padding.
    const int ci = scan_comps[0];
    FrameComponent& comp = components_[ci];
    const int comp_w = (width_ * comp.h + hmax_ - 1) / hmax_;
    const int comp_h = (height_ * comp.v + vmax_ - 1) / vmax_;
    const int bw = (comp_w + 7) / 8;
    const int bh = (comp_h + 7) / 8;
    CoefficientChannel& ch = coeffs_.channels[ci];
    long long mcu = 0;
    for (int by = 0; by < bh; ++by) {
      for (int bx = 0; bx < bw; ++bx, ++mcu) {
        if (restart_interval_ && mcu > 0 && mcu % restart_interval_ == 0) {
          ProcessRestart(&expected_rst, &preds);
        }
        auto block = ch.block(static_cast<size_t>(by) * ch.blocks_wide + bx);
        DecodeBlock(comp, &preds[ci], block);
      }
    }
  } else {
    const int mcus_wide = (width_ + 8 * hmax_ - 1) / (8 * hmax_);
    const int mcus_high = (height_ + 8 * vmax_ - 1) / (8 * vmax_);
    long long mcu = 0;
    for (int my = 0; my < mcus_high; ++my) {
      for (int mx = 0; mx < mcus_wide; ++mx, ++mcu) {
        if (restart_interval_ && mcu > 0 && mcu % restart_interval_ == 0) {
          ProcessRestart(&expected_rst, &preds);
        }
        for (int ci : scan_comps) {
          FrameComponent& comp = components_[ci];
          CoefficientChannel& ch = coeffs_.channels[ci];
          for (int v = 0; v < comp.v; ++v) {
            for (int h = 0; h < comp.h; ++h) {
              const int by = my * comp.v + v;
              const int bx = mx * comp.h + h;
              auto block =
                  ch.block(static_cast<size_t>(by) * ch.blocks_wide + bx);
              DecodeBlock(comp, &preds[ci], block);
            }
          }
        }
      }
    }
  }
  for (int ci : scan_comps) components_[ci].scanned = true;

  // Skip the padding bits and anything else up to the next marker.
  bits_left_ = 0;
  while (pos_ + 1 < data_.size() &&
         !(data_[pos_] == 0xFF && data_[pos_ + 1] != 0x00)) {
    ++pos_;
  }
  if (pos_ + 1 >= data_.size()) {
    throw ParseError(data_.size(), "expected EOI marker (0xFFD9)");
  }
}

JfifContents Reader::Read() {
  if (data_.size() < 2 || data_[0] != 0xFF || data_[1] != kSOI) {
    throw ParseError(0, "missing SOI marker (0xFFD8)");
  }
  pos_ = 2;
  while (true) {
    if (pos_ >= data_.size()) {
      throw ParseError(pos_, "expected EOI marker (0xFFD9)");
    }
    const size_t marker_at = pos_;
    const uint8_t marker = NextMarker();
    if (marker == kEOI) break;
    if (marker == 0x01 || (marker >= kRST0 && marker <= kRST0 + 7)) {
      continue;  // standalone markers
    }
    if (marker == kSOI) throw ParseError(marker_at, "unexpected SOI marker");
    if (marker == kSOF2) {
      throw Error(ErrorKind::kUnsupported, "progressive JPEG (SOF2)");
    }
    if ((marker >= 0xC3 && marker <= 0xCF) && marker != kDHT &&
        marker != 0xC8 && marker != 0xCC) {
      throw Error(ErrorKind::kUnsupported,
                  "frame type SOF" + std::to_string(marker - 0xC0));
    }
    if (marker == 0xCC) {
      throw Error(ErrorKind::kUnsupported, "arithmetic coding");
    }
    const auto [begin, end] = SegmentBounds();
    switch (marker) {
      case kSOF0:
      case kSOF1:
        ParseSof(begin, end);
        break;
      case kDHT:
        ParseDht(begin, end);
        break;
      case kDQT:
        ParseDqt(begin, end);
        break;
      case kDRI:
        ParseDri(begin, end);
        break;
      case kSOS:
        ParseSosAndScan(begin, end);
        break;
      default:
        break;  // APPn, COM and anything else: skipped by length
    }
  }
  if (!have_frame_) throw ParseError(pos_, "no frame header before EOI");
  for (const auto& comp : components_) {
    if (!comp.scanned) {
      throw ParseError(pos_, "component " + std::to_string(comp.id) +
                                 " has no scan");
    }
  }

  JfifContents out;
  out.tables = *tables_at_scan_;
  out.tables.quality = 0;
  for (int q = 1; q <= 100; ++q) {
    const QuantMatrices candidate = ScaleQuantTables(q);
    if (candidate.luma == out.tables.luma &&
        (components_.size() == 1 || candidate.chroma == out.tables.chroma)) {
      out.tables.quality = q;
      break;
    }
  }
  if (components_.size() == 1) out.tables.chroma = out.tables.luma;
  coeffs_.quality = out.tables.quality;
  out.coefficients = std::move(coeffs_);
  return out;
}

}  // namespace

const std::array<int, kBlockSize>& ZigzagOrder() { return kZigzag; }

const HuffmanSpec& StandardHuffmanTable(HuffmanClass table_class, int id) {
  if (table_class == HuffmanClass::kDc) return id == 0 ? kDcLuma : kDcChroma;
  return id == 0 ? kAcLuma : kAcChroma;
}

std::vector<uint8_t> WriteJfif(const CoefficientTensor& coeffs,
                               const QuantMatrices& tables) {
  if (coeffs.width > 65535 || coeffs.height > 65535) {
    throw Error(ErrorKind::kFormat, "JPEG dimensions are limited to 65535");
  }
  const BlockGeometry geo = GeometryOf(coeffs);
  if (!coeffs.IsIntegral()) {
    throw Error(ErrorKind::kPrecondition,
                "coefficients must be integer-valued before entropy coding; "
                "round the perturbed tensor first");
  }
  for (int i = 0; i < kBlockSize; ++i) {
    if (tables.luma[i] < 1 || tables.luma[i] > 255 || tables.chroma[i] < 1 ||
        tables.chroma[i] > 255) {
      throw Error(ErrorKind::kFormat, "quantization entries must be 1..255");
    }
  }
  CheckCoefficientRanges(coeffs);
  const int nc = geo.num_channels;

  std::vector<uint8_t> out;
  out.reserve(coeffs.ElementCount() / 4 + 1024);
  PutMarker(&out, kSOI);

  PutMarker(&out, kAPP0);
  PutU16(&out, 16);
  for (char ch : {'J', 'F', 'I', 'F', '\0'}) out.push_back(static_cast<uint8_t>(ch));
  out.insert(out.end(), {1, 1, 0});  // version 1.01, no density units
  PutU16(&out, 1);
  PutU16(&out, 1);
  out.insert(out.end(), {0, 0});  // no thumbnail

  const int ntables = nc == 1 ? 1 : 2;
  PutMarker(&out, kDQT);
  PutU16(&out, 2 + 65 * ntables);
  for (int t = 0; t < ntables; ++t) {
    out.push_back(static_cast<uint8_t>(t));
    const auto& table = t == 0 ? tables.luma : tables.chroma;
    for (int k = 0; k < kBlockSize; ++k) {
      out.push_back(static_cast<uint8_t>(table[kZigzag[k]]));
    }
  }

  PutMarker(&out, kSOF0);
  PutU16(&out, 8 + 3 * nc);
  out.push_back(8);
  PutU16(&out, coeffs.height);
  PutU16(&out, coeffs.width);
  out.push_back(static_cast<uint8_t>(nc));
  for (int c = 0; c < nc; ++c) {
    out.push_back(static_cast<uint8_t>(c + 1));
    const bool big = c == kY && nc == 3 && geo.subsampling == Subsampling::k420;
    out.push_back(big ? 0x22 : 0x11);
    out.push_back(c == kY ? 0 : 1);
  }

  PutMarker(&out, kDHT);
  size_t dht_len = 2;
  std::vector<const HuffmanSpec*> specs = {&kDcLuma, &kAcLuma};
  if (nc == 3) specs.insert(specs.end(), {&kDcChroma, &kAcChroma});
  for (const HuffmanSpec* s : specs) dht_len += 17 + s->huffval.size();
  PutU16(&out, static_cast<int>(dht_len));
  for (const HuffmanSpec* s : specs) {
    out.push_back(static_cast<uint8_t>((static_cast<int>(s->table_class) << 4) |
                                       s->id));
    out.insert(out.end(), s->bits.begin(), s->bits.end());
    out.insert(out.end(), s->huffval.begin(), s->huffval.end());
  }

  PutMarker(&out, kSOS);
  PutU16(&out, 6 + 2 * nc);
  out.push_back(static_cast<uint8_t>(nc));
  for (int c = 0; c < nc; ++c) {
    out.push_back(static_cast<uint8_t>(c + 1));
    out.push_back(c == kY ? 0x00 : 0x11);
  }
  out.insert(out.end(), {0, 63, 0});

  const EncodeTables luma{BuildEncodeTable(kDcLuma),
                          BuildEncodeTable(kAcLuma)};
  const EncodeTables chroma{BuildEncodeTable(kDcChroma),
                            BuildEncodeTable(kAcChroma)};
  BitWriter writer(&out);
  std::array<int, 3> preds{};
  auto encode = [&](int c, int by, int bx) {
    const CoefficientChannel& ch = coeffs.channels[c];
    EncodeBlock(ch.block(static_cast<size_t>(by) * ch.blocks_wide + bx),
                &preds[c], c == kY ? luma : chroma, &writer);
  };
  if (nc == 3 && geo.subsampling == Subsampling::k420) {
    const CoefficientChannel& cb = coeffs.channels[kCb];
    for (int my = 0; my < cb.blocks_high; ++my) {
      for (int mx = 0; mx < cb.blocks_wide; ++mx) {
        for (int v = 0; v < 2; ++v) {
          for (int h = 0; h < 2; ++h) encode(kY, 2 * my + v, 2 * mx + h);
        }
        encode(kCb, my, mx);
        encode(kCr, my, mx);
      }
    }
  } else {
    const CoefficientChannel& y = coeffs.channels[kY];
    for (int by = 0; by < y.blocks_high; ++by) {
      for (int bx = 0; bx < y.blocks_wide; ++bx) {
        for (int c = 0; c < nc; ++c) encode(c, by, bx);
      }
    }
  }
  writer.Flush();
  PutMarker(&out, kEOI);
  return out;
}

JfifContents ReadJfif(std::span<const uint8_t> stream) {
  return Reader(stream).Read();
}

PixelImage Recompress(const PixelImage& image, int quality,
                      Subsampling subsampling) {
  const CoefficientTensor coeffs =
      JpegEncodeTransform(image, quality, subsampling);
  const std::vector<uint8_t> bytes =
      WriteJfif(coeffs, ScaleQuantTables(quality));
  const JfifContents decoded = ReadJfif(bytes);
  return JpegDecodeTransform(decoded.coefficients, decoded.tables,
                             DecodeMode::kEmit);
}

}  // namespace dct_shield
