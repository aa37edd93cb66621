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

#ifndef DCT_SHIELD_JPEG_CODEC_H_
#define DCT_SHIELD_JPEG_CODEC_H_

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "dct_shield/image.h"
#include "dct_shield/jpeg_core.h"

namespace dct_shield {

// Zigzag position -> natural (row-major) index.
const std::array<int, kBlockSize>& ZigzagOrder();

enum class HuffmanClass : uint8_t { kDc = 0, kAc = 1 };

// A Huffman table as carried by a DHT segment.
struct HuffmanSpec {
  HuffmanClass table_class = HuffmanClass::kDc;
  int id = 0;
  std::array<uint8_t, 16> bits{};  // number of codes of length 1..16
  std::vector<uint8_t> huffval;
};

// The four Annex K tables: DC/AC for luma (id 0) and chroma (id 1).
const HuffmanSpec& StandardHuffmanTable(HuffmanClass table_class, int id);

// Baseline sequential JFIF with the standard Huffman tables. `coeffs` must be
// integer-valued; real-valued perturbed tensors are rounded by the caller.
std::vector<uint8_t> WriteJfif(const CoefficientTensor& coeffs,
                               const QuantMatrices& tables);

struct JfifContents {
  CoefficientTensor coefficients;
  QuantMatrices tables;
};

// Entropy-decodes a baseline (or 8-bit extended Huffman) sequential JPEG
// with 1 or 3 components at 4:4:4 or 4:2:0. Throws ParseError on malformed
// input and Error(kUnsupported) for valid streams outside that subset.
JfifContents ReadJfif(std::span<const uint8_t> stream);

// encode -> JFIF -> decode at `quality`: the JPEG purification operator.
PixelImage Recompress(const PixelImage& image, int quality,
                      Subsampling subsampling = Subsampling::k420);

}  // namespace dct_shield

#endif  // DCT_SHIELD_JPEG_CODEC_H_
