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

#ifndef DCT_SHIELD_PNG_IO_H_
#define DCT_SHIELD_PNG_IO_H_

#include <cstdint>
#include <string>
#include <vector>

#include "dct_shield/image.h"

namespace dct_shield {

// Reads an 8-bit PNG. Gray and gray+alpha load as 1 channel, everything else
// as RGB; alpha is composited away by libpng.
PixelImage ReadPng(const std::string& path);

// Writes samples rounded half-to-even and clamped to [0, 255].
void WritePng(const std::string& path, const PixelImage& image);

std::vector<uint8_t> ReadFileBytes(const std::string& path);
void WriteFileBytes(const std::string& path, const std::vector<uint8_t>& bytes);

}  // namespace dct_shield

#endif  // DCT_SHIELD_PNG_IO_H_
