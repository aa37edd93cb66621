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

#include "dct_shield/png_io.h"

#include <png.h>

#include <cstring>
#include <fstream>
#include <iterator>

#include "dct_shield/error.h"

namespace dct_shield {

PixelImage ReadPng(const std::string& path) {
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str())) {
    throw Error(ErrorKind::kIo, "cannot read PNG '" + path + "': " +
                                    png.message);
  }
  const bool gray = (png.format & PNG_FORMAT_FLAG_COLOR) == 0;
  png.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  const int channels = gray ? 1 : 3;
  std::vector<uint8_t> buffer(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, buffer.data(), 0, nullptr)) {
    const std::string message = png.message;
    png_image_free(&png);
    throw Error(ErrorKind::kIo, "cannot decode PNG '" + path + "': " + message);
  }
  PixelImage image(static_cast<int>(png.width), static_cast<int>(png.height),
                   channels);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      for (int c = 0; c < channels; ++c) {
        image.at(c, y, x) =
            buffer[(static_cast<size_t>(y) * image.width + x) * channels + c];
      }
    }
  }
  return image;
}

void WritePng(const std::string& path, const PixelImage& image) {
  if (image.channels != 1 && image.channels != 3) {
    throw Error(ErrorKind::kDimension, "PNG output needs 1 or 3 channels");
  }
  const PixelImage q = image.Quantized8();
  std::vector<uint8_t> buffer(q.data.size());
  for (int y = 0; y < q.height; ++y) {
    for (int x = 0; x < q.width; ++x) {
      for (int c = 0; c < q.channels; ++c) {
        buffer[(static_cast<size_t>(y) * q.width + x) * q.channels + c] =
            static_cast<uint8_t>(q.at(c, y, x));
      }
    }
  }
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(q.width);
  png.height = static_cast<png_uint_32>(q.height);
  png.format = q.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&png, path.c_str(), 0, buffer.data(), 0,
                               nullptr)) {
    throw Error(ErrorKind::kIo,
                "cannot write PNG '" + path + "': " + png.message);
  }
}

std::vector<uint8_t> ReadFileBytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open '" + path + "'");
  return std::vector<uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void WriteFileBytes(const std::string& path,
                    const std::vector<uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "cannot create '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::kIo, "short write to '" + path + "'");
}

}  // namespace dct_shield
