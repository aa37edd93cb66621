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

#include "dct_shield/error.h"

namespace dct_shield {

const char* ErrorKindName(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kDimension: return "dimension error";
    case ErrorKind::kShape: return "shape error";
    case ErrorKind::kConfig: return "config error";
    case ErrorKind::kPrecondition: return "precondition error";
    case ErrorKind::kFormat: return "format error";
    case ErrorKind::kParse: return "parse error";
    case ErrorKind::kUnsupported: return "unsupported format";
    case ErrorKind::kIo: return "i/o error";
  }
  return "error";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(ErrorKindName(kind)) + ": " + message),
      kind_(kind) {}

ParseError::ParseError(size_t offset, const std::string& message)
    : Error(ErrorKind::kParse,
            message + " (at byte offset " + std::to_string(offset) + ")"),
      offset_(offset) {}

}  // namespace dct_shield
