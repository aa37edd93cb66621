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

#ifndef DCT_SHIELD_ERROR_H_
#define DCT_SHIELD_ERROR_H_

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dct_shield {

enum class ErrorKind {
  kDimension,     // image/plane geometry does not fit the operation
  kShape,         // tensor shapes disagree
  kConfig,        // invalid configuration value
  kPrecondition,  // caller violated a documented precondition
  kFormat,        // value cannot be represented in the output format
  kParse,         // malformed input stream
  kUnsupported,   // well-formed input using an unsupported feature
  kIo,
};

const char* ErrorKindName(ErrorKind kind);

// All recoverable failures in the library are reported with this type.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

// Parse failures carry the byte offset at which the stream went wrong.
class ParseError : public Error {
 public:
  ParseError(size_t offset, const std::string& message);

  size_t offset() const { return offset_; }

 private:
  size_t offset_;
};

}  // namespace dct_shield

#endif  // DCT_SHIELD_ERROR_H_
