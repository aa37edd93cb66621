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

#ifndef DCT_SHIELD_CLI_H_
#define DCT_SHIELD_CLI_H_

#include <iosfwd>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace dct_shield {

// Process exit codes.
enum ExitCode : int {
  kExitOk = 0,
  kExitDomainError = 1,
  kExitUsageError = 2,
};

// The dct-shield command line. args[0] is the program name.
int RunCli(const std::vector<std::string>& args, std::ostream& out,
           std::ostream& err);

// Flat "key = value" config text. '#' starts a comment line; blank lines are
// skipped. Keys are returned with '_' normalised to '-'. Throws
// Error(kParse) on a line without '='.
std::vector<std::pair<std::string, std::string>> ParseConfigText(
    std::string_view text);

// flag > 0 wins, then DCT_SHIELD_THREADS, then 1.
int ResolveThreadCount(int flag);

}  // namespace dct_shield

#endif  // DCT_SHIELD_CLI_H_
