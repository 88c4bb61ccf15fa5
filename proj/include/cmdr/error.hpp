// Copyright 2026 The CMDR Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace cmdr {

// Raised when a caller breaks an operation's precondition (shape mismatch,
// out-of-range index, invalid geometry).
class ContractViolation : public std::invalid_argument {
 public:
  explicit ContractViolation(const std::string& what)
      : std::invalid_argument(what) {}
};

// Runtime failure carrying a short machine-readable code such as "diverged",
// "empty image", "degenerate labels" or "protocol violation".
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(code + ": " + message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

#define CMDR_REQUIRE(cond, msg)                              \
  do {                                                       \
    if (!(cond)) throw ::cmdr::ContractViolation(msg);       \
  } while (0)

}  // namespace cmdr
