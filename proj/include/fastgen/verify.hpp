// SPDX-License-Identifier: Apache-2.0

// Self-check suite run by `fastgen verify`.

#pragma once

#include <string>
#include <vector>

namespace fastgen {

struct VerifyOptions {
  bool quick = false;
  /// Perturbs one weight of the network handed to the cached engines, so the
  /// equivalence checks must fail.
  bool inject_fault = false;
};

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0;
};

std::vector<CheckResult> run_verify(const VerifyOptions& options);

/// "check=<name> status=PASS|FAIL time_s=<s> detail=<text>"
std::string format_check(const CheckResult& result);

}  // namespace fastgen
