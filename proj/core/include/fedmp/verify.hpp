// Copyright 2026 The fedmp Authors
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

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fedmp/exchange.hpp"

namespace fedmp {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::size_t instances = 0;
  std::size_t failures = 0;
  double metric = 0.0;  // check-specific magnitude, e.g. the largest difference seen
  std::string detail;
};

struct SuiteReport {
  std::string suite;
  std::vector<CheckResult> checks;
  // Hash over every number the suite computed; equal digests mean the runs
  // produced bit-identical results.
  std::uint64_t digest = 0;
  double seconds = 0.0;

  bool passed() const;
};

struct VerifyOptions {
  std::size_t instances = 0;  // 0 selects the suite default
  std::uint64_t seed = 0;
  Schedule schedule = Schedule::Serial;
};

std::span<const std::string_view> verify_suites();

// Throws ValidationError for an unknown suite name.
SuiteReport run_suite(std::string_view name, const VerifyOptions& opts = {});

std::string suite_report_text(const SuiteReport& report);
std::string suite_reports_json(std::span<const SuiteReport> reports);

}  // namespace fedmp
