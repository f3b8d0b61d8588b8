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
#include <vector>

#include "fedmp/engine.hpp"

namespace fedmp {

struct GradCheckOptions {
  double epsilon = 1e-4;
  double tolerance = 1e-3;
  // Denominator floor for the relative error, so coordinates whose true
  // gradient is numerically zero are judged by absolute error.
  double floor = 1e-6;
};

struct GradCheckResult {
  std::size_t checked = 0;
  // Coordinates whose +/- epsilon probes cross a ReLU or max-selection
  // boundary; central differences are meaningless there.
  std::size_t skipped = 0;
  std::size_t failed = 0;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;

  bool passed() const { return failed == 0 && checked > 0; }
};

// Compares backward() against central differences of bce_loss on a
// single-client full-graph forward, coordinate by coordinate.
GradCheckResult check_gradient(const ModelParams& params, const Graph& g,
                               std::span<const std::uint32_t> nodes, const LossConfig& loss,
                               const GradCheckOptions& opts = {});

}  // namespace fedmp
