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

#include <span>
#include <string>
#include <vector>

namespace fedmp {

// A result or sweep bundle as written by the experiment runner.
struct BundleText {
  std::string name;
  std::string json;
};

struct PlotFile {
  std::string name;
  std::string content;
};

// Sweep bundles become a line chart (one line per variant, dotted
// centralized level) plus its CSV. Result bundles are drawn together as one
// per-task bar chart plus CSV; they must cover the same defined tasks.
std::vector<PlotFile> render_plots(std::span<const BundleText> bundles);

}  // namespace fedmp
