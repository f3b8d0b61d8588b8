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

#include <filesystem>
#include <string>
#include <string_view>

#include "fedmp/graph.hpp"

namespace fedmp {

// Edge-list text format:
//
//   nodes=<N> din=<k> de=<m>
//   <src> <dst> [m edge feature values]     one line per edge, in edge-id order
//   feat <node> <k values>                  one line per node when k > 0
//   label <node> <7 chars of 0/1>           one line per node with any label set
//
// Blank lines and lines starting with '#' are ignored. Reals are written with
// 17 significant digits so the round trip is bit exact. Label masks list
// tasks in order C2 C3 C4 C5 C6 S-G B-C, left to right.
std::string serialize(const Graph& g);
Graph deserialize(std::string_view text);

Graph load_graph(const std::filesystem::path& path);
void save_graph(const Graph& g, const std::filesystem::path& path);

}  // namespace fedmp
