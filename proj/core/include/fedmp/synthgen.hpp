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
#include <map>
#include <utility>
#include <vector>

#include "fedmp/graph.hpp"

namespace fedmp {

enum class Split : std::uint8_t { Train, Val, Test };

std::string_view split_name(Split s);

// Shape of the scatter-gather motif: one source fans out to at least
// `min_intermediates` distinct nodes which all fan in to one sink.
struct ScatterGatherParams {
  std::size_t min_intermediates = 3;
};

// Shape of the directed biclique motif: every node of a left set of size
// >= `left` points to every node of a disjoint right set of size >= `right`.
struct BicliqueParams {
  std::size_t left = 2;
  std::size_t right = 3;
};

// Base topology knobs. Every node draws out-edges to offsets sampled (with
// multiplicity) from its own small window of a shared signed offset pool;
// afterwards a uniform fraction of edges is rewired to random targets.
struct TopologyParams {
  // Signed offsets are drawn from [-max_offset, max_offset] \ {0}.
  std::uint32_t max_offset = 16;
  std::size_t pool_size = 24;
  // Offsets a single node may use, drawn from the pool once per node.
  std::size_t offsets_per_node = 6;
  double rewire_fraction = 0.2;
  // Log-normal spread of per-node activity; edge sources are drawn in
  // proportion to activity, so a larger value yields more low-degree nodes.
  double activity_sigma = 0.8;
};

struct GenConfig {
  std::size_t num_nodes = 0;
  // Edges per node: the graph carries about num_nodes * avg_degree edges.
  double avg_degree = 6.0;
  std::map<Task, std::size_t> pattern_counts;
  std::uint64_t rng_seed = 0;
  Split split = Split::Train;
  TopologyParams topology;
  ScatterGatherParams scatter_gather;
  BicliqueParams biclique;

  // Pattern mix calibrated so label prevalences on 8192-node graphs of
  // degree 6 land near a target distribution. Counts scale
  // linearly with num_nodes.
  static GenConfig reference_mix(std::size_t num_nodes, std::uint64_t seed,
                                 Split split = Split::Train);
};

struct PatternInstance {
  Task task = Task::C2;
  std::vector<NodeId> member_nodes;
  std::vector<EdgeId> member_edges;
};

struct GeneratedGraph {
  Graph graph;
  std::vector<PatternInstance> instances;
};

// Number of nodes a motif of the given task occupies.
std::size_t pattern_footprint(Task t, const ScatterGatherParams& sg, const BicliqueParams& bc);

// Deterministic in the whole config (including seed and split). The label
// matrix marks every node the pattern detectors find, including motifs that
// arise incidentally from the base topology.
GeneratedGraph generate(const GenConfig& cfg);

// Fast exact labeler used by the generator: canonical-start cycle enumeration
// with reachability pruning plus counting detectors for scatter-gather and
// bicliques.
LabelMatrix detect_patterns(const Graph& g, const ScatterGatherParams& sg,
                            const BicliqueParams& bc);

// Independent brute-force detector. A node is Ck-positive iff a depth-first
// search from it finds a simple directed cycle of exactly k nodes back to it;
// S-G and B-C are checked by exhaustive pair enumeration. Intended for graphs
// of up to a few thousand nodes.
LabelMatrix oracle_labels(const Graph& g, int max_cycle_len, const ScatterGatherParams& sg,
                          const BicliqueParams& bc);

// Fraction of positive nodes per task.
std::array<double, kNumTasks> prevalence(const LabelMatrix& labels);

}  // namespace fedmp
