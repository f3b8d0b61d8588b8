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

#include "fedmp/graph.hpp"

#include <algorithm>
#include <string>

#include "fedmp/errors.hpp"

namespace fedmp {

namespace {

constexpr std::array<std::string_view, kNumTasks> kTaskNames = {"C2", "C3", "C4", "C5",
                                                                "C6", "S-G", "B-C"};

void build_csr(std::size_t n, std::span<const Edge> edges, bool incoming,
               std::vector<std::size_t>& off, std::vector<Incidence>& out) {
  off.assign(n + 1, 0);
  for (const Edge& e : edges) ++off[(incoming ? e.dst : e.src) + 1];
  for (std::size_t v = 0; v < n; ++v) off[v + 1] += off[v];
  out.assign(edges.size(), {});
  std::vector<std::size_t> cursor(off.begin(), off.end() - 1);
  for (const Edge& e : edges) {
    const NodeId at = incoming ? e.dst : e.src;
    const NodeId other = incoming ? e.src : e.dst;
    out[cursor[at]++] = {other, e.id};
  }
  for (std::size_t v = 0; v < n; ++v) {
    std::sort(out.begin() + static_cast<std::ptrdiff_t>(off[v]),
              out.begin() + static_cast<std::ptrdiff_t>(off[v + 1]));
  }
}

}  // namespace

std::string_view task_name(Task t) { return kTaskNames[task_index(t)]; }

std::optional<Task> task_from_name(std::string_view name) {
  for (Task t : kAllTasks) {
    if (kTaskNames[task_index(t)] == name) return t;
  }
  return std::nullopt;
}

int cycle_length(Task t) {
  switch (t) {
    case Task::C2: return 2;
    case Task::C3: return 3;
    case Task::C4: return 4;
    case Task::C5: return 5;
    case Task::C6: return 6;
    default: return 0;
  }
}

std::size_t LabelMatrix::positives(Task t) const {
  const auto bit = static_cast<LabelMask>(1u << task_index(t));
  return static_cast<std::size_t>(
      std::count_if(masks_.begin(), masks_.end(), [bit](LabelMask m) { return (m & bit) != 0; }));
}

Neighborhood::Neighborhood(std::size_t num_nodes, std::span<const Edge> edges) {
  build_csr(num_nodes, edges, /*incoming=*/true, in_off_, in_);
  build_csr(num_nodes, edges, /*incoming=*/false, out_off_, out_);
}

Graph Graph::build(std::size_t num_nodes, std::span<const std::pair<NodeId, NodeId>> edges,
                   std::optional<Matrix> node_features, std::optional<Matrix> edge_features,
                   std::optional<LabelMatrix> labels) {
  Graph g;
  g.num_nodes_ = num_nodes;
  g.edges_.reserve(edges.size());
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const auto [s, d] = edges[i];
    if (s >= num_nodes || d >= num_nodes) {
      throw ValidationError("edge " + std::to_string(i) + " (" + std::to_string(s) + "," +
                            std::to_string(d) + ") references a node >= num_nodes=" +
                            std::to_string(num_nodes));
    }
    g.edges_.push_back({s, d, static_cast<EdgeId>(i)});
  }
  g.node_features_ = node_features ? std::move(*node_features) : Matrix(num_nodes, 0);
  if (g.node_features_.rows() != num_nodes) {
    throw ValidationError("node feature rows " + std::to_string(g.node_features_.rows()) +
                          " != num_nodes " + std::to_string(num_nodes));
  }
  g.edge_features_ = edge_features ? std::move(*edge_features) : Matrix(edges.size(), 0);
  if (g.edge_features_.rows() != edges.size()) {
    throw ValidationError("edge feature rows " + std::to_string(g.edge_features_.rows()) +
                          " != num_edges " + std::to_string(edges.size()));
  }
  g.labels_ = labels ? std::move(*labels) : LabelMatrix(num_nodes);
  if (g.labels_.num_nodes() != num_nodes) {
    throw ValidationError("label rows " + std::to_string(g.labels_.num_nodes()) +
                          " != num_nodes " + std::to_string(num_nodes));
  }
  g.nbr_ = Neighborhood(num_nodes, g.edges_);
  return g;
}

Graph Graph::with_node_features(Matrix features) const {
  if (features.rows() != num_nodes_) {
    throw ValidationError("node feature rows " + std::to_string(features.rows()) +
                          " != num_nodes " + std::to_string(num_nodes_));
  }
  Graph g = *this;
  g.node_features_ = std::move(features);
  return g;
}

Graph Graph::with_labels(LabelMatrix labels) const {
  if (labels.num_nodes() != num_nodes_) {
    throw ValidationError("label rows " + std::to_string(labels.num_nodes()) +
                          " != num_nodes " + std::to_string(num_nodes_));
  }
  Graph g = *this;
  g.labels_ = std::move(labels);
  return g;
}

Graph constant_features(const Graph& g, double value) {
  return g.with_node_features(Matrix(g.num_nodes(), 1, value));
}

}  // namespace fedmp
