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

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fedmp/matrix.hpp"

namespace fedmp {

using NodeId = std::uint32_t;
using EdgeId = std::uint32_t;

// The seven structural detection tasks, in label-bit order.
enum class Task : std::uint8_t { C2, C3, C4, C5, C6, ScatterGather, Biclique };

inline constexpr std::size_t kNumTasks = 7;
inline constexpr std::array<Task, kNumTasks> kAllTasks = {
    Task::C2, Task::C3, Task::C4, Task::C5, Task::C6, Task::ScatterGather, Task::Biclique};

std::string_view task_name(Task t);
std::optional<Task> task_from_name(std::string_view name);
inline std::size_t task_index(Task t) { return static_cast<std::size_t>(t); }
// Cycle length for C2..C6, 0 otherwise.
int cycle_length(Task t);

// Per-node multi-label targets packed as one bit per task (bit i = task i).
using LabelMask = std::uint8_t;

class LabelMatrix {
 public:
  LabelMatrix() = default;
  explicit LabelMatrix(std::size_t num_nodes) : masks_(num_nodes, 0) {}

  std::size_t num_nodes() const { return masks_.size(); }
  bool get(NodeId v, Task t) const { return (masks_[v] >> task_index(t)) & 1u; }
  void set(NodeId v, Task t, bool on = true) {
    const auto bit = static_cast<LabelMask>(1u << task_index(t));
    masks_[v] = on ? static_cast<LabelMask>(masks_[v] | bit)
                   : static_cast<LabelMask>(masks_[v] & ~bit);
  }
  LabelMask mask(NodeId v) const { return masks_[v]; }
  void set_mask(NodeId v, LabelMask m) { masks_[v] = m; }
  std::size_t positives(Task t) const;

  friend bool operator==(const LabelMatrix&, const LabelMatrix&) = default;

 private:
  std::vector<LabelMask> masks_;
};

struct Edge {
  NodeId src = 0;
  NodeId dst = 0;
  EdgeId id = 0;
  friend bool operator==(const Edge&, const Edge&) = default;
};

// One endpoint entry of a neighborhood listing.
struct Incidence {
  NodeId node = 0;
  EdgeId edge = 0;
  friend bool operator==(const Incidence&, const Incidence&) = default;
  friend auto operator<=>(const Incidence&, const Incidence&) = default;
};

// Canonical in/out neighborhood index. Each listing is sorted by
// (neighbor id, edge id) regardless of the order edges were supplied in, and
// every downstream aggregation walks neighbors in exactly this order.
class Neighborhood {
 public:
  Neighborhood() = default;
  Neighborhood(std::size_t num_nodes, std::span<const Edge> edges);

  std::span<const Incidence> in_edges(NodeId v) const {
    return {in_.data() + in_off_[v], in_off_[v + 1] - in_off_[v]};
  }
  std::span<const Incidence> out_edges(NodeId v) const {
    return {out_.data() + out_off_[v], out_off_[v + 1] - out_off_[v]};
  }

 private:
  std::vector<std::size_t> in_off_{0};
  std::vector<std::size_t> out_off_{0};
  std::vector<Incidence> in_;
  std::vector<Incidence> out_;
};

// Directed multigraph with optional node/edge features and per-node labels.
// Immutable after build(); safe to share across threads.
class Graph {
 public:
  // Builds a graph. Edge i of `edges` receives edge id i. Features default to
  // zero-width matrices; labels default to all-false.
  static Graph build(std::size_t num_nodes,
                     std::span<const std::pair<NodeId, NodeId>> edges,
                     std::optional<Matrix> node_features = std::nullopt,
                     std::optional<Matrix> edge_features = std::nullopt,
                     std::optional<LabelMatrix> labels = std::nullopt);

  std::size_t num_nodes() const { return num_nodes_; }
  std::size_t num_edges() const { return edges_.size(); }
  std::span<const Edge> edges() const { return edges_; }
  const Edge& edge(EdgeId e) const { return edges_[e]; }

  const Matrix& node_features() const { return node_features_; }
  const Matrix& edge_features() const { return edge_features_; }
  const LabelMatrix& labels() const { return labels_; }
  const Neighborhood& neighborhood() const { return nbr_; }

  std::span<const Incidence> in_edges(NodeId v) const { return nbr_.in_edges(v); }
  std::span<const Incidence> out_edges(NodeId v) const { return nbr_.out_edges(v); }

  std::size_t feature_dim() const { return node_features_.cols(); }
  std::size_t edge_feature_dim() const { return edge_features_.cols(); }

  // Copies with one component replaced; the topology is reused.
  Graph with_node_features(Matrix features) const;
  Graph with_labels(LabelMatrix labels) const;

  friend bool operator==(const Graph& a, const Graph& b) {
    return a.num_nodes_ == b.num_nodes_ && a.edges_ == b.edges_ &&
           a.node_features_ == b.node_features_ && a.edge_features_ == b.edge_features_ &&
           a.labels_ == b.labels_;
  }

 private:
  std::size_t num_nodes_ = 0;
  std::vector<Edge> edges_;
  Matrix node_features_;
  Matrix edge_features_;
  LabelMatrix labels_;
  Neighborhood nbr_;
};

// Replaces node features with a [num_nodes x 1] matrix filled with `value`.
Graph constant_features(const Graph& g, double value);

}  // namespace fedmp
