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
#include <vector>

#include "fedmp/graph.hpp"
#include "fedmp/matrix.hpp"
#include "fedmp/model.hpp"

namespace fedmp {

enum class Provenance : std::uint8_t { Undefined, Local, Received, Placeholder, Stale };

std::string_view provenance_name(Provenance p);

struct LocalIncidence {
  std::uint32_t node = 0;  // local index of the neighbor
  EdgeId edge = 0;
};

// A client's local node universe: owned nodes first (ascending global id),
// then remote nodes (ascending global id). Neighbor listings exist for owned
// nodes only and follow the global canonical order, so a client and the
// centralized pass walk every neighborhood identically.
//
// Holds a pointer to the graph's edge features; the graph must outlive it.
class LocalTopology {
 public:
  LocalTopology() = default;

  // Single-client topology covering every node.
  static LocalTopology whole(const Graph& g);
  // Topology for a client owning `owned`; remotes are derived from the
  // neighborhoods of owned nodes.
  static LocalTopology make(const Graph& g, std::span<const NodeId> owned);

  std::size_t num_owned() const { return num_owned_; }
  std::size_t num_local() const { return ids_.size(); }
  std::size_t num_remote() const { return ids_.size() - num_owned_; }
  bool is_owned(std::size_t local) const { return local < num_owned_; }

  NodeId global(std::size_t local) const { return ids_[local]; }
  std::optional<std::uint32_t> local_of(NodeId v) const;
  std::span<const NodeId> owned_ids() const { return {ids_.data(), num_owned_}; }
  std::span<const NodeId> remote_ids() const {
    return {ids_.data() + num_owned_, ids_.size() - num_owned_};
  }

  // side 0 = in-neighbors, side 1 = out-neighbors.
  std::span<const LocalIncidence> incidences(int side, std::size_t owned_local) const {
    const auto& off = off_[side];
    return {adj_[side].data() + off[owned_local], off[owned_local + 1] - off[owned_local]};
  }
  // Position of the node's first incidence in the flattened per-side list.
  std::size_t incidence_offset(int side, std::size_t owned_local) const {
    return off_[side][owned_local];
  }
  std::size_t num_incidences(int side) const { return adj_[side].size(); }

  const Matrix& edge_features() const { return *edge_features_; }

 private:
  std::size_t num_owned_ = 0;
  std::vector<NodeId> ids_;
  std::array<std::vector<std::size_t>, 2> off_;
  std::array<std::vector<LocalIncidence>, 2> adj_;
  const Matrix* edge_features_ = nullptr;
};

// Per-layer embedding storage for one client, rows in local order.
class LayerBank {
 public:
  LayerBank() = default;
  LayerBank(std::size_t layers, std::size_t num_local, std::size_t num_owned, std::size_t width);

  // Number of stored layers (model depth + 1).
  std::size_t depth() const { return h_.size(); }
  std::size_t num_local() const { return prov_.empty() ? 0 : prov_[0].size(); }
  std::size_t num_owned() const { return num_owned_; }

  const Matrix& layer(std::size_t l) const { return h_[l]; }
  std::span<const double> row(std::size_t l, std::size_t v) const { return h_[l].row(v); }
  std::span<double> row(std::size_t l, std::size_t v) { return h_[l].row(v); }
  Provenance provenance(std::size_t l, std::size_t v) const { return prov_[l][v]; }

  void write_local(std::size_t l, std::size_t v, std::span<const double> values);
  // Remote rows only; writing an owned row this way is a protocol violation.
  void write_remote(std::size_t l, std::size_t v, std::span<const double> values, Provenance p);
  void mark_local(std::size_t l, std::size_t v) { prov_[l][v] = Provenance::Local; }

 private:
  std::size_t num_owned_ = 0;
  std::vector<Matrix> h_;
  std::vector<std::vector<Provenance>> prov_;
};

// Intermediate values retained for the backward pass.
struct DirectionTape {
  Matrix a;                             // [owned x d] self term incl. bias
  Matrix b;                             // [local x d] neighbor term
  Matrix z;                             // [incidences x d] pre-activation
  std::vector<std::uint32_t> argmax;    // [owned x d] position within the listing
};

struct LayerTape {
  std::array<DirectionTape, 2> dirs;
  Matrix x;  // [owned x update width]
  Matrix q;  // [owned x d] pre-activation
  std::vector<double> norm;  // [owned] divisor of the output normalization
};

struct ForwardTape {
  std::vector<LayerTape> layers;
};

// h0 = x W + b, one row per feature row.
Matrix embed(const ModelParams& params, const Matrix& features);

// Writes layer-0 rows for owned nodes. `owned_features` rows follow the
// topology's owned order.
void embed_into(const ModelParams& params, const Matrix& owned_features, LayerBank& bank);

// Computes layer l+1 for every owned node from layer-l rows. Throws
// ProtocolViolation if any row it needs is undefined.
void layer_forward(const ModelParams& params, std::size_t l, const LocalTopology& topo,
                   LayerBank& bank, LayerTape* tape);

// Logits [owned x 7] from the last layer.
Matrix head_logits(const ModelParams& params, const LayerBank& bank);

struct CentralForward {
  LocalTopology topology;
  LayerBank bank;
  ForwardTape tape;
  Matrix logits;
};

// Full-graph forward on a single client that owns every node.
CentralForward forward_full(const ModelParams& params, const Graph& g);

struct LossConfig {
  enum class Reduction : std::uint8_t { Mean, Sum };
  Reduction reduction = Reduction::Mean;
};

struct GradientBundle {
  std::vector<double> grad;
  double loss = 0.0;
  std::size_t sample_count = 0;
};

// Binary cross-entropy with logits summed over the seven tasks, reduced
// over `nodes` (owned local indices; duplicates count twice). `labels` rows
// follow the owned order.
double bce_loss(const Matrix& logits, const LabelMatrix& labels,
                std::span<const std::uint32_t> nodes, const LossConfig& cfg);

// Reverse-mode gradient of bce_loss. Gradients never flow into remote rows.
// When `groups` is non-empty (one entry per local node) the flow into a
// neighbor row is also cut whenever the neighbor's group differs from the
// aggregating node's group, which lets a single-client pass mimic the
// per-client cut of a partitioned run.
GradientBundle backward(const ModelParams& params, const LocalTopology& topo,
                        const LayerBank& bank, const ForwardTape& tape, const Matrix& owned_features,
                        const Matrix& logits, const LabelMatrix& labels,
                        std::span<const std::uint32_t> nodes, const LossConfig& cfg,
                        std::span<const std::uint32_t> groups = {});

// Hash of every ReLU sign and max-aggregator choice in the tape. Two forwards
// with equal signatures lie on the same linear piece of the network.
std::uint64_t activation_signature(const ForwardTape& tape);

// p <- p - lr * g
void sgd_step(ModelParams& params, std::span<const double> grad, double lr);

}  // namespace fedmp
