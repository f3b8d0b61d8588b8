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

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedmp/engine.hpp"
#include "fedmp/graph.hpp"

namespace fedmp {

using ClientId = std::uint32_t;

struct ClientSets {
  std::vector<NodeId> owned;     // ascending
  std::vector<NodeId> remote;    // ascending
  std::vector<EdgeId> intra;     // both endpoints owned, ascending
  std::vector<EdgeId> crossing;  // exactly one endpoint owned, ascending
  std::vector<NodeId> boundary;  // owned nodes some other client holds as remote
};

// Node ownership plus the derived per-client sets.
class Partition {
 public:
  Partition() = default;
  // Derives every client set from an owner vector. Throws ValidationError on
  // length mismatch or a client id >= num_clients.
  static Partition from_owner(const Graph& g, std::size_t num_clients,
                              std::vector<ClientId> owner);

  std::size_t num_clients() const { return clients_.size(); }
  std::size_t num_nodes() const { return owner_.size(); }
  ClientId owner(NodeId v) const { return owner_[v]; }
  std::span<const ClientId> owners() const { return owner_; }
  const ClientSets& client(ClientId c) const { return clients_.at(c); }

  // Clients holding u as a remote node, ascending.
  std::span<const ClientId> subscribers(NodeId u) const {
    return {subs_.data() + subs_off_[u], subs_off_[u + 1] - subs_off_[u]};
  }

  // Number of edges whose endpoints have different owners.
  std::size_t cut_edges() const { return cut_; }
  std::size_t total_remote() const;

 private:
  std::vector<ClientId> owner_;
  std::vector<ClientSets> clients_;
  std::vector<std::size_t> subs_off_{0};
  std::vector<ClientId> subs_;
  std::size_t cut_ = 0;
};

// Modularity of a node->community map on the symmetrized graph, with
// parallel edges (in either direction) adding weight and self-loops ignored.
double modularity(const Graph& g, std::span<const std::uint32_t> community);

struct LouvainTrace {
  // Modularity after each aggregation pass, starting from singletons.
  std::vector<double> pass_modularity;
  std::size_t natural_communities = 0;
  std::size_t merges = 0;
  std::size_t splits = 0;
};

// Louvain modularity maximization followed by greedy coarsening (or
// bisection of the largest community) to exactly `target_clients` parts.
Partition louvain(const Graph& g, std::size_t target_clients, std::uint64_t seed,
                  LouvainTrace* trace = nullptr);

// Random balanced start refined by single-node moves and pairwise swaps,
// with every part capped at ceil((1 + imbalance_eps) * N / k).
Partition balanced_kway(const Graph& g, std::size_t k, double imbalance_eps, std::uint64_t seed);

// Read-only client view: owned and remote nodes, intra and crossing edges.
// Features and labels of remote nodes read as std::nullopt and bump a
// counter, so any attempt to look across the information boundary is
// observable.
class ExtendedSubgraph {
 public:
  ExtendedSubgraph(const Graph& g, const Partition& p, ClientId c);

  ClientId client() const { return client_; }
  const ClientSets& sets() const { return *sets_; }
  std::span<const NodeId> owned() const { return sets_->owned; }
  std::span<const NodeId> remote() const { return sets_->remote; }
  bool is_owned(NodeId v) const;
  bool is_remote(NodeId v) const;

  std::optional<std::span<const double>> features(NodeId v) const;
  std::optional<LabelMask> labels(NodeId v) const;
  std::size_t masked_reads() const { return masked_->load(); }

  // Owned-node features and labels in ascending node order.
  Matrix owned_features() const;
  LabelMatrix owned_labels() const;

  // Structure of the view in the engine's local ordering.
  LocalTopology topology() const { return LocalTopology::make(*graph_, sets_->owned); }

 private:
  const Graph* graph_;
  const ClientSets* sets_;
  ClientId client_;
  std::shared_ptr<std::atomic<std::size_t>> masked_;
};

ExtendedSubgraph extend(const Graph& g, const Partition& p, ClientId c);

// Partition file: one "node client" pair per line.
std::string serialize_partition(const Partition& p);
Partition deserialize_partition(const Graph& g, std::string_view text);
void save_partition(const Partition& p, const std::filesystem::path& path);
Partition load_partition(const Graph& g, const std::filesystem::path& path);

// JSON summary: cut size and per-client owned/remote/boundary counts.
std::string partition_summary_json(const Partition& p, const std::string& method);

}  // namespace fedmp
