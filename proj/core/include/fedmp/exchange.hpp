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
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "fedmp/engine.hpp"
#include "fedmp/partition.hpp"

namespace fedmp {

// Static per-client inputs to a distributed pass. Features and labels come
// from the client's extended-subgraph view and cover owned nodes only.
struct ClientData {
  ClientId id = 0;
  LocalTopology topology;
  Matrix features;
  LabelMatrix labels;
  std::size_t masked_reads = 0;
};

// Who ships which row to whom, derived once from the partition.
class ExchangePlan {
 public:
  struct Route {
    std::uint32_t src_local;  // row index in the owner's bank
    std::uint32_t dst_local;  // row index in the subscriber's bank
    NodeId node;
  };

  ExchangePlan() = default;
  ExchangePlan(const Partition& p, std::span<const ClientData> clients);

  std::size_t num_clients() const { return n_; }
  std::span<const Route> routes(ClientId from, ClientId to) const { return routes_[from * n_ + to]; }
  // Rows crossing the wire in one full exchange, i.e. the sum of |V_rem(c)|.
  std::size_t embeddings_per_layer() const { return per_layer_; }

 private:
  std::size_t n_ = 0;
  std::vector<std::vector<Route>> routes_;
  std::size_t per_layer_ = 0;
};

struct Federation {
  const Graph* graph = nullptr;
  const Partition* partition = nullptr;
  std::vector<ClientData> clients;
  ExchangePlan plan;

  // Builds per-client data through extend(); reads features and labels of
  // owned nodes only.
  static Federation make(const Graph& g, const Partition& p);
  std::size_t num_clients() const { return clients.size(); }
};

// In-memory point-to-point mailboxes with separate post and drain phases.
class Transport {
 public:
  struct Message {
    std::uint32_t slot;  // receiver-side row index
    std::vector<double> row;
  };

  explicit Transport(std::size_t num_clients);
  void post(ClientId from, ClientId to, Message m);
  // Removes and returns the queue from `from` to `to` in posting order.
  std::vector<Message> drain(ClientId from, ClientId to);
  bool idle() const;

 private:
  std::size_t n_;
  std::vector<std::vector<Message>> boxes_;
};

struct LedgerRow {
  std::size_t step = 0;
  std::size_t layer = 0;
  ClientId client = 0;  // sender
  std::size_t messages = 0;
  std::size_t embeddings_sent = 0;
  std::size_t bytes = 0;
};

// Exchange traffic by (step, layer, sending client).
class ExchangeLedger {
 public:
  void record(std::size_t step, std::size_t layer, ClientId client, std::size_t messages,
              std::size_t embeddings, std::size_t width);
  void end_epoch(std::size_t steps_in_epoch) { epoch_steps_.push_back(steps_in_epoch); }

  std::span<const LedgerRow> rows() const { return rows_; }
  std::size_t total_embeddings() const { return total_embeddings_; }
  std::size_t total_bytes() const { return total_bytes_; }
  std::size_t total_messages() const { return total_messages_; }
  std::size_t embeddings_at(std::size_t step, std::size_t layer) const;
  std::span<const std::size_t> epoch_steps() const { return epoch_steps_; }

  std::string to_csv() const;

 private:
  std::vector<LedgerRow> rows_;
  std::vector<std::size_t> epoch_steps_;
  std::size_t total_embeddings_ = 0;
  std::size_t total_bytes_ = 0;
  std::size_t total_messages_ = 0;
};

enum class RemoteMode : std::uint8_t { Fresh, Placeholder, Stale };

std::string_view remote_mode_name(RemoteMode m);
RemoteMode remote_mode_from_name(std::string_view name);

struct RemotePolicy {
  RemoteMode mode = RemoteMode::Fresh;
  double placeholder = 0.0;  // every coordinate of h_rem
};

// Remote rows captured at an epoch boundary, per subscriber and layer, in the
// subscriber's remote order. Deep copies; later passes never mutate them.
struct StaleCache {
  bool warm = false;
  std::vector<std::vector<Matrix>> rows;  // [client][layer] -> [num_remote x d]
};

// Ships layer-l rows of every boundary node to its subscribers. Throws
// ProtocolViolation if an owner's row is not yet computed.
void exchange_layer(std::size_t l, std::span<LayerBank> banks, const ExchangePlan& plan,
                    Transport& transport, ExchangeLedger* ledger, std::size_t step);

// Deep copy of every owner's boundary rows for layers 0..L-1, routed to the
// subscribers that will read them.
StaleCache snapshot_epoch(std::span<const LayerBank> banks, const ExchangePlan& plan);

enum class Schedule : std::uint8_t { Serial, Threaded };

std::string_view schedule_name(Schedule s);
Schedule schedule_from_name(std::string_view name);

// Runs fn(c) for every client, either in order or one thread per client.
// The first failure by client order is rethrown after all have finished.
void for_each_client(std::size_t n, Schedule schedule, const std::function<void(std::size_t)>& fn);

struct DistributedOptions {
  RemotePolicy policy;
  Schedule schedule = Schedule::Serial;
  const StaleCache* cache = nullptr;  // stale mode; null means cold
  ExchangeLedger* ledger = nullptr;
  std::size_t step = 0;
  bool keep_tape = true;
  // Test hook: omit the exchange that should follow this layer.
  std::size_t skip_exchange_at = std::numeric_limits<std::size_t>::max();
};

struct ClientForward {
  LayerBank bank;
  ForwardTape tape;
  Matrix logits;  // [owned x 7]
};

// Lockstep forward over all clients: each layer is a compute phase (clients
// independent) followed by an exchange phase. `params` holds one entry per
// client, or a single shared entry.
std::vector<ClientForward> distributed_forward(std::span<const ModelParams> params,
                                               const Federation& fed,
                                               const DistributedOptions& opts);

struct NodeGap {
  NodeId node = 0;
  ClientId client = 0;
  double l2 = 0.0;
  double max_abs = 0.0;
};

// Per owned node, the difference between the centralized and the client's
// layer-`layer` embedding.
std::vector<NodeGap> measure_gap(const LayerBank& central, std::span<const ClientForward> clients,
                                 const Federation& fed, std::size_t layer);

}  // namespace fedmp
