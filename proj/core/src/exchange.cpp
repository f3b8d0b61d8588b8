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

#include "fedmp/exchange.hpp"

#include <cmath>
#include <exception>
#include <functional>
#include <sstream>
#include <thread>

#include "fedmp/errors.hpp"

namespace fedmp {

void for_each_client(std::size_t n, Schedule schedule, const std::function<void(std::size_t)>& fn) {
  if (schedule == Schedule::Serial) {
    for (std::size_t c = 0; c < n; ++c) fn(c);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> threads;
  threads.reserve(n);
  for (std::size_t c = 0; c < n; ++c) {
    threads.emplace_back([&, c] {
      try {
        fn(c);
      } catch (...) {
        errors[c] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

ExchangePlan::ExchangePlan(const Partition& p, std::span<const ClientData> clients)
    : n_(clients.size()), routes_(clients.size() * clients.size()) {
  if (clients.size() != p.num_clients()) {
    throw ValidationError("exchange plan needs one client entry per partition client");
  }
  for (ClientId to = 0; to < n_; ++to) {
    const LocalTopology& t = clients[to].topology;
    for (std::size_t i = t.num_owned(); i < t.num_local(); ++i) {
      const NodeId u = t.global(i);
      const ClientId from = p.owner(u);
      const auto src = clients[from].topology.local_of(u);
      if (!src || !clients[from].topology.is_owned(*src)) {
        throw ValidationError("remote node " + std::to_string(u) + " is not owned by its owner");
      }
      routes_[from * n_ + to].push_back({*src, static_cast<std::uint32_t>(i), u});
      ++per_layer_;
    }
  }
}

Federation Federation::make(const Graph& g, const Partition& p) {
  Federation f;
  f.graph = &g;
  f.partition = &p;
  f.clients.resize(p.num_clients());
  for (ClientId c = 0; c < p.num_clients(); ++c) {
    const ExtendedSubgraph view = extend(g, p, c);
    ClientData& d = f.clients[c];
    d.id = c;
    d.topology = view.topology();
    d.features = view.owned_features();
    d.labels = view.owned_labels();
    d.masked_reads = view.masked_reads();
  }
  f.plan = ExchangePlan(p, f.clients);
  return f;
}

Transport::Transport(std::size_t num_clients) : n_(num_clients), boxes_(num_clients * num_clients) {}

void Transport::post(ClientId from, ClientId to, Message m) {
  boxes_[from * n_ + to].push_back(std::move(m));
}

std::vector<Transport::Message> Transport::drain(ClientId from, ClientId to) {
  std::vector<Message> out;
  out.swap(boxes_[from * n_ + to]);
  return out;
}

bool Transport::idle() const {
  for (const auto& b : boxes_) {
    if (!b.empty()) return false;
  }
  return true;
}

void ExchangeLedger::record(std::size_t step, std::size_t layer, ClientId client,
                            std::size_t messages, std::size_t embeddings, std::size_t width) {
  const std::size_t bytes = embeddings * width * sizeof(double);
  rows_.push_back({step, layer, client, messages, embeddings, bytes});
  total_embeddings_ += embeddings;
  total_bytes_ += bytes;
  total_messages_ += messages;
}

std::size_t ExchangeLedger::embeddings_at(std::size_t step, std::size_t layer) const {
  std::size_t n = 0;
  for (const LedgerRow& r : rows_) {
    if (r.step == step && r.layer == layer) n += r.embeddings_sent;
  }
  return n;
}

std::string ExchangeLedger::to_csv() const {
  std::ostringstream out;
  out << "step,layer,client,embeddings_sent,bytes\n";
  for (const LedgerRow& r : rows_) {
    out << r.step << ',' << r.layer << ',' << r.client << ',' << r.embeddings_sent << ','
        << r.bytes << '\n';
  }
  return out.str();
}

std::string_view remote_mode_name(RemoteMode m) {
  switch (m) {
    case RemoteMode::Fresh: return "fresh";
    case RemoteMode::Placeholder: return "placeholder";
    case RemoteMode::Stale: return "stale";
  }
  return "?";
}

RemoteMode remote_mode_from_name(std::string_view name) {
  if (name == "fresh") return RemoteMode::Fresh;
  if (name == "placeholder") return RemoteMode::Placeholder;
  if (name == "stale") return RemoteMode::Stale;
  throw ValidationError("unknown remote policy '" + std::string(name) + "'");
}

void exchange_layer(std::size_t l, std::span<LayerBank> banks, const ExchangePlan& plan,
                    Transport& transport, ExchangeLedger* ledger, std::size_t step) {
  const std::size_t n = plan.num_clients();
  if (banks.size() != n) throw ValidationError("one bank per client required");
  // Post phase: every owner enqueues its boundary rows.
  for (ClientId from = 0; from < n; ++from) {
    std::size_t messages = 0;
    std::size_t sent = 0;
    for (ClientId to = 0; to < n; ++to) {
      const auto routes = plan.routes(from, to);
      if (routes.empty()) continue;
      ++messages;
      for (const auto& r : routes) {
        if (banks[from].provenance(l, r.src_local) != Provenance::Local) {
          throw ProtocolViolation("barrier broken: client " + std::to_string(from) +
                                  " has no layer " + std::to_string(l) + " row for node " +
                                  std::to_string(r.node));
        }
        const auto row = banks[from].row(l, r.src_local);
        transport.post(from, to, {r.dst_local, {row.begin(), row.end()}});
        ++sent;
      }
    }
    if (ledger != nullptr && sent > 0) {
      ledger->record(step, l, from, messages, sent, banks[from].layer(l).cols());
    }
  }
  // Drain phase, after the barrier.
  for (ClientId to = 0; to < n; ++to) {
    for (ClientId from = 0; from < n; ++from) {
      for (auto& m : transport.drain(from, to)) {
        banks[to].write_remote(l, m.slot, m.row, Provenance::Received);
      }
    }
  }
}

StaleCache snapshot_epoch(std::span<const LayerBank> banks, const ExchangePlan& plan) {
  const std::size_t n = plan.num_clients();
  if (banks.size() != n) throw ValidationError("one bank per client required");
  StaleCache cache;
  cache.warm = true;
  cache.rows.resize(n);
  for (ClientId to = 0; to < n; ++to) {
    const LayerBank& b = banks[to];
    const std::size_t layers = b.depth() == 0 ? 0 : b.depth() - 1;
    cache.rows[to].assign(layers, Matrix(b.num_local() - b.num_owned(), b.layer(0).cols()));
    for (ClientId from = 0; from < n; ++from) {
      for (const auto& r : plan.routes(from, to)) {
        for (std::size_t l = 0; l < layers; ++l) {
          if (banks[from].provenance(l, r.src_local) != Provenance::Local) {
            throw ProtocolViolation("snapshot of node " + std::to_string(r.node) + " layer " +
                                    std::to_string(l) + " before its owner computed it");
          }
          const auto src = banks[from].row(l, r.src_local);
          std::copy(src.begin(), src.end(), cache.rows[to][l].row(r.dst_local - b.num_owned()).begin());
        }
      }
    }
  }
  return cache;
}

std::vector<ClientForward> distributed_forward(std::span<const ModelParams> params,
                                               const Federation& fed,
                                               const DistributedOptions& opts) {
  const std::size_t n = fed.num_clients();
  if (params.size() != 1 && params.size() != n) {
    throw ValidationError("expected one parameter set per client or a single shared set");
  }
  auto param = [&](std::size_t c) -> const ModelParams& {
    return params.size() == 1 ? params[0] : params[c];
  };
  const ModelConfig& cfg = params[0].config();
  for (const auto& p : params) {
    if (!(p.config() == cfg)) throw ValidationError("clients disagree on the model shape");
  }
  const std::size_t depth = cfg.layers;
  const std::size_t d = cfg.hidden;

  std::vector<ClientForward> out(n);
  std::vector<LayerBank> banks(n);
  for (std::size_t c = 0; c < n; ++c) {
    const LocalTopology& t = fed.clients[c].topology;
    banks[c] = LayerBank(depth + 1, t.num_local(), t.num_owned(), d);
    if (opts.keep_tape) out[c].tape.layers.resize(depth);
  }
  if (opts.policy.mode == RemoteMode::Stale && opts.cache != nullptr && opts.cache->warm) {
    if (opts.cache->rows.size() != n) throw ProtocolViolation("stale cache built for another plan");
    for (std::size_t c = 0; c < n; ++c) {
      const auto& rc = opts.cache->rows[c];
      if (rc.size() != depth) throw ProtocolViolation("stale cache depth mismatch");
      for (const Matrix& m : rc) {
        if (m.rows() != fed.clients[c].topology.num_remote() || m.cols() != d) {
          throw ProtocolViolation("stale cache shape mismatch for client " + std::to_string(c));
        }
      }
    }
  }

  for_each_client(n, opts.schedule, [&](std::size_t c) {
    embed_into(param(c), fed.clients[c].features, banks[c]);
  });

  Transport transport(n);
  const std::vector<double> fill(d, opts.policy.placeholder);
  for (std::size_t l = 0; l < depth; ++l) {
    switch (opts.policy.mode) {
      case RemoteMode::Fresh:
        if (l != opts.skip_exchange_at) {
          exchange_layer(l, banks, fed.plan, transport, opts.ledger, opts.step);
        }
        break;
      case RemoteMode::Placeholder:
        for (std::size_t c = 0; c < n; ++c) {
          for (std::size_t v = banks[c].num_owned(); v < banks[c].num_local(); ++v) {
            banks[c].write_remote(l, v, fill, Provenance::Placeholder);
          }
        }
        break;
      case RemoteMode::Stale:
        for (std::size_t c = 0; c < n; ++c) {
          const std::size_t own = banks[c].num_owned();
          for (std::size_t v = own; v < banks[c].num_local(); ++v) {
            if (opts.cache != nullptr && opts.cache->warm) {
              banks[c].write_remote(l, v, opts.cache->rows[c][l].row(v - own), Provenance::Stale);
            } else {
              banks[c].write_remote(l, v, fill, Provenance::Placeholder);
            }
          }
        }
        break;
    }
    for_each_client(n, opts.schedule, [&](std::size_t c) {
      layer_forward(param(c), l, fed.clients[c].topology, banks[c],
                    opts.keep_tape ? &out[c].tape.layers[l] : nullptr);
    });
  }
  for_each_client(n, opts.schedule, [&](std::size_t c) {
    out[c].logits = head_logits(param(c), banks[c]);
  });
  for (std::size_t c = 0; c < n; ++c) out[c].bank = std::move(banks[c]);
  return out;
}

std::vector<NodeGap> measure_gap(const LayerBank& central, std::span<const ClientForward> clients,
                                 const Federation& fed, std::size_t layer) {
  std::vector<NodeGap> gaps;
  for (std::size_t c = 0; c < clients.size(); ++c) {
    const LocalTopology& t = fed.clients[c].topology;
    for (std::size_t i = 0; i < t.num_owned(); ++i) {
      const NodeId v = t.global(i);
      const auto a = central.row(layer, v);
      const auto b = clients[c].bank.row(layer, i);
      NodeGap g{v, static_cast<ClientId>(c), 0.0, 0.0};
      for (std::size_t k = 0; k < a.size(); ++k) {
        const double diff = a[k] - b[k];
        g.l2 += diff * diff;
        g.max_abs = std::max(g.max_abs, std::abs(diff));
      }
      g.l2 = std::sqrt(g.l2);
      gaps.push_back(g);
    }
  }
  return gaps;
}

Schedule schedule_from_name(std::string_view s) {
  if (s == "serial") return Schedule::Serial;
  if (s == "threaded") return Schedule::Threaded;
  throw ValidationError("unknown schedule '" + std::string(s) + "'");
}

std::string_view schedule_name(Schedule s) { return s == Schedule::Serial ? "serial" : "threaded"; }

}  // namespace fedmp
