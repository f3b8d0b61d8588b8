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

#include "fedmp/partition.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "fedmp/errors.hpp"
#include "fedmp/rng.hpp"
#include <nlohmann/json.hpp>

namespace fedmp {

namespace {

// Undirected weighted adjacency: weight of {u, v} counts the directed edges
// between u and v in either direction. Self-loops are dropped.
struct WeightedGraph {
  std::vector<std::vector<std::pair<std::uint32_t, double>>> adj;
  std::vector<double> degree;
  double total = 0.0;  // sum of edge weights (each pair counted once)

  std::size_t size() const { return adj.size(); }
};

WeightedGraph symmetrize(const Graph& g) {
  WeightedGraph w;
  const std::size_t n = g.num_nodes();
  w.adj.resize(n);
  w.degree.assign(n, 0.0);
  for (NodeId v = 0; v < n; ++v) {
    std::vector<NodeId> nbrs;
    for (const Incidence& inc : g.in_edges(v)) nbrs.push_back(inc.node);
    for (const Incidence& inc : g.out_edges(v)) nbrs.push_back(inc.node);
    std::sort(nbrs.begin(), nbrs.end());
    for (std::size_t i = 0; i < nbrs.size();) {
      std::size_t j = i;
      while (j < nbrs.size() && nbrs[j] == nbrs[i]) ++j;
      if (nbrs[i] != v) {
        const auto mult = static_cast<double>(j - i);
        w.adj[v].emplace_back(nbrs[i], mult);
        w.degree[v] += mult;
      }
      i = j;
    }
  }
  for (double d : w.degree) w.total += d;
  w.total /= 2.0;
  return w;
}

double modularity_of(const WeightedGraph& w, std::span<const std::uint32_t> comm) {
  if (w.total == 0.0) return 0.0;
  const std::size_t nc = comm.empty() ? 0 : *std::max_element(comm.begin(), comm.end()) + 1;
  std::vector<double> inner(nc, 0.0), tot(nc, 0.0);
  for (std::size_t v = 0; v < w.size(); ++v) {
    tot[comm[v]] += w.degree[v];
    for (const auto& [u, wt] : w.adj[v]) {
      if (comm[u] == comm[v]) inner[comm[v]] += wt;
    }
  }
  const double m2 = 2.0 * w.total;
  double q = 0.0;
  for (std::size_t c = 0; c < nc; ++c) q += inner[c] / m2 - (tot[c] / m2) * (tot[c] / m2);
  return q;
}

// Renumbers communities densely in order of first appearance.
std::size_t compact(std::vector<std::uint32_t>& comm) {
  std::vector<std::uint32_t> map(comm.size() + 1, UINT32_MAX);
  std::uint32_t next = 0;
  for (auto& c : comm) {
    if (map[c] == UINT32_MAX) map[c] = next++;
    c = map[c];
  }
  return next;
}

// One level of local moving. Returns true if any node changed community.
bool local_moving(const WeightedGraph& w, std::vector<std::uint32_t>& comm, std::mt19937_64& rng) {
  const std::size_t n = w.size();
  const double m2 = 2.0 * w.total;
  std::vector<double> tot(n, 0.0);
  for (std::size_t v = 0; v < n; ++v) tot[comm[v]] += w.degree[v];
  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<double> link(n, 0.0);
  std::vector<std::uint32_t> touched;
  bool any = false;
  for (int sweep = 0; sweep < 100; ++sweep) {
    bool moved = false;
    for (std::uint32_t v : order) {
      const std::uint32_t own = comm[v];
      touched.clear();
      touched.push_back(own);
      link[own] = 0.0;
      for (const auto& [u, wt] : w.adj[v]) {
        const std::uint32_t c = comm[u];
        if (link[c] == 0.0 && std::find(touched.begin(), touched.end(), c) == touched.end()) {
          touched.push_back(c);
        }
        link[c] += wt;
      }
      tot[own] -= w.degree[v];
      const double kv = w.degree[v];
      std::uint32_t best = own;
      double best_gain = link[own] - tot[own] * kv / m2;
      for (std::uint32_t c : touched) {
        const double gain = link[c] - tot[c] * kv / m2;
        if (gain > best_gain + 1e-12) {
          best_gain = gain;
          best = c;
        }
      }
      tot[best] += kv;
      if (best != own) {
        comm[v] = best;
        moved = true;
        any = true;
      }
      for (std::uint32_t c : touched) link[c] = 0.0;
    }
    if (!moved) break;
  }
  return any;
}

WeightedGraph aggregate(const WeightedGraph& w, std::span<const std::uint32_t> comm,
                        std::size_t nc) {
  WeightedGraph out;
  out.adj.resize(nc);
  out.degree.assign(nc, 0.0);
  std::vector<std::vector<std::pair<std::uint32_t, double>>> raw(nc);
  std::vector<double> self(nc, 0.0);
  for (std::size_t v = 0; v < w.size(); ++v) {
    for (const auto& [u, wt] : w.adj[v]) {
      if (comm[u] == comm[v]) {
        self[comm[v]] += wt;
      } else {
        raw[comm[v]].emplace_back(comm[u], wt);
      }
    }
  }
  for (std::size_t c = 0; c < nc; ++c) {
    auto& r = raw[c];
    std::sort(r.begin(), r.end());
    for (std::size_t i = 0; i < r.size();) {
      std::size_t j = i;
      double sum = 0.0;
      while (j < r.size() && r[j].first == r[i].first) sum += r[j++].second;
      out.adj[c].emplace_back(r[i].first, sum);
      i = j;
    }
  }
  // Internal weight is carried as a self term in the degree only; the
  // aggregated adjacency holds inter-community links.
  for (std::size_t v = 0; v < w.size(); ++v) out.degree[comm[v]] += w.degree[v];
  out.total = w.total;
  return out;
}

// Cut-minimizing refinement of `part` under a size cap, restricted to the
// nodes in `members` (all nodes when empty). Applies improving single moves
// and then the best of a few pairwise swaps per part pair until neither
// helps.
void refine(const WeightedGraph& w, std::vector<std::uint32_t>& part, std::size_t k,
            std::size_t cap, std::span<const std::uint32_t> members, std::mt19937_64& rng) {
  std::vector<std::uint32_t> nodes(members.begin(), members.end());
  if (nodes.empty()) {
    nodes.resize(w.size());
    std::iota(nodes.begin(), nodes.end(), 0);
  }
  std::vector<std::uint8_t> in_set(w.size(), members.empty() ? 1 : 0);
  for (auto v : nodes) in_set[v] = 1;
  std::vector<std::size_t> size(k, 0);
  for (auto v : nodes) ++size[part[v]];

  auto conn = [&](std::uint32_t v, std::vector<double>& out) {
    std::fill(out.begin(), out.end(), 0.0);
    for (const auto& [u, wt] : w.adj[v]) {
      if (in_set[u]) out[part[u]] += wt;
    }
  };
  std::vector<double> cv(k);
  for (int pass = 0; pass < 200; ++pass) {
    bool improved = false;
    std::shuffle(nodes.begin(), nodes.end(), rng);
    for (std::uint32_t v : nodes) {
      const std::uint32_t from = part[v];
      if (size[from] <= 1) continue;
      conn(v, cv);
      std::uint32_t best = from;
      double best_gain = 0.0;
      for (std::uint32_t p = 0; p < k; ++p) {
        if (p == from || size[p] >= cap) continue;
        const double gain = cv[p] - cv[from];
        if (gain > best_gain) {
          best_gain = gain;
          best = p;
        }
      }
      if (best != from) {
        part[v] = best;
        --size[from];
        ++size[best];
        improved = true;
      }
    }
    // Pairwise swaps keep sizes fixed, so they still apply when every part
    // sits at the cap.
    for (std::uint32_t a = 0; a < k; ++a) {
      for (std::uint32_t b = a + 1; b < k; ++b) {
        std::vector<std::pair<double, std::uint32_t>> ga, gb;
        for (std::uint32_t v : nodes) {
          if (part[v] != a && part[v] != b) continue;
          conn(v, cv);
          if (part[v] == a) {
            ga.emplace_back(cv[b] - cv[a], v);
          } else {
            gb.emplace_back(cv[a] - cv[b], v);
          }
        }
        constexpr std::size_t kTop = 8;
        auto top = [](auto& g) {
          std::sort(g.begin(), g.end(), [](const auto& x, const auto& y) {
            return x.first != y.first ? x.first > y.first : x.second < y.second;
          });
          if (g.size() > kTop) g.resize(kTop);
        };
        top(ga);
        top(gb);
        double best = 0.0;
        std::uint32_t bu = 0, bv = 0;
        for (const auto& [gu, u] : ga) {
          for (const auto& [gv, v] : gb) {
            double wuv = 0.0;
            for (const auto& [x, wt] : w.adj[u]) {
              if (x == v) wuv = wt;
            }
            const double gain = gu + gv - 2.0 * wuv;
            if (gain > best + 1e-12) {
              best = gain;
              bu = u;
              bv = v;
            }
          }
        }
        if (best > 0.0) {
          part[bu] = b;
          part[bv] = a;
          improved = true;
        }
      }
    }
    if (!improved) break;
  }
}

// Splits the community `target` in two balanced halves (sizes differ by at
// most one) and refines the bisection.
void bisect(const WeightedGraph& w, std::vector<std::uint32_t>& comm, std::uint32_t target,
            std::uint32_t fresh, std::mt19937_64& rng) {
  std::vector<std::uint32_t> members;
  for (std::uint32_t v = 0; v < comm.size(); ++v) {
    if (comm[v] == target) members.push_back(v);
  }
  std::shuffle(members.begin(), members.end(), rng);
  const std::size_t half = members.size() / 2;
  std::vector<std::uint32_t> local(w.size(), 0);
  for (std::size_t i = 0; i < members.size(); ++i) local[members[i]] = i < half ? 1 : 0;
  std::sort(members.begin(), members.end());
  refine(w, local, 2, members.size() - half, members, rng);
  for (std::uint32_t v : members) comm[v] = local[v] == 1 ? fresh : target;
}

// Orders parts by their smallest node id so client numbering is canonical.
std::vector<ClientId> canonical_owner(std::span<const std::uint32_t> part, std::size_t k) {
  std::vector<std::uint32_t> rank(k, UINT32_MAX);
  std::uint32_t next = 0;
  for (std::uint32_t p : part) {
    if (rank[p] == UINT32_MAX) rank[p] = next++;
  }
  for (auto& r : rank) {
    if (r == UINT32_MAX) r = next++;
  }
  std::vector<ClientId> out(part.size());
  for (std::size_t v = 0; v < part.size(); ++v) out[v] = rank[part[v]];
  return out;
}

}  // namespace

Partition Partition::from_owner(const Graph& g, std::size_t num_clients,
                                std::vector<ClientId> owner) {
  if (owner.size() != g.num_nodes()) {
    throw ValidationError("owner map has " + std::to_string(owner.size()) + " entries for " +
                          std::to_string(g.num_nodes()) + " nodes");
  }
  if (num_clients == 0) throw ValidationError("a partition needs at least one client");
  Partition p;
  p.owner_ = std::move(owner);
  p.clients_.resize(num_clients);
  for (NodeId v = 0; v < p.owner_.size(); ++v) {
    if (p.owner_[v] >= num_clients) {
      throw ValidationError("node " + std::to_string(v) + " assigned to client " +
                            std::to_string(p.owner_[v]) + " of " + std::to_string(num_clients));
    }
    p.clients_[p.owner_[v]].owned.push_back(v);
  }
  std::vector<std::vector<ClientId>> subs(g.num_nodes());
  for (const Edge& e : g.edges()) {
    const ClientId a = p.owner_[e.src];
    const ClientId b = p.owner_[e.dst];
    if (a == b) {
      p.clients_[a].intra.push_back(e.id);
      continue;
    }
    ++p.cut_;
    p.clients_[a].crossing.push_back(e.id);
    p.clients_[b].crossing.push_back(e.id);
    p.clients_[a].remote.push_back(e.dst);
    p.clients_[b].remote.push_back(e.src);
    subs[e.dst].push_back(a);
    subs[e.src].push_back(b);
  }
  for (auto& c : p.clients_) {
    std::sort(c.remote.begin(), c.remote.end());
    c.remote.erase(std::unique(c.remote.begin(), c.remote.end()), c.remote.end());
  }
  for (NodeId v = 0; v < g.num_nodes(); ++v) {
    auto& s = subs[v];
    std::sort(s.begin(), s.end());
    s.erase(std::unique(s.begin(), s.end()), s.end());
    if (!s.empty()) p.clients_[p.owner_[v]].boundary.push_back(v);
    p.subs_.insert(p.subs_.end(), s.begin(), s.end());
    p.subs_off_.push_back(p.subs_.size());
  }
  return p;
}

std::size_t Partition::total_remote() const {
  std::size_t t = 0;
  for (const auto& c : clients_) t += c.remote.size();
  return t;
}

double modularity(const Graph& g, std::span<const std::uint32_t> community) {
  if (community.size() != g.num_nodes()) throw ValidationError("community map length mismatch");
  return modularity_of(symmetrize(g), community);
}

Partition louvain(const Graph& g, std::size_t target_clients, std::uint64_t seed,
                  LouvainTrace* trace) {
  const std::size_t n = g.num_nodes();
  if (target_clients == 0) throw ValidationError("target_clients must be at least 1");
  if (target_clients > n) {
    throw ValidationError("cannot split " + std::to_string(n) + " nodes into " +
                          std::to_string(target_clients) + " clients");
  }
  std::mt19937_64 rng(derive_seed(seed, 0x6c6f7576u));
  const WeightedGraph base = symmetrize(g);
  LouvainTrace local_trace;
  LouvainTrace& tr = trace != nullptr ? *trace : local_trace;
  tr = {};

  std::vector<std::uint32_t> comm(n);
  std::iota(comm.begin(), comm.end(), 0);
  tr.pass_modularity.push_back(modularity_of(base, comm));
  if (base.total > 0.0) {
    WeightedGraph level = base;
    std::vector<std::uint32_t> level_comm(n);
    std::iota(level_comm.begin(), level_comm.end(), 0);
    while (true) {
      if (!local_moving(level, level_comm, rng)) break;
      const std::size_t nc = compact(level_comm);
      for (auto& c : comm) c = level_comm[c];
      tr.pass_modularity.push_back(modularity_of(base, comm));
      if (nc == level.size()) break;
      level = aggregate(level, level_comm, nc);
      level_comm.resize(nc);
      std::iota(level_comm.begin(), level_comm.end(), 0);
    }
  }
  std::size_t nc = compact(comm);
  tr.natural_communities = nc;

  // Merge down to the target by best modularity gain.
  if (nc > target_clients) {
    const double m = base.total;
    std::vector<double> tot(nc, 0.0);
    std::vector<std::vector<double>> between(nc, std::vector<double>(nc, 0.0));
    std::vector<std::size_t> sz(nc, 0);
    for (std::size_t v = 0; v < n; ++v) {
      tot[comm[v]] += base.degree[v];
      ++sz[comm[v]];
      for (const auto& [u, wt] : base.adj[v]) {
        if (comm[u] != comm[v]) between[comm[v]][comm[u]] += wt;
      }
    }
    std::vector<std::uint8_t> alive(nc, 1);
    std::vector<std::uint32_t> root(nc);
    std::iota(root.begin(), root.end(), 0);
    for (std::size_t live = nc; live > target_clients; --live) {
      double best = -std::numeric_limits<double>::infinity();
      std::size_t bi = 0, bj = 0;
      for (std::size_t i = 0; i < nc; ++i) {
        if (!alive[i]) continue;
        for (std::size_t j = i + 1; j < nc; ++j) {
          if (!alive[j]) continue;
          double gain;
          if (m > 0.0) {
            gain = between[i][j] / m - 2.0 * (tot[i] / (2.0 * m)) * (tot[j] / (2.0 * m));
          } else {
            gain = -static_cast<double>(sz[i] + sz[j]);
          }
          if (gain > best) {
            best = gain;
            bi = i;
            bj = j;
          }
        }
      }
      alive[bj] = 0;
      tot[bi] += tot[bj];
      sz[bi] += sz[bj];
      for (std::size_t x = 0; x < nc; ++x) {
        between[bi][x] += between[bj][x];
        between[x][bi] += between[x][bj];
      }
      between[bi][bi] = 0.0;
      for (auto& r : root) {
        if (r == bj) r = static_cast<std::uint32_t>(bi);
      }
      ++tr.merges;
    }
    for (auto& c : comm) c = root[c];
    nc = compact(comm);
  }

  while (nc < target_clients) {
    std::vector<std::size_t> sz(nc, 0);
    for (auto c : comm) ++sz[c];
    const auto largest = static_cast<std::uint32_t>(
        std::max_element(sz.begin(), sz.end()) - sz.begin());
    bisect(base, comm, largest, static_cast<std::uint32_t>(nc), rng);
    ++nc;
    ++tr.splits;
  }
  return Partition::from_owner(g, target_clients, canonical_owner(comm, target_clients));
}

Partition balanced_kway(const Graph& g, std::size_t k, double imbalance_eps, std::uint64_t seed) {
  const std::size_t n = g.num_nodes();
  if (k == 0) throw ValidationError("k must be at least 1");
  if (!(imbalance_eps >= 0.0)) throw ValidationError("imbalance_eps must be non-negative");
  if (k > n) {
    throw ValidationError("balance infeasible: " + std::to_string(k) + " parts for " +
                          std::to_string(n) + " nodes");
  }
  const auto cap = static_cast<std::size_t>(
      std::ceil((1.0 + imbalance_eps) * static_cast<double>(n) / static_cast<double>(k)));
  std::mt19937_64 rng(derive_seed(seed, 0x6b776179u));
  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::uint32_t> part(n);
  for (std::size_t i = 0; i < n; ++i) part[order[i]] = static_cast<std::uint32_t>(i % k);
  if (k > 1) refine(symmetrize(g), part, k, cap, {}, rng);
  return Partition::from_owner(g, k, canonical_owner(part, k));
}

ExtendedSubgraph::ExtendedSubgraph(const Graph& g, const Partition& p, ClientId c)
    : graph_(&g),
      sets_(&p.client(c)),
      client_(c),
      masked_(std::make_shared<std::atomic<std::size_t>>(0)) {}

bool ExtendedSubgraph::is_owned(NodeId v) const {
  return std::binary_search(sets_->owned.begin(), sets_->owned.end(), v);
}

bool ExtendedSubgraph::is_remote(NodeId v) const {
  return std::binary_search(sets_->remote.begin(), sets_->remote.end(), v);
}

std::optional<std::span<const double>> ExtendedSubgraph::features(NodeId v) const {
  if (is_owned(v)) return graph_->node_features().row(v);
  if (is_remote(v)) {
    ++*masked_;
    return std::nullopt;
  }
  throw ValidationError("node " + std::to_string(v) + " is outside client " +
                        std::to_string(client_) + "'s extended subgraph");
}

std::optional<LabelMask> ExtendedSubgraph::labels(NodeId v) const {
  if (is_owned(v)) return graph_->labels().mask(v);
  if (is_remote(v)) {
    ++*masked_;
    return std::nullopt;
  }
  throw ValidationError("node " + std::to_string(v) + " is outside client " +
                        std::to_string(client_) + "'s extended subgraph");
}

Matrix ExtendedSubgraph::owned_features() const {
  Matrix x(sets_->owned.size(), graph_->feature_dim());
  for (std::size_t i = 0; i < sets_->owned.size(); ++i) {
    const auto row = *features(sets_->owned[i]);
    std::copy(row.begin(), row.end(), x.row(i).begin());
  }
  return x;
}

LabelMatrix ExtendedSubgraph::owned_labels() const {
  LabelMatrix y(sets_->owned.size());
  for (std::size_t i = 0; i < sets_->owned.size(); ++i) {
    y.set_mask(static_cast<NodeId>(i), *labels(sets_->owned[i]));
  }
  return y;
}

ExtendedSubgraph extend(const Graph& g, const Partition& p, ClientId c) {
  if (c >= p.num_clients()) throw ValidationError("no client " + std::to_string(c));
  return ExtendedSubgraph(g, p, c);
}

std::string serialize_partition(const Partition& p) {
  std::string out;
  for (NodeId v = 0; v < p.num_nodes(); ++v) {
    out += std::to_string(v) + ' ' + std::to_string(p.owner(v)) + '\n';
  }
  return out;
}

Partition deserialize_partition(const Graph& g, std::string_view text) {
  std::vector<ClientId> owner(g.num_nodes(), UINT32_MAX);
  std::size_t line_no = 0;
  std::size_t pos = 0;
  ClientId max_client = 0;
  while (pos < text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    const std::string_view line = text.substr(pos, end - pos);
    ++line_no;
    if (!line.empty() && line[0] != '#') {
      std::istringstream in{std::string(line)};
      long long v = -1, c = -1;
      std::string extra;
      if (!(in >> v >> c) || (in >> extra) || v < 0 || c < 0) {
        throw ParseError("expected 'node client'", line_no, pos);
      }
      if (static_cast<std::size_t>(v) >= g.num_nodes()) {
        throw ParseError("node " + std::to_string(v) + " is out of range", line_no, pos);
      }
      owner[static_cast<std::size_t>(v)] = static_cast<ClientId>(c);
      max_client = std::max(max_client, static_cast<ClientId>(c));
    }
    pos = end + 1;
  }
  for (NodeId v = 0; v < owner.size(); ++v) {
    if (owner[v] == UINT32_MAX) throw ParseError("node " + std::to_string(v) + " has no owner", 0, text.size());
  }
  const std::size_t clients = owner.empty() ? 1 : max_client + 1;
  return Partition::from_owner(g, clients, std::move(owner));
}

void save_partition(const Partition& p, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << serialize_partition(p);
}

Partition load_partition(const Graph& g, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_partition(g, ss.str());
}

std::string partition_summary_json(const Partition& p, const std::string& method) {
  nlohmann::json j;
  j["method"] = method;
  j["clients"] = p.num_clients();
  j["nodes"] = p.num_nodes();
  j["cut_edges"] = p.cut_edges();
  j["total_remote"] = p.total_remote();
  auto& per = j["per_client"] = nlohmann::json::array();
  for (ClientId c = 0; c < p.num_clients(); ++c) {
    const ClientSets& s = p.client(c);
    per.push_back({{"client", c},
                   {"owned", s.owned.size()},
                   {"remote", s.remote.size()},
                   {"boundary", s.boundary.size()},
                   {"intra_edges", s.intra.size()},
                   {"crossing_edges", s.crossing.size()}});
  }
  return j.dump(2) + "\n";
}

}  // namespace fedmp
