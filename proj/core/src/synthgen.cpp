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

#include "fedmp/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "fedmp/errors.hpp"
#include "fedmp/rng.hpp"

namespace fedmp {

namespace {

// Sorted, deduplicated out/in lists without self-loops. Cycle and motif
// definitions only care about which ordered pairs are connected.
struct SimpleAdjacency {
  std::vector<std::vector<NodeId>> out;
  std::vector<std::vector<NodeId>> in;

  explicit SimpleAdjacency(const Graph& g) : out(g.num_nodes()), in(g.num_nodes()) {
    for (NodeId v = 0; v < g.num_nodes(); ++v) {
      for (const Incidence& inc : g.out_edges(v)) {
        if (inc.node != v && (out[v].empty() || out[v].back() != inc.node)) {
          out[v].push_back(inc.node);
        }
      }
      for (const Incidence& inc : g.in_edges(v)) {
        if (inc.node != v && (in[v].empty() || in[v].back() != inc.node)) {
          in[v].push_back(inc.node);
        }
      }
    }
  }
};

std::size_t motif_edge_count(Task t, const ScatterGatherParams& sg, const BicliqueParams& bc) {
  switch (t) {
    case Task::ScatterGather: return 2 * sg.min_intermediates;
    case Task::Biclique: return bc.left * bc.right;
    default: return static_cast<std::size_t>(cycle_length(t));
  }
}

// Canonical cycle enumeration: every simple cycle is found exactly once from
// its smallest node, exploring only larger nodes.
class CycleMarker {
 public:
  CycleMarker(const SimpleAdjacency& adj, LabelMatrix& labels)
      : adj_(adj), labels_(labels), on_path_(adj.out.size(), false) {}

  void run() {
    for (NodeId s = 0; s < adj_.out.size(); ++s) {
      start_ = s;
      path_.assign(1, s);
      on_path_[s] = true;
      extend(s);
      on_path_[s] = false;
    }
  }

 private:
  void extend(NodeId v) {
    for (NodeId w : adj_.out[v]) {
      if (w == start_) {
        const std::size_t k = path_.size();
        if (k >= 2) {
          const Task t = static_cast<Task>(k - 2);
          for (NodeId u : path_) labels_.set(u, t);
        }
        continue;
      }
      if (w < start_ || on_path_[w] || path_.size() >= 6) continue;
      path_.push_back(w);
      on_path_[w] = true;
      extend(w);
      on_path_[w] = false;
      path_.pop_back();
    }
  }

  const SimpleAdjacency& adj_;
  LabelMatrix& labels_;
  std::vector<bool> on_path_;
  std::vector<NodeId> path_;
  NodeId start_ = 0;
};

void mark_scatter_gather(const SimpleAdjacency& adj, const ScatterGatherParams& sg,
                         LabelMatrix& labels) {
  const std::size_t n = adj.out.size();
  std::vector<std::uint32_t> count(n, 0);
  std::vector<NodeId> touched;
  for (NodeId s = 0; s < n; ++s) {
    touched.clear();
    for (NodeId x : adj.out[s]) {
      for (NodeId t : adj.out[x]) {
        if (t == s) continue;
        if (count[t]++ == 0) touched.push_back(t);
      }
    }
    for (NodeId t : touched) {
      if (count[t] >= sg.min_intermediates) {
        labels.set(s, Task::ScatterGather);
        labels.set(t, Task::ScatterGather);
        for (NodeId x : adj.out[s]) {
          if (x != t && std::binary_search(adj.out[x].begin(), adj.out[x].end(), t)) {
            labels.set(x, Task::ScatterGather);
          }
        }
      }
    }
    for (NodeId t : touched) count[t] = 0;
  }
}

// Grows left sets in increasing id order; `common` is the shared out-set of
// the current left set with left nodes removed.
void grow_biclique(const SimpleAdjacency& adj, const BicliqueParams& bc,
                   std::vector<NodeId>& left, const std::vector<NodeId>& common,
                   LabelMatrix& labels) {
  if (left.size() == bc.left) {
    for (NodeId l : left) labels.set(l, Task::Biclique);
    for (NodeId r : common) labels.set(r, Task::Biclique);
    return;
  }
  std::vector<NodeId> candidates;
  for (NodeId r : common) {
    for (NodeId c : adj.in[r]) {
      if (c > left.back()) candidates.push_back(c);
    }
  }
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
  std::vector<NodeId> next;
  for (NodeId c : candidates) {
    next.clear();
    std::set_intersection(common.begin(), common.end(), adj.out[c].begin(), adj.out[c].end(),
                          std::back_inserter(next));
    std::erase(next, c);
    if (next.size() < bc.right) continue;
    left.push_back(c);
    grow_biclique(adj, bc, left, next, labels);
    left.pop_back();
  }
}

void mark_bicliques(const SimpleAdjacency& adj, const BicliqueParams& bc, LabelMatrix& labels) {
  if (bc.left == 0 || bc.right == 0) return;
  std::vector<NodeId> left;
  for (NodeId l = 0; l < adj.out.size(); ++l) {
    if (adj.out[l].size() < bc.right) continue;
    left.assign(1, l);
    grow_biclique(adj, bc, left, adj.out[l], labels);
  }
}

}  // namespace

std::string_view split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

GenConfig GenConfig::reference_mix(std::size_t num_nodes, std::uint64_t seed, Split split) {
  GenConfig cfg;
  cfg.num_nodes = num_nodes;
  cfg.avg_degree = 6.0;
  cfg.rng_seed = seed;
  cfg.split = split;
  const double scale = static_cast<double>(num_nodes) / 8192.0;
  auto scaled = [scale](double per_8192) {
    return static_cast<std::size_t>(std::llround(per_8192 * scale));
  };
  cfg.pattern_counts = {
      {Task::C2, scaled(280)},           {Task::C3, scaled(496)},
      {Task::C4, scaled(722)},           {Task::C5, scaled(736)},
      {Task::C6, scaled(176)},           {Task::ScatterGather, scaled(541)},
      {Task::Biclique, scaled(563)},
  };
  return cfg;
}

std::size_t pattern_footprint(Task t, const ScatterGatherParams& sg, const BicliqueParams& bc) {
  switch (t) {
    case Task::ScatterGather: return sg.min_intermediates + 2;
    case Task::Biclique: return bc.left + bc.right;
    default: return static_cast<std::size_t>(cycle_length(t));
  }
}

GeneratedGraph generate(const GenConfig& cfg) {
  const std::size_t n = cfg.num_nodes;
  if (n == 0) throw GenerationError("num_nodes must be positive");
  if (!(cfg.avg_degree > 0.0)) throw GenerationError("avg_degree must be positive");
  std::size_t injected_edges = 0;
  for (const auto& [task, count] : cfg.pattern_counts) {
    if (count == 0) continue;
    const std::size_t fp = pattern_footprint(task, cfg.scatter_gather, cfg.biclique);
    if (fp > n) {
      throw GenerationError("pattern " + std::string(task_name(task)) + " needs " +
                            std::to_string(fp) + " nodes but the graph has " +
                            std::to_string(n));
    }
    injected_edges += count * motif_edge_count(task, cfg.scatter_gather, cfg.biclique);
  }

  std::mt19937_64 rng(derive_seed(cfg.rng_seed, 0x67656e00u + static_cast<unsigned>(cfg.split)));
  const auto total_edges =
      static_cast<std::size_t>(std::llround(static_cast<double>(n) * cfg.avg_degree));
  const std::size_t base_edges = total_edges > injected_edges ? total_edges - injected_edges : 0;

  // Signed offset pool, then a per-node window into it.
  const auto& topo = cfg.topology;
  std::vector<std::int64_t> all_offsets;
  for (std::int64_t o = 1; o <= static_cast<std::int64_t>(topo.max_offset); ++o) {
    all_offsets.push_back(o);
    all_offsets.push_back(-o);
  }
  std::shuffle(all_offsets.begin(), all_offsets.end(), rng);
  all_offsets.resize(std::min(all_offsets.size(), std::max<std::size_t>(topo.pool_size, 1)));
  const std::vector<std::int64_t>& pool = all_offsets;
  const std::size_t per_node = std::clamp<std::size_t>(topo.offsets_per_node, 1, pool.size());

  std::vector<std::vector<std::int64_t>> node_offsets(n);
  {
    std::vector<std::size_t> idx(pool.size());
    for (auto& offs : node_offsets) {
      std::iota(idx.begin(), idx.end(), 0);
      for (std::size_t i = 0; i < per_node; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
        std::swap(idx[i], idx[pick(rng)]);
        offs.push_back(pool[idx[i]]);
      }
    }
  }

  std::vector<double> activity(n, 1.0);
  if (topo.activity_sigma > 0.0) {
    std::normal_distribution<double> z(0.0, topo.activity_sigma);
    for (double& a : activity) a = std::exp(z(rng));
  }
  std::discrete_distribution<NodeId> any_source(activity.begin(), activity.end());

  std::vector<std::pair<NodeId, NodeId>> edges;
  edges.reserve(base_edges + injected_edges);
  std::uniform_int_distribution<NodeId> any_node(0, static_cast<NodeId>(n - 1));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> any_slot(0, per_node - 1);
  const auto sn = static_cast<std::int64_t>(n);
  for (std::size_t i = 0; i < base_edges; ++i) {
    const NodeId src = any_source(rng);
    const std::int64_t off = node_offsets[src][any_slot(rng)];
    auto dst = static_cast<NodeId>(((static_cast<std::int64_t>(src) + off) % sn + sn) % sn);
    if (unit(rng) < topo.rewire_fraction) dst = any_node(rng);
    edges.emplace_back(src, dst);
  }

  GeneratedGraph out;
  std::vector<NodeId> members;
  for (Task task : kAllTasks) {
    const auto it = cfg.pattern_counts.find(task);
    if (it == cfg.pattern_counts.end()) continue;
    const std::size_t fp = pattern_footprint(task, cfg.scatter_gather, cfg.biclique);
    for (std::size_t rep = 0; rep < it->second; ++rep) {
      members = sample_distinct(n, fp, rng);
      PatternInstance inst;
      inst.task = task;
      inst.member_nodes = members;
      auto add = [&](NodeId a, NodeId b) {
        inst.member_edges.push_back(static_cast<EdgeId>(edges.size()));
        edges.emplace_back(a, b);
      };
      if (task == Task::ScatterGather) {
        const NodeId s = members[0];
        const NodeId t = members[fp - 1];
        for (std::size_t i = 1; i + 1 < fp; ++i) add(s, members[i]);
        for (std::size_t i = 1; i + 1 < fp; ++i) add(members[i], t);
      } else if (task == Task::Biclique) {
        for (std::size_t l = 0; l < cfg.biclique.left; ++l) {
          for (std::size_t r = 0; r < cfg.biclique.right; ++r) {
            add(members[l], members[cfg.biclique.left + r]);
          }
        }
      } else {
        for (std::size_t i = 0; i < fp; ++i) add(members[i], members[(i + 1) % fp]);
      }
      out.instances.push_back(std::move(inst));
    }
  }

  Graph g = Graph::build(n, edges);
  LabelMatrix labels = detect_patterns(g, cfg.scatter_gather, cfg.biclique);
  out.graph = g.with_labels(std::move(labels));
  return out;
}

LabelMatrix detect_patterns(const Graph& g, const ScatterGatherParams& sg,
                            const BicliqueParams& bc) {
  LabelMatrix labels(g.num_nodes());
  const SimpleAdjacency adj(g);
  CycleMarker(adj, labels).run();
  mark_scatter_gather(adj, sg, labels);
  mark_bicliques(adj, bc, labels);
  return labels;
}

namespace {

class CycleOracle {
 public:
  explicit CycleOracle(const Graph& g) : g_(g), on_path_(g.num_nodes(), false) {}

  // Is there a simple cycle v -> ... -> v with exactly k distinct nodes?
  bool on_cycle(NodeId v, int k) {
    target_ = v;
    len_ = k;
    on_path_[v] = true;
    const bool found = search(v, 1);
    on_path_[v] = false;
    return found;
  }

 private:
  bool search(NodeId u, int depth) {
    for (const Incidence& inc : g_.out_edges(u)) {
      const NodeId w = inc.node;
      if (depth == len_) {
        if (w == target_ && u != target_) return true;
        continue;
      }
      if (on_path_[w]) continue;
      on_path_[w] = true;
      const bool found = search(w, depth + 1);
      on_path_[w] = false;
      if (found) return true;
    }
    return false;
  }

  const Graph& g_;
  std::vector<bool> on_path_;
  NodeId target_ = 0;
  int len_ = 0;
};

std::vector<NodeId> distinct_out(const Graph& g, NodeId v) {
  std::vector<NodeId> out;
  for (const Incidence& inc : g.out_edges(v)) {
    if (inc.node != v && (out.empty() || out.back() != inc.node)) out.push_back(inc.node);
  }
  return out;
}

std::vector<NodeId> distinct_in(const Graph& g, NodeId v) {
  std::vector<NodeId> in;
  for (const Incidence& inc : g.in_edges(v)) {
    if (inc.node != v && (in.empty() || in.back() != inc.node)) in.push_back(inc.node);
  }
  return in;
}

void oracle_left_sets(const std::vector<std::vector<NodeId>>& outs, const BicliqueParams& bc,
                      std::vector<NodeId>& left, std::vector<NodeId> common,
                      LabelMatrix& labels) {
  for (NodeId l : left) std::erase(common, l);
  if (common.size() < bc.right) return;
  if (left.size() == bc.left) {
    for (NodeId l : left) labels.set(l, Task::Biclique);
    for (NodeId r : common) labels.set(r, Task::Biclique);
    return;
  }
  for (NodeId c = left.back() + 1; c < outs.size(); ++c) {
    std::vector<NodeId> next;
    std::set_intersection(common.begin(), common.end(), outs[c].begin(), outs[c].end(),
                          std::back_inserter(next));
    left.push_back(c);
    oracle_left_sets(outs, bc, left, std::move(next), labels);
    left.pop_back();
  }
}

}  // namespace

LabelMatrix oracle_labels(const Graph& g, int max_cycle_len, const ScatterGatherParams& sg,
                          const BicliqueParams& bc) {
  if (max_cycle_len > 6) throw ValidationError("oracle cycle length is capped at 6");
  const std::size_t n = g.num_nodes();
  LabelMatrix labels(n);

  CycleOracle cycles(g);
  for (NodeId v = 0; v < n; ++v) {
    for (int k = 2; k <= max_cycle_len; ++k) {
      if (cycles.on_cycle(v, k)) labels.set(v, static_cast<Task>(k - 2));
    }
  }

  std::vector<std::vector<NodeId>> outs(n), ins(n);
  for (NodeId v = 0; v < n; ++v) {
    outs[v] = distinct_out(g, v);
    ins[v] = distinct_in(g, v);
  }

  // Scatter-gather: every ordered (source, sink) pair.
  std::vector<NodeId> mid;
  for (NodeId s = 0; s < n; ++s) {
    for (NodeId t = 0; t < n; ++t) {
      if (s == t) continue;
      mid.clear();
      std::set_intersection(outs[s].begin(), outs[s].end(), ins[t].begin(), ins[t].end(),
                            std::back_inserter(mid));
      std::erase(mid, t);
      std::erase(mid, s);
      if (mid.size() < sg.min_intermediates) continue;
      labels.set(s, Task::ScatterGather);
      labels.set(t, Task::ScatterGather);
      for (NodeId x : mid) labels.set(x, Task::ScatterGather);
    }
  }

  // Bicliques: every left set of the configured size, in increasing id order.
  if (bc.left > 0 && bc.right > 0) {
    std::vector<NodeId> left;
    for (NodeId l = 0; l < n; ++l) {
      left.assign(1, l);
      oracle_left_sets(outs, bc, left, outs[l], labels);
    }
  }
  return labels;
}

std::array<double, kNumTasks> prevalence(const LabelMatrix& labels) {
  std::array<double, kNumTasks> p{};
  if (labels.num_nodes() == 0) return p;
  for (Task t : kAllTasks) {
    p[task_index(t)] =
        static_cast<double>(labels.positives(t)) / static_cast<double>(labels.num_nodes());
  }
  return p;
}

}  // namespace fedmp
