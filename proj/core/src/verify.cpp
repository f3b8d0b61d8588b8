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

#include "fedmp/verify.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <chrono>
#include <cmath>
#include <deque>
#include <random>
#include <set>
#include <sstream>

#include "fedmp/errors.hpp"
#include "fedmp/gradcheck.hpp"
#include "fedmp/metrics.hpp"
#include "fedmp/partition.hpp"
#include "fedmp/rng.hpp"
#include "fedmp/synthgen.hpp"
#include "fedmp/training.hpp"
#include <nlohmann/json.hpp>

namespace fedmp {

namespace {

constexpr std::array<std::string_view, 6> kSuites = {"equivalence", "gap",    "ledger",
                                                     "gradient",    "oracle", "determinism"};

class Digest {
 public:
  void add(std::uint64_t x) {
    h_ ^= x;
    h_ *= 1099511628211ull;
  }
  void add(double x) { add(std::bit_cast<std::uint64_t>(x)); }
  void add(const Matrix& m) {
    for (double x : m.data()) add(x);
  }
  void add(std::string_view s) {
    for (char c : s) add(static_cast<std::uint64_t>(static_cast<unsigned char>(c)));
  }
  std::uint64_t value() const { return h_; }

 private:
  std::uint64_t h_ = 1469598103934665603ull;
};

struct Instance {
  Graph graph;
  Partition partition;
  ModelParams params;
  std::string label;
};

Graph random_multigraph(std::mt19937_64& rng, std::size_t n, std::size_t m, std::size_t d_in,
                        std::size_t d_edge) {
  std::uniform_int_distribution<NodeId> node(0, static_cast<NodeId>(n - 1));
  std::uniform_real_distribution<double> val(-1.0, 1.0);
  std::vector<std::pair<NodeId, NodeId>> e(m);
  for (auto& [s, t] : e) {
    s = node(rng);
    t = node(rng);
  }
  Matrix x(n, d_in);
  for (double& v : x.data()) v = val(rng);
  Matrix ef(m, d_edge);
  for (double& v : ef.data()) v = val(rng);
  LabelMatrix y(n);
  std::uniform_int_distribution<int> mask(0, 127);
  for (NodeId v = 0; v < n; ++v) y.set_mask(v, static_cast<LabelMask>(mask(rng)));
  return Graph::build(n, e, std::move(x), std::move(ef), std::move(y));
}

ModelParams random_model(const ModelConfig& cfg, std::mt19937_64& rng) {
  ModelParams p = ModelParams::init(cfg, rng());
  std::uniform_real_distribution<double> val(-0.4, 0.4);
  for (double& w : p.flat()) w = val(rng);
  return p;
}

Matrix random_features(std::mt19937_64& rng, std::size_t rows, std::size_t cols) {
  std::uniform_real_distribution<double> val(-1.0, 1.0);
  Matrix m(rows, cols);
  for (double& v : m.data()) v = val(rng);
  return m;
}

// Graph (<= max_nodes), partition (alternating method, k in 2..8) and
// random parameters of depth 1..6.
Instance make_instance(std::size_t i, std::uint64_t seed, std::size_t max_nodes) {
  std::mt19937_64 rng(derive_seed(seed, 0x766572 + i));
  const std::size_t n = std::uniform_int_distribution<std::size_t>(16, max_nodes)(rng);
  const std::size_t d_edge = i % 3 == 0 ? 2 : 0;
  Instance inst;
  if (i % 2 == 0) {
    const double deg = std::uniform_real_distribution<double>(1.0, 4.0)(rng);
    inst.graph = random_multigraph(rng, n, static_cast<std::size_t>(deg * static_cast<double>(n)),
                                   3, d_edge);
  } else {
    const Graph g = generate(GenConfig::reference_mix(n, rng())).graph;
    Matrix ef = random_features(rng, g.num_edges(), d_edge);
    const std::vector<Edge> edges(g.edges().begin(), g.edges().end());
    std::vector<std::pair<NodeId, NodeId>> pairs;
    for (const Edge& e : edges) pairs.emplace_back(e.src, e.dst);
    inst.graph = Graph::build(n, pairs, random_features(rng, n, 3), std::move(ef), g.labels());
  }
  const std::size_t k = std::min<std::size_t>(2 + i % 7, n);
  const bool use_louvain = (i / 2) % 2 == 0;
  inst.partition = use_louvain ? louvain(inst.graph, k, rng()) : balanced_kway(inst.graph, k, 0.1, rng());
  ModelConfig cfg;
  cfg.d_in = 3;
  cfg.d_edge = d_edge;
  cfg.hidden = 8;
  cfg.layers = 1 + i % 6;
  cfg.direction = std::array{Direction::Both, Direction::In, Direction::Out}[(i / 6) % 3];
  inst.params = random_model(cfg, rng);
  std::ostringstream label;
  label << "instance " << i << " (n=" << n << ", " << (use_louvain ? "louvain" : "kway")
        << " k=" << k << ", L=" << cfg.layers << ", " << direction_name(cfg.direction) << ")";
  inst.label = label.str();
  return inst;
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

std::size_t instances_or(const VerifyOptions& o, std::size_t dflt) {
  return o.instances == 0 ? dflt : o.instances;
}

CheckResult make_check(std::string name) {
  CheckResult c;
  c.name = std::move(name);
  return c;
}

void finish(CheckResult& c) { c.passed = c.instances > 0 && c.failures == 0; }

// Owned nodes of the client whose depth-L receptive field contains an edge to
// a remote node.
std::vector<bool> exposed_nodes(const LocalTopology& topo, Direction dir, std::size_t layers) {
  std::vector<int> sides;
  if (dir != Direction::Out) sides.push_back(0);
  if (dir != Direction::In) sides.push_back(1);
  const std::size_t n = topo.num_owned();
  std::vector<bool> touches(n, false);
  for (std::size_t v = 0; v < n; ++v) {
    for (int s : sides) {
      for (const LocalIncidence& inc : topo.incidences(s, v)) touches[v] = touches[v] || inc.node >= n;
    }
  }
  std::vector<bool> out(n, false);
  std::vector<std::size_t> dist(n);
  for (std::size_t v = 0; v < n; ++v) {
    std::fill(dist.begin(), dist.end(), SIZE_MAX);
    std::deque<std::size_t> q = {v};
    dist[v] = 0;
    while (!q.empty() && !out[v]) {
      const std::size_t w = q.front();
      q.pop_front();
      if (touches[w]) {
        out[v] = true;
        break;
      }
      if (dist[w] + 1 >= layers) continue;
      for (int s : sides) {
        for (const LocalIncidence& inc : topo.incidences(s, w)) {
          if (inc.node < n && dist[inc.node] == SIZE_MAX) {
            dist[inc.node] = dist[w] + 1;
            q.push_back(inc.node);
          }
        }
      }
    }
  }
  return out;
}

SuiteReport equivalence_suite(const VerifyOptions& o) {
  SuiteReport rep;
  rep.suite = "equivalence";
  Digest dg;
  CheckResult base = make_check("layer-0 rows (embedding exchange)");
  CheckResult layers = make_check("per-layer rows, layers 1..L");
  CheckResult logits = make_check("logits bitwise equal to centralized");
  CheckResult barrier = make_check("skipped barrier raises protocol violation");
  const std::size_t count = instances_or(o, 100);
  for (std::size_t i = 0; i < count; ++i) {
    const Instance inst = make_instance(i, o.seed, 256);
    const Federation fed = Federation::make(inst.graph, inst.partition);
    const CentralForward central = forward_full(inst.params, inst.graph);
    DistributedOptions opts;
    opts.schedule = o.schedule;
    opts.keep_tape = false;
    const std::vector<ModelParams> shared = {inst.params};
    const auto fw = distributed_forward(shared, fed, opts);
    const std::size_t depth = inst.params.config().layers;
    std::array<double, 3> worst{};
    for (std::size_t c = 0; c < fed.num_clients(); ++c) {
      const LocalTopology& t = fed.clients[c].topology;
      for (std::size_t l = 0; l <= depth; ++l) {
        const std::size_t rows = l < depth ? t.num_local() : t.num_owned();
        for (std::size_t v = 0; v < rows; ++v) {
          const double d = max_abs_diff(fw[c].bank.row(l, v), central.bank.row(l, t.global(v)));
          worst[l == 0 ? 0 : 1] = std::max(worst[l == 0 ? 0 : 1], d);
          dg.add(fw[c].bank.row(l, v)[0]);
        }
      }
      for (std::size_t v = 0; v < t.num_owned(); ++v) {
        worst[2] = std::max(worst[2], max_abs_diff(fw[c].logits.row(v), central.logits.row(t.global(v))));
      }
      dg.add(fw[c].logits);
    }
    CheckResult* checks[3] = {&base, &layers, &logits};
    for (std::size_t k = 0; k < 3; ++k) {
      ++checks[k]->instances;
      checks[k]->metric = std::max(checks[k]->metric, worst[k]);
      if (worst[k] != 0.0) {
        ++checks[k]->failures;
        if (checks[k]->detail.empty()) checks[k]->detail = "first mismatch: " + inst.label;
      }
    }

    if (fed.plan.embeddings_per_layer() > 0 && i % 10 == 0) {
      ++barrier.instances;
      DistributedOptions skip = opts;
      skip.skip_exchange_at = depth > 1 ? 1 : 0;
      try {
        distributed_forward(shared, fed, skip);
        ++barrier.failures;
      } catch (const ProtocolViolation&) {
      }
    }
  }
  for (CheckResult* c : {&base, &layers, &logits, &barrier}) {
    finish(*c);
    if (c != &barrier) {
      std::ostringstream s;
      s << c->instances - c->failures << "/" << c->instances << " instances at max-abs " << c->metric;
      if (!c->detail.empty()) s << "; " << c->detail;
      c->detail = s.str();
    } else {
      c->detail = std::to_string(c->instances - c->failures) + "/" +
                  std::to_string(c->instances) + " skipped exchanges detected";
    }
    rep.checks.push_back(*c);
  }
  rep.digest = dg.value();
  return rep;
}

SuiteReport gap_suite(const VerifyOptions& o) {
  SuiteReport rep;
  rep.suite = "gap";
  Digest dg;
  CheckResult exposed = make_check("exposed nodes have nonzero placeholder gap");
  CheckResult sealed = make_check("fully owned receptive fields have zero gap");
  CheckResult fresh = make_check("fresh exchange closes every gap");
  std::size_t exposed_nodes_total = 0, exposed_zero = 0, sealed_total = 0;
  const std::size_t count = instances_or(o, 100);
  for (std::size_t i = 0; i < count; ++i) {
    const Instance inst = make_instance(i, o.seed ^ 0x676170, 256);
    const Federation fed = Federation::make(inst.graph, inst.partition);
    const CentralForward central = forward_full(inst.params, inst.graph);
    const std::vector<ModelParams> shared = {inst.params};
    const std::size_t depth = inst.params.config().layers;
    DistributedOptions opts;
    opts.schedule = o.schedule;
    opts.keep_tape = false;
    opts.policy.mode = RemoteMode::Placeholder;
    const auto fw = distributed_forward(shared, fed, opts);
    const auto gaps = measure_gap(central.bank, fw, fed, depth);
    std::vector<std::vector<bool>> exp(fed.num_clients());
    for (std::size_t c = 0; c < fed.num_clients(); ++c) {
      exp[c] = exposed_nodes(fed.clients[c].topology, inst.params.config().direction, depth);
    }
    bool inst_ok = true, inst_sealed_ok = true, any_exposed = false;
    for (const NodeGap& g : gaps) {
      const auto local = *fed.clients[g.client].topology.local_of(g.node);
      dg.add(g.l2);
      if (exp[g.client][local]) {
        any_exposed = true;
        ++exposed_nodes_total;
        if (!(g.l2 > 0.0)) {
          inst_ok = false;
          ++exposed_zero;
        }
      } else {
        ++sealed_total;
        if (g.max_abs != 0.0) inst_sealed_ok = false;
      }
    }
    if (any_exposed) {
      ++exposed.instances;
      if (!inst_ok) ++exposed.failures;
    }
    ++sealed.instances;
    if (!inst_sealed_ok) ++sealed.failures;

    opts.policy.mode = RemoteMode::Fresh;
    const auto ff = distributed_forward(shared, fed, opts);
    ++fresh.instances;
    for (const NodeGap& g : measure_gap(central.bank, ff, fed, depth)) {
      if (g.max_abs != 0.0) {
        ++fresh.failures;
        break;
      }
    }
  }
  // Exact cancellation is possible but measure-zero; the bar is 99% of
  // instances with every exposed node showing a gap.
  exposed.passed = exposed.instances > 0 &&
                   static_cast<double>(exposed.instances - exposed.failures) >=
                       0.99 * static_cast<double>(exposed.instances);
  exposed.metric = static_cast<double>(exposed.instances - exposed.failures) /
                   static_cast<double>(std::max<std::size_t>(1, exposed.instances));
  exposed.detail = std::to_string(exposed.instances - exposed.failures) + "/" +
                   std::to_string(exposed.instances) + " instances; " +
                   std::to_string(exposed_nodes_total - exposed_zero) + "/" +
                   std::to_string(exposed_nodes_total) + " exposed nodes with a gap";
  finish(sealed);
  sealed.detail = std::to_string(sealed_total) + " sealed nodes over " +
                  std::to_string(sealed.instances) + " instances, " +
                  std::to_string(sealed.failures) + " instances with a nonzero gap";
  finish(fresh);
  fresh.detail = std::to_string(fresh.instances - fresh.failures) + "/" +
                 std::to_string(fresh.instances) + " instances with all gaps zero";
  rep.checks = {exposed, sealed, fresh};
  rep.digest = dg.value();
  return rep;
}

TrainConfig tiny_config(const ModelParams& like, Regime r, RemoteMode m, std::uint64_t seed,
                        Schedule s) {
  TrainConfig cfg;
  cfg.regime = r;
  cfg.policy.mode = m;
  cfg.learning_rate = 0.05;
  cfg.epochs = 3;
  cfg.batch_size = 4;
  cfg.patience = 0;
  cfg.seed = seed;
  cfg.schedule = s;
  cfg.model = like.config();
  return cfg;
}

SuiteReport ledger_suite(const VerifyOptions& o) {
  SuiteReport rep;
  rep.suite = "ledger";
  Digest dg;
  CheckResult fresh = make_check("fresh: embeddings per layer equal total remote count");
  CheckResult none = make_check("placeholder: nothing sent");
  CheckResult stale = make_check("stale: one exchange per epoch");
  CheckResult ratio = make_check("comm ratio: closed form equals ledger bytes");
  const std::size_t count = instances_or(o, 20);
  for (std::size_t i = 0; i <= count; ++i) {
    Instance inst;
    if (i == count) {
      // The four-cycle split two ways, as in the running example.
      const std::vector<std::pair<NodeId, NodeId>> e = {{0, 1}, {1, 2}, {2, 3}, {3, 0}};
      inst.graph = constant_features(Graph::build(4, e), 1.0);
      inst.partition = Partition::from_owner(inst.graph, 2, {0, 0, 1, 1});
      ModelConfig cfg;
      cfg.d_in = 1;
      cfg.hidden = 8;
      cfg.layers = 4;
      std::mt19937_64 rng(o.seed);
      inst.params = random_model(cfg, rng);
    } else {
      inst = make_instance(i, o.seed ^ 0x6c6564, 96);
    }
    const Federation fed = Federation::make(inst.graph, inst.partition);
    const std::size_t depth = inst.params.config().layers;
    const std::size_t d = inst.params.config().hidden;
    std::size_t remote = 0;
    for (const ClientData& cd : fed.clients) remote += cd.topology.num_remote();
    const std::vector<ModelParams> shared = {inst.params};

    ExchangeLedger led;
    DistributedOptions opts;
    opts.schedule = o.schedule;
    opts.keep_tape = false;
    opts.ledger = &led;
    distributed_forward(shared, fed, opts);
    ++fresh.instances;
    bool ok = fed.plan.embeddings_per_layer() == remote;
    for (std::size_t l = 0; l <= depth; ++l) {
      ok = ok && led.embeddings_at(0, l) == (l < depth ? remote : 0);
    }
    ok = ok && led.total_bytes() == led.total_embeddings() * d * sizeof(double);
    if (!ok) ++fresh.failures;
    dg.add(static_cast<std::uint64_t>(led.total_bytes()));

    ExchangeLedger quiet;
    opts.ledger = &quiet;
    opts.policy.mode = RemoteMode::Placeholder;
    distributed_forward(shared, fed, opts);
    ++none.instances;
    if (quiet.total_bytes() != 0 || !quiet.rows().empty()) ++none.failures;

    const TrainResult st = train(fed, tiny_config(inst.params, Regime::FedAvg, RemoteMode::Stale, i, o.schedule));
    ++stale.instances;
    if (st.ledger.total_embeddings() != st.history.size() * depth * remote) ++stale.failures;
    dg.add(static_cast<std::uint64_t>(st.ledger.total_embeddings()));

    TrainConfig fc = tiny_config(inst.params, Regime::FedAvg, RemoteMode::Fresh, i, o.schedule);
    if (i == count) fc.batch_size = 1;
    const TrainResult fr = train(fed, fc);
    const auto C = static_cast<std::int64_t>(fed.num_clients());
    const auto P = static_cast<std::int64_t>(inst.params.size());
    const auto S = static_cast<std::int64_t>(fr.steps_per_epoch);
    const auto E = static_cast<std::int64_t>(fr.ledger.epoch_steps().size());
    const CommReport rp = comm_report(S, static_cast<std::int64_t>(depth),
                                      static_cast<std::int64_t>(d), P, C, E,
                                      static_cast<std::int64_t>(fr.ledger.total_embeddings()));
    // Volumes in bytes: E rounds of C parameter uploads plus the exchanged
    // rows, against C gradient uploads on every one of the E*S steps.
    const auto bytes_param = static_cast<std::int64_t>(sizeof(double)) * P;
    const Rational from_bytes(E * C * bytes_param + static_cast<std::int64_t>(fr.ledger.total_bytes()),
                              E * S * C * bytes_param);
    ++ratio.instances;
    bool uniform_steps = true;
    for (std::size_t s : fr.ledger.epoch_steps()) uniform_steps = uniform_steps && s == fr.steps_per_epoch;
    if (!(uniform_steps && rp.ratio == from_bytes && rp.measured == rp.ratio)) ++ratio.failures;
    if (i == count) {
      ratio.detail = "four-cycle split: S=" + std::to_string(S) + ", ratio " +
                     rational_string(rp.ratio) + ", bytes " + rational_string(from_bytes);
    }
    dg.add(checkpoint_bytes(fr.params[0]));
  }
  for (CheckResult* c : {&fresh, &none, &stale, &ratio}) {
    finish(*c);
    const std::string counts = std::to_string(c->instances - c->failures) + "/" +
                               std::to_string(c->instances) + " instances";
    c->detail = c->detail.empty() ? counts : counts + "; " + c->detail;
    rep.checks.push_back(*c);
  }
  rep.digest = dg.value();
  return rep;
}

SuiteReport gradient_suite(const VerifyOptions& o) {
  SuiteReport rep;
  rep.suite = "gradient";
  Digest dg;
  CheckResult c = make_check("central differences (eps 1e-4, rel 1e-3)");
  std::size_t checked = 0, skipped = 0;
  const std::size_t count = instances_or(o, 20);
  for (std::size_t i = 0; i < count; ++i) {
    std::mt19937_64 rng(derive_seed(o.seed ^ 0x67726164, i));
    const std::size_t n = std::uniform_int_distribution<std::size_t>(4, 32)(rng);
    const std::size_t d_edge = i % 2 == 0 ? 0 : 2;
    const Graph g = random_multigraph(rng, n, 2 * n, 2, d_edge);
    ModelConfig cfg;
    cfg.d_in = 2;
    cfg.d_edge = d_edge;
    cfg.hidden = 4;
    cfg.layers = 1 + i % 3;
    cfg.direction = std::array{Direction::Both, Direction::In, Direction::Out}[i % 3];
    const ModelParams p = random_model(cfg, rng);
    std::vector<std::uint32_t> nodes(n);
    for (std::uint32_t v = 0; v < n; ++v) nodes[v] = v;
    LossConfig loss;
    if (i % 4 == 3) loss.reduction = LossConfig::Reduction::Sum;
    const GradCheckResult r = check_gradient(p, g, nodes, loss);
    ++c.instances;
    checked += r.checked;
    skipped += r.skipped;
    c.metric = std::max(c.metric, r.max_rel_error);
    if (!r.passed()) ++c.failures;
    dg.add(r.max_rel_error);
  }
  finish(c);
  std::ostringstream s;
  s << c.instances - c.failures << "/" << c.instances << " instances, " << checked
    << " coordinates checked, " << skipped << " skipped at kinks, max rel error " << c.metric;
  c.detail = s.str();
  rep.checks = {c};
  rep.digest = dg.value();
  return rep;
}

double curve_average_precision(const std::vector<double>& s, const std::vector<std::uint8_t>& y) {
  std::set<double, std::greater<>> thresholds(s.begin(), s.end());
  std::size_t pos = 0;
  for (auto v : y) pos += v;
  double ap = 0.0, prev = 0.0;
  for (double t : thresholds) {
    std::size_t tp = 0, fp = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] >= t) (y[i] ? tp : fp)++;
    }
    const double recall = static_cast<double>(tp) / static_cast<double>(pos);
    ap += (recall - prev) * static_cast<double>(tp) / static_cast<double>(tp + fp);
    prev = recall;
  }
  return ap;
}

SuiteReport oracle_suite(const VerifyOptions& o) {
  SuiteReport rep;
  rep.suite = "oracle";
  Digest dg;
  CheckResult labels = make_check("generator labels equal brute-force detector");
  CheckResult ap = make_check("average precision equals threshold-sweep integration");
  CheckResult constant = make_check("constant scores give PR-AUC equal to minority prevalence");
  const std::size_t count = instances_or(o, 10);
  const ScatterGatherParams sg;
  const BicliqueParams bc;
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t n = 64 + 40 * i;
    const GeneratedGraph gen = generate(GenConfig::reference_mix(n, derive_seed(o.seed, i)));
    const LabelMatrix oracle = oracle_labels(gen.graph, 6, sg, bc);
    ++labels.instances;
    for (NodeId v = 0; v < n; ++v) {
      if (oracle.mask(v) != gen.graph.labels().mask(v)) {
        ++labels.failures;
        break;
      }
    }
    std::vector<double> flat(n, 0.5);
    std::vector<std::uint8_t> y(n);
    ++constant.instances;
    for (Task t : kAllTasks) {
      for (NodeId v = 0; v < n; ++v) y[v] = gen.graph.labels().get(v, t) ? 1 : 0;
      const TaskReport r = pr_auc(t, flat, y);
      if (!r.pr_auc) continue;
      const double minority = std::min(r.prevalence, 1.0 - r.prevalence);
      const double err = std::abs(*r.pr_auc - minority);
      constant.metric = std::max(constant.metric, err);
      if (err > 1e-12) {
        ++constant.failures;
        break;
      }
      dg.add(*r.pr_auc);
    }
  }
  std::mt19937_64 rng(derive_seed(o.seed, 0x6170));
  for (std::size_t i = 0; i < 50 * count; ++i) {
    const std::size_t n = 1 + rng() % 20;
    std::vector<double> s(n);
    std::vector<std::uint8_t> y(n);
    for (std::size_t k = 0; k < n; ++k) {
      s[k] = static_cast<double>(rng() % 6) / 5.0;
      y[k] = static_cast<std::uint8_t>(rng() % 2);
    }
    y[rng() % n] = 1;
    const double a = average_precision(s, y);
    const double b = curve_average_precision(s, y);
    ++ap.instances;
    ap.metric = std::max(ap.metric, std::abs(a - b));
    if (std::abs(a - b) > 1e-12) ++ap.failures;
    dg.add(a);
  }
  for (CheckResult* c : {&labels, &ap, &constant}) {
    finish(*c);
    std::ostringstream s;
    s << c->instances - c->failures << "/" << c->instances << " instances";
    if (c != &labels) s << ", max abs error " << c->metric;
    c->detail = s.str();
    rep.checks.push_back(*c);
  }
  rep.digest = dg.value();
  return rep;
}

SuiteReport run_one(std::string_view name, const VerifyOptions& o);

SuiteReport determinism_suite(const VerifyOptions& o) {
  SuiteReport rep;
  rep.suite = "determinism";
  Digest dg;
  VerifyOptions serial = o;
  serial.schedule = Schedule::Serial;
  VerifyOptions threaded = o;
  threaded.schedule = Schedule::Threaded;
  for (std::string_view s : kSuites) {
    if (s == "determinism") continue;
    const SuiteReport a = run_one(s, serial);
    const SuiteReport b = run_one(s, threaded);
    CheckResult c = make_check(std::string(s) + " suite: serial and threaded digests match");
    c.instances = 1;
    c.failures = a.digest == b.digest && a.passed() == b.passed() ? 0 : 1;
    std::ostringstream d;
    d << std::hex << a.digest << " vs " << b.digest;
    c.detail = d.str();
    finish(c);
    dg.add(a.digest);
    rep.checks.push_back(c);
  }

  CheckResult train_check = make_check("training checkpoints, ledgers and metrics match");
  const Instance inst = make_instance(1, o.seed ^ 0x646574, 128);
  const Federation fed = Federation::make(inst.graph, inst.partition);
  const Partition vp = balanced_kway(inst.graph, inst.partition.num_clients(), 0.2, o.seed);
  const Federation vfed = Federation::make(inst.graph, vp);
  for (Regime r : {Regime::Local, Regime::FedAvg, Regime::SyncSgd}) {
    for (RemoteMode m : {RemoteMode::Placeholder, RemoteMode::Fresh, RemoteMode::Stale}) {
      TrainConfig cfg = tiny_config(inst.params, r, m, o.seed, Schedule::Serial);
      cfg.batch_size = 16;
      const TrainResult a = train(fed, cfg, &vfed);
      cfg.schedule = Schedule::Threaded;
      const TrainResult b = train(fed, cfg, &vfed);
      ++train_check.instances;
      bool same = a.params.size() == b.params.size() && a.ledger.to_csv() == b.ledger.to_csv() &&
                  a.history.size() == b.history.size();
      for (std::size_t i = 0; same && i < a.params.size(); ++i) {
        same = checkpoint_bytes(a.params[i]) == checkpoint_bytes(b.params[i]);
      }
      for (std::size_t e = 0; same && e < a.history.size(); ++e) {
        same = std::bit_cast<std::uint64_t>(a.history[e].train_loss) ==
                   std::bit_cast<std::uint64_t>(b.history[e].train_loss) &&
               a.history[e].val_macro == b.history[e].val_macro;
      }
      if (same) {
        const RemotePolicy pol = inference_policy(cfg);
        const Evaluation ea = evaluate(a.params, vfed, pol, Schedule::Serial);
        const Evaluation eb = evaluate(b.params, vfed, pol, Schedule::Threaded);
        same = ea.logits.data() == eb.logits.data() &&
               std::bit_cast<std::uint64_t>(ea.macro) == std::bit_cast<std::uint64_t>(eb.macro);
        dg.add(ea.macro);
      }
      if (!same) ++train_check.failures;
    }
  }
  finish(train_check);
  train_check.detail = std::to_string(train_check.instances - train_check.failures) + "/" +
                       std::to_string(train_check.instances) + " regime/policy pairs identical";
  rep.checks.push_back(train_check);
  rep.digest = dg.value();
  return rep;
}

SuiteReport run_one(std::string_view name, const VerifyOptions& o) {
  const auto start = std::chrono::steady_clock::now();
  SuiteReport r;
  if (name == "equivalence") {
    r = equivalence_suite(o);
  } else if (name == "gap") {
    r = gap_suite(o);
  } else if (name == "ledger") {
    r = ledger_suite(o);
  } else if (name == "gradient") {
    r = gradient_suite(o);
  } else if (name == "oracle") {
    r = oracle_suite(o);
  } else if (name == "determinism") {
    r = determinism_suite(o);
  } else {
    throw ValidationError("unknown verify suite '" + std::string(name) + "'");
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

}  // namespace

bool SuiteReport::passed() const {
  if (checks.empty()) return false;
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
}

std::span<const std::string_view> verify_suites() { return kSuites; }

SuiteReport run_suite(std::string_view name, const VerifyOptions& opts) { return run_one(name, opts); }

std::string suite_report_text(const SuiteReport& report) {
  std::ostringstream out;
  out.precision(3);
  out << (report.passed() ? "PASS" : "FAIL") << "  " << report.suite << " (" << std::fixed
      << report.seconds << " s)\n";
  for (const CheckResult& c : report.checks) {
    out << "  " << (c.passed ? "pass" : "FAIL") << "  " << c.name << ": " << c.detail << "\n";
  }
  return out.str();
}

std::string suite_reports_json(std::span<const SuiteReport> reports) {
  nlohmann::json root = nlohmann::json::array();
  for (const SuiteReport& r : reports) {
    nlohmann::json s;
    s["suite"] = r.suite;
    s["passed"] = r.passed();
    std::ostringstream d;
    d << std::hex << r.digest;
    s["digest"] = d.str();
    nlohmann::json checks = nlohmann::json::array();
    for (const CheckResult& c : r.checks) {
      checks.push_back({{"name", c.name},
                        {"passed", c.passed},
                        {"instances", c.instances},
                        {"failures", c.failures},
                        {"metric", c.metric},
                        {"detail", c.detail}});
    }
    s["checks"] = checks;
    root.push_back(s);
  }
  return root.dump(2) + "\n";
}

}  // namespace fedmp
