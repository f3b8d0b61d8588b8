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

#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "fedmp/engine.hpp"
#include "fedmp/errors.hpp"
#include "fedmp/gradcheck.hpp"
#include "test_graphs.hpp"

namespace fedmp {
namespace {

// Straight-line per-node evaluation of the layer definition, reading
// weights by index arithmetic on the flat vector. Shares no code with the
// engine beyond the parameter layout.
class NaiveModel {
 public:
  NaiveModel(const ModelParams& p, const Graph& g) : p_(p), g_(g), cfg_(p.config()) {}

  std::vector<std::vector<std::vector<double>>> forward() const {
    const std::size_t n = g_.num_nodes();
    std::vector<std::vector<std::vector<double>>> h(cfg_.layers + 1);
    const DenseSlot& emb = p_.layout().embed;
    for (std::size_t v = 0; v < n; ++v) {
      std::vector<double> x(g_.node_features().row(v).begin(), g_.node_features().row(v).end());
      h[0].push_back(dense(emb.w, emb.b, emb.in, emb.out, x));
    }
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
      for (std::size_t v = 0; v < n; ++v) h[l + 1].push_back(node_update(l, v, h[l]));
    }
    return h;
  }

  std::vector<double> logits(const std::vector<double>& hl) const {
    const DenseSlot& s = p_.layout().head;
    return dense(s.w, s.b, s.in, s.out, hl);
  }

 private:
  double w(std::size_t off) const { return p_.flat()[off]; }

  std::vector<double> dense(std::size_t wo, std::size_t bo, std::size_t in, std::size_t out,
                            const std::vector<double>& x, bool bias = true) const {
    std::vector<double> y(out);
    for (std::size_t i = 0; i < out; ++i) {
      double acc = 0.0;
      for (std::size_t k = 0; k < in; ++k) acc += w(wo + k * out + i) * x[k];
      y[i] = bias ? acc + w(bo + i) : acc;
    }
    return y;
  }

  std::vector<double> node_update(std::size_t l, std::size_t v,
                                  const std::vector<std::vector<double>>& h) const {
    const std::size_t d = cfg_.hidden;
    const LayerSlot& slot = p_.layout().layers[l];
    std::vector<double> x = h[v];
    std::vector<int> sides;
    if (cfg_.direction != Direction::Out) sides.push_back(0);
    if (cfg_.direction != Direction::In) sides.push_back(1);
    for (std::size_t s = 0; s < sides.size(); ++s) {
      const MessageSlot& ms = slot.msg[s];
      const auto nbrs = sides[s] == 0 ? g_.in_edges(static_cast<NodeId>(v))
                                      : g_.out_edges(static_cast<NodeId>(v));
      std::vector<double> sum(d, 0.0), mean(d, 0.0), mx(d, 0.0);
      const std::vector<double> a = dense(ms.w_self, ms.b1, d, d, h[v]);
      for (std::size_t j = 0; j < nbrs.size(); ++j) {
        const std::vector<double> b = dense(ms.w_nbr, 0, d, d, h[nbrs[j].node], false);
        std::vector<double> r(d);
        std::vector<double> e;
        if (cfg_.d_edge > 0) {
          const auto row = g_.edge_features().row(nbrs[j].edge);
          e = dense(ms.w_edge, 0, cfg_.d_edge, d, {row.begin(), row.end()}, false);
        }
        for (std::size_t i = 0; i < d; ++i) {
          double z = a[i] + b[i];
          if (cfg_.d_edge > 0) z = z + e[i];
          r[i] = std::max(z, 0.0);
        }
        const std::vector<double> m = dense(ms.out.w, ms.out.b, d, d, r);
        for (std::size_t i = 0; i < d; ++i) {
          sum[i] += m[i];
          if (j == 0 || m[i] > mx[i]) mx[i] = m[i];
        }
      }
      for (std::size_t i = 0; i < d && !nbrs.empty(); ++i) {
        mean[i] = sum[i] / static_cast<double>(nbrs.size());
      }
      x.insert(x.end(), sum.begin(), sum.end());
      x.insert(x.end(), mean.begin(), mean.end());
      x.insert(x.end(), mx.begin(), mx.end());
    }
    std::vector<double> q = dense(slot.upd_hidden.w, slot.upd_hidden.b, x.size(), d, x);
    for (double& t : q) t = std::max(t, 0.0);
    const std::vector<double> o = dense(slot.upd_out.w, slot.upd_out.b, d, d, q);
    std::vector<double> out(d);
    double ss = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      out[i] = h[v][i] + o[i];
      ss += out[i] * out[i];
    }
    const double n = std::sqrt(ss + 1e-12);
    for (double& t : out) t = t / n;
    return out;
  }

  const ModelParams& p_;
  const Graph& g_;
  ModelConfig cfg_;
};

ModelConfig small_config(std::size_t d_in, std::size_t d_edge, std::size_t layers,
                         Direction dir = Direction::Both, std::size_t hidden = 8) {
  ModelConfig c;
  c.d_in = d_in;
  c.d_edge = d_edge;
  c.hidden = hidden;
  c.layers = layers;
  c.direction = dir;
  return c;
}

// Glorot init leaves biases at zero; give them values so they are exercised.
ModelParams random_params(const ModelConfig& cfg, std::uint64_t seed) {
  ModelParams p = ModelParams::init(cfg, seed);
  std::mt19937_64 rng(seed * 7 + 1);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  for (const auto& b : p.layout().blocks(cfg)) {
    if (b.rows != 1) continue;
    for (std::size_t i = 0; i < b.cols; ++i) p.flat()[b.offset + i] = u(rng);
  }
  return p;
}

TEST(Embed, ZeroParamsGiveZeros) {
  const Graph g = testing::random_graph({.nodes = 6, .edges = 8, .d_in = 3}, 1);
  const ModelParams p = ModelParams::zeros(small_config(3, 0, 2));
  const Matrix h = embed(p, g.node_features());
  for (double x : h.data()) EXPECT_EQ(x, 0.0);
}

TEST(Embed, IdentityWeights) {
  const ModelConfig cfg = small_config(8, 0, 1);
  ModelParams p = ModelParams::zeros(cfg);
  const DenseSlot& s = p.layout().embed;
  for (std::size_t k = 0; k < 8; ++k) p.flat()[s.w + k * 8 + k] = 1.0;
  const Graph g = testing::random_graph({.nodes = 5, .edges = 4, .d_in = 8}, 2);
  EXPECT_EQ(embed(p, g.node_features()), g.node_features());
}

TEST(Embed, ConstantInputGivesIdenticalRows) {
  const Graph g = constant_features(testing::random_graph({.nodes = 9, .edges = 12}, 3), 1.0);
  const Matrix h = embed(ModelParams::init(small_config(1, 0, 1), 5), g.node_features());
  for (std::size_t v = 1; v < h.rows(); ++v) {
    EXPECT_TRUE(std::equal(h.row(v).begin(), h.row(v).end(), h.row(0).begin()));
  }
}

TEST(Embed, RejectsWidthMismatch) {
  const ModelParams p = ModelParams::init(small_config(2, 0, 1), 1);
  EXPECT_THROW(embed(p, Matrix(3, 4)), ValidationError);
}

TEST(LayerForward, IsolatedNodeUsesZeroAggregates) {
  const std::vector<std::pair<NodeId, NodeId>> e = {{0, 1}};
  const Graph g = constant_features(Graph::build(3, e), 1.0);
  const CentralForward f = forward_full(random_params(small_config(1, 0, 2), 4), g);
  const Matrix& x = f.tape.layers[0].x;
  for (std::size_t i = 8; i < x.cols(); ++i) EXPECT_EQ(x(2, i), 0.0);
}

TEST(LayerForward, SingleNeighborAggregatesAgree) {
  const std::vector<std::pair<NodeId, NodeId>> e = {{0, 1}};
  const Graph g = testing::random_graph({.nodes = 2, .edges = 0, .d_in = 2}, 1)
                      .with_node_features(Matrix(2, 2, 0.5));
  const Graph h = Graph::build(2, e, g.node_features());
  const CentralForward f = forward_full(random_params(small_config(2, 0, 1, Direction::In), 8), h);
  const Matrix& x = f.tape.layers[0].x;
  for (std::size_t i = 0; i < 8; ++i) {
    EXPECT_EQ(x(1, 8 + i), x(1, 16 + i));
    EXPECT_EQ(x(1, 8 + i), x(1, 24 + i));
  }
}

TEST(LayerForward, MatchesNaiveOracleExactly) {
  int cases = 0;
  for (std::uint64_t seed = 0; seed < 12; ++seed) {
    for (Direction dir : {Direction::Both, Direction::In, Direction::Out}) {
      const std::size_t de = seed % 2 == 0 ? 0 : 2;
      const Graph g = testing::random_graph({.nodes = 32, .edges = 90, .d_in = 3, .d_edge = de},
                                            seed);
      const ModelParams p = random_params(small_config(3, de, 3, dir), seed + 100);
      const CentralForward f = forward_full(p, g);
      const auto ref = NaiveModel(p, g).forward();
      for (std::size_t l = 0; l <= 3; ++l) {
        for (NodeId v = 0; v < 32; ++v) {
          const auto row = f.bank.row(l, v);
          ASSERT_TRUE(std::equal(row.begin(), row.end(), ref[l][v].begin()))
              << "layer " << l << " node " << v << " seed " << seed;
        }
      }
      for (NodeId v = 0; v < 32; ++v) {
        const auto expect = NaiveModel(p, g).logits(ref[3][v]);
        const auto got = f.logits.row(v);
        ASSERT_TRUE(std::equal(got.begin(), got.end(), expect.begin()));
      }
      ++cases;
    }
  }
  EXPECT_EQ(cases, 36);
}

TEST(LayerForward, UndefinedNeighborRowIsProtocolViolation) {
  const Graph g = testing::four_cycle();
  const std::vector<NodeId> owned = {0, 1};
  const LocalTopology topo = LocalTopology::make(g, owned);
  ASSERT_EQ(topo.num_remote(), 2u);
  const ModelParams p = ModelParams::init(small_config(1, 0, 2), 3);
  LayerBank bank(3, topo.num_local(), topo.num_owned(), 8);
  embed_into(p, Matrix(2, 1, 1.0), bank);
  EXPECT_THROW(layer_forward(p, 0, topo, bank, nullptr), ProtocolViolation);
}

TEST(LayerBank, RemoteWritesGuardOwnership) {
  LayerBank bank(2, 4, 2, 3);
  const std::vector<double> row(3, 1.0);
  EXPECT_THROW(bank.write_remote(0, 1, row, Provenance::Received), ProtocolViolation);
  EXPECT_THROW(bank.write_local(0, 3, row), ProtocolViolation);
  bank.write_remote(0, 3, row, Provenance::Received);
  EXPECT_EQ(bank.provenance(0, 3), Provenance::Received);
  EXPECT_EQ(bank.provenance(1, 3), Provenance::Undefined);
}

TEST(LocalTopology, OwnedFirstThenRemotes) {
  const Graph g = testing::four_cycle();
  const std::vector<NodeId> owned = {2, 1};
  const LocalTopology t = LocalTopology::make(g, owned);
  EXPECT_EQ(std::vector<NodeId>(t.owned_ids().begin(), t.owned_ids().end()),
            (std::vector<NodeId>{1, 2}));
  EXPECT_EQ(std::vector<NodeId>(t.remote_ids().begin(), t.remote_ids().end()),
            (std::vector<NodeId>{0, 3}));
  EXPECT_EQ(t.local_of(3), 3u);
  EXPECT_FALSE(LocalTopology::make(g, std::vector<NodeId>{0}).local_of(2).has_value());
}

TEST(ForwardFull, ZeroLayersIsHeadOfEmbedding) {
  const Graph g = testing::random_graph({.nodes = 10, .edges = 20, .d_in = 3}, 4);
  const ModelParams p = random_params(small_config(3, 0, 0), 9);
  const CentralForward f = forward_full(p, g);
  const Matrix h0 = embed(p, g.node_features());
  const NaiveModel naive(p, g);
  for (NodeId v = 0; v < 10; ++v) {
    const auto expect = naive.logits({h0.row(v).begin(), h0.row(v).end()});
    EXPECT_TRUE(std::equal(expect.begin(), expect.end(), f.logits.row(v).begin()));
  }
}

TEST(ForwardFull, FourCycleGolden) {
  const Graph g = testing::four_cycle();
  const ModelParams p = random_params(small_config(1, 0, 4), 2024);
  const CentralForward f = forward_full(p, g);
  // Every node of a directed cycle with constant input is symmetric.
  for (NodeId v = 1; v < 4; ++v) {
    EXPECT_TRUE(std::equal(f.logits.row(v).begin(), f.logits.row(v).end(),
                           f.logits.row(0).begin()));
  }
  // Frozen from a run cross-checked against the naive evaluator.
  const std::array<double, 7> golden = {-0.30165699971530768, 0.22529667650119561,
                                        0.094033604305016741, -0.066672159885529436,
                                        -0.12941617927679183, -0.18659135221457063,
                                        -0.47342282943338226};
  for (std::size_t t = 0; t < 7; ++t) EXPECT_EQ(f.logits(0, t), golden[t]) << t;
}

TEST(ForwardFull, RelabelingIsEquivariant) {
  std::mt19937_64 rng(5);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Graph g = testing::random_graph({.nodes = 20, .edges = 60, .d_in = 2, .d_edge = 1},
                                          seed);
    std::vector<NodeId> perm(20);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<std::pair<NodeId, NodeId>> e;
    for (const Edge& ed : g.edges()) e.emplace_back(perm[ed.src], perm[ed.dst]);
    Matrix x(20, 2);
    for (NodeId v = 0; v < 20; ++v) {
      std::copy(g.node_features().row(v).begin(), g.node_features().row(v).end(),
                x.row(perm[v]).begin());
    }
    const Graph h = Graph::build(20, e, x, g.edge_features());
    const ModelParams p = random_params(small_config(2, 1, 3), seed);
    const Matrix a = forward_full(p, g).logits;
    const Matrix b = forward_full(p, h).logits;
    for (NodeId v = 0; v < 20; ++v) {
      for (std::size_t t = 0; t < 7; ++t) EXPECT_NEAR(a(v, t), b(perm[v], t), 1e-12);
    }
  }
}

TEST(ForwardFull, BitwiseDeterministic) {
  const Graph g = testing::random_graph({.nodes = 30, .edges = 100, .d_in = 3, .d_edge = 2}, 6);
  const ModelParams p = random_params(small_config(3, 2, 4), 6);
  const auto nodes = testing::iota_nodes(30);
  const CentralForward a = forward_full(p, g);
  const CentralForward b = forward_full(p, g);
  EXPECT_EQ(a.logits, b.logits);
  const auto ga = backward(p, a.topology, a.bank, a.tape, g.node_features(), a.logits,
                           g.labels(), nodes, {});
  const auto gb = backward(p, b.topology, b.bank, b.tape, g.node_features(), b.logits,
                           g.labels(), nodes, {});
  EXPECT_EQ(ga.grad, gb.grad);
  EXPECT_EQ(ga.loss, gb.loss);
}

TEST(Backward, SaturatedCorrectLogitsHaveTinyGradient) {
  const Graph base = testing::random_graph({.nodes = 8, .edges = 20, .d_in = 2}, 3);
  LabelMatrix y(8);
  for (NodeId v = 0; v < 8; ++v) y.set_mask(v, 0b0101101);
  const Graph g = base.with_labels(y);
  const ModelConfig cfg = small_config(2, 0, 2);
  ModelParams p = ModelParams::zeros(cfg);
  const DenseSlot& head = p.layout().head;
  for (Task t : kAllTasks) p.flat()[head.b + task_index(t)] = y.get(0, t) ? 40.0 : -40.0;
  const CentralForward f = forward_full(p, g);
  const auto gb = backward(p, f.topology, f.bank, f.tape, g.node_features(), f.logits,
                           g.labels(), testing::iota_nodes(8), {});
  double norm = 0.0;
  for (double x : gb.grad) norm += x * x;
  EXPECT_LT(std::sqrt(norm), 1e-6);
  EXPECT_EQ(gb.grad.size(), p.size());
}

TEST(Backward, MatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const std::size_t de = seed % 2;
    const Graph g = testing::random_graph({.nodes = 12, .edges = 30, .d_in = 3, .d_edge = de},
                                          seed);
    const Direction dir = seed % 3 == 0 ? Direction::Both : (seed % 3 == 1 ? Direction::In
                                                                           : Direction::Out);
    const ModelParams p = random_params(small_config(3, de, 2, dir, 4), seed + 50);
    const auto nodes = testing::iota_nodes(12);
    const GradCheckResult r = check_gradient(p, g, nodes, {});
    EXPECT_TRUE(r.passed()) << "seed " << seed << " max rel " << r.max_rel_error << " at "
                            << r.worst_index << " failed " << r.failed;
    EXPECT_GT(r.checked, p.size() / 2);
  }
}

TEST(Backward, DuplicatedNodesScaleSumNotMean) {
  const Graph g = testing::random_graph({.nodes = 10, .edges = 25, .d_in = 2}, 8);
  const ModelParams p = random_params(small_config(2, 0, 2), 8);
  const CentralForward f = forward_full(p, g);
  const auto once = testing::iota_nodes(10);
  std::vector<std::uint32_t> twice = once;
  twice.insert(twice.end(), once.begin(), once.end());
  const LossConfig sum{LossConfig::Reduction::Sum};
  auto run = [&](std::span<const std::uint32_t> nodes, const LossConfig& c) {
    return backward(p, f.topology, f.bank, f.tape, g.node_features(), f.logits, g.labels(),
                    nodes, c);
  };
  const auto s1 = run(once, sum);
  const auto s2 = run(twice, sum);
  EXPECT_NEAR(s2.loss, 2.0 * s1.loss, 1e-12);
  for (std::size_t i = 0; i < s1.grad.size(); ++i) EXPECT_NEAR(s2.grad[i], 2.0 * s1.grad[i], 1e-12);
  const auto m1 = run(once, {});
  const auto m2 = run(twice, {});
  EXPECT_NEAR(m2.loss, m1.loss, 1e-12);
  EXPECT_EQ(m2.sample_count, 20u);
}

TEST(Backward, GroupsCutCrossGroupFlow) {
  // Loss on node 1 only; node 0 feeds node 1. Cutting 0 from 1 removes the
  // gradient contribution of node 0's own update path.
  const std::vector<std::pair<NodeId, NodeId>> e = {{0, 1}};
  const Graph g = testing::random_graph({.nodes = 2, .edges = 0, .d_in = 2}, 4);
  const Graph h = Graph::build(2, e, g.node_features(), std::nullopt, g.labels());
  const ModelParams p = random_params(small_config(2, 0, 2, Direction::In), 4);
  const CentralForward f = forward_full(p, h);
  const std::vector<std::uint32_t> nodes = {1};
  const std::vector<std::uint32_t> same = {0, 0};
  const std::vector<std::uint32_t> split = {0, 1};
  auto run = [&](std::span<const std::uint32_t> groups) {
    return backward(p, f.topology, f.bank, f.tape, h.node_features(), f.logits, h.labels(), nodes,
                    {}, groups);
  };
  EXPECT_EQ(run({}).grad, run(same).grad);
  const auto cut = run(split).grad;
  const auto full = run({}).grad;
  // The first layer's update weights only see node 0 through the cut path.
  const DenseSlot& upd0 = p.layout().layers[0].upd_out;
  bool differs = false;
  for (std::size_t i = 0; i < upd0.in * upd0.out; ++i) differs |= cut[upd0.w + i] != full[upd0.w + i];
  EXPECT_TRUE(differs);
}

TEST(ModelParams, FlatRoundTripAndSize) {
  const ModelConfig cfg = small_config(3, 2, 3);
  const ModelParams p = ModelParams::init(cfg, 1);
  const auto& lay = p.layout();
  std::size_t total = 0;
  for (const auto& b : lay.blocks(cfg)) total += b.rows * b.cols;
  EXPECT_EQ(total, p.size());
  std::vector<double> flat(p.flat().begin(), p.flat().end());
  EXPECT_EQ(ModelParams::from_flat(cfg, flat), p);
  EXPECT_THROW(ModelParams::from_flat(cfg, std::vector<double>(3)), ValidationError);
}

TEST(ModelParams, EqualFlatGivesEqualForward) {
  const ModelConfig cfg = small_config(2, 0, 2);
  const ModelParams a = random_params(cfg, 3);
  const ModelParams b = ModelParams::from_flat(cfg, {a.flat().begin(), a.flat().end()});
  const Graph g = testing::random_graph({.nodes = 12, .edges = 30, .d_in = 2}, 3);
  EXPECT_EQ(forward_full(a, g).logits, forward_full(b, g).logits);
}

TEST(ModelParams, InitIsSeededAndBounded) {
  const ModelConfig cfg = small_config(3, 0, 2);
  EXPECT_EQ(ModelParams::init(cfg, 4), ModelParams::init(cfg, 4));
  EXPECT_NE(ModelParams::init(cfg, 4), ModelParams::init(cfg, 5));
  const ModelParams p = ModelParams::init(cfg, 4);
  const DenseSlot& s = p.layout().embed;
  const double a = std::sqrt(6.0 / (3.0 + 8.0));
  for (std::size_t i = 0; i < s.in * s.out; ++i) EXPECT_LE(std::abs(p.flat()[s.w + i]), a);
  for (std::size_t i = 0; i < s.out; ++i) EXPECT_EQ(p.flat()[s.b + i], 0.0);
}

TEST(ModelParams, WeightedAverageMatchesFieldwise) {
  const ModelConfig cfg = small_config(2, 1, 2);
  const std::vector<ModelParams> ps = {random_params(cfg, 1), random_params(cfg, 2)};
  const std::vector<double> w = {0.25, 0.75};
  const ModelParams avg = weighted_average(ps, w);
  for (const auto& b : avg.layout().blocks(cfg)) {
    for (std::size_t i = 0; i < b.rows * b.cols; ++i) {
      const std::size_t at = b.offset + i;
      EXPECT_EQ(avg.flat()[at], 0.25 * ps[0].flat()[at] + 0.75 * ps[1].flat()[at]) << b.name;
    }
  }
}

TEST(Checkpoint, RoundTripIsExact) {
  const ModelConfig cfg = small_config(3, 2, 2, Direction::Out);
  const ModelParams p = random_params(cfg, 12);
  const std::string bytes = checkpoint_bytes(p);
  EXPECT_EQ(checkpoint_from_bytes(bytes), p);
  EXPECT_EQ(bytes.size() - bytes.find('\n') - 1, 8 * p.size());
  EXPECT_THROW(checkpoint_from_bytes(bytes.substr(0, bytes.size() - 3)), ParseError);
  EXPECT_THROW(checkpoint_from_bytes("no manifest"), ParseError);
}

TEST(Sgd, ZeroLearningRateLeavesParams) {
  const ModelConfig cfg = small_config(2, 0, 1);
  ModelParams p = random_params(cfg, 1);
  const ModelParams before = p;
  sgd_step(p, std::vector<double>(p.size(), 3.0), 0.0);
  EXPECT_EQ(p, before);
}

}  // namespace
}  // namespace fedmp
