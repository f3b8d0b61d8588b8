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

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "fedmp/errors.hpp"
#include "fedmp/partition.hpp"
#include "fedmp/training.hpp"
#include "test_graphs.hpp"

namespace fedmp {
namespace {

using testing::random_graph;
using testing::RandomGraphSpec;

ModelConfig small_model(const Graph& g, std::size_t layers = 2, std::size_t hidden = 6) {
  ModelConfig m;
  m.d_in = g.feature_dim();
  m.d_edge = g.edge_feature_dim();
  m.hidden = hidden;
  m.layers = layers;
  return m;
}

TrainConfig small_config(const Graph& g, Regime r, RemoteMode mode) {
  TrainConfig cfg;
  cfg.regime = r;
  cfg.policy.mode = mode;
  cfg.learning_rate = 0.05;
  cfg.epochs = 3;
  cfg.batch_size = 5;
  cfg.patience = 0;
  cfg.seed = 17;
  cfg.model = small_model(g);
  return cfg;
}

Partition alternating(const Graph& g, std::size_t k) {
  std::vector<ClientId> owner(g.num_nodes());
  for (NodeId v = 0; v < g.num_nodes(); ++v) owner[v] = static_cast<ClientId>(v % k);
  return Partition::from_owner(g, k, std::move(owner));
}

void expect_close(std::span<const double> a, std::span<const double> b, double tol) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_NEAR(a[i], b[i], tol * std::max(1.0, std::abs(b[i]))) << "coordinate " << i;
  }
}

TEST(NodeBatches, CoverOwnedNodesOnce) {
  for (std::size_t count : {0u, 1u, 7u, 64u, 100u}) {
    for (std::size_t size : {1u, 3u, 10u, 128u}) {
      const auto batches = node_batches(count, size, 99);
      std::vector<std::uint32_t> all;
      for (const auto& b : batches) {
        EXPECT_LE(b.size(), size);
        EXPECT_FALSE(b.empty());
        all.insert(all.end(), b.begin(), b.end());
      }
      std::sort(all.begin(), all.end());
      EXPECT_EQ(all, testing::iota_nodes(count));
    }
  }
}

TEST(NodeBatches, LargeSizeGivesOneBatch) {
  EXPECT_EQ(node_batches(10, 10, 1).size(), 1u);
  EXPECT_EQ(node_batches(10, 0, 1).size(), 1u);
  EXPECT_EQ(node_batches(10, 3, 1).size(), 4u);
  EXPECT_EQ(node_batches(10, 3, 1), node_batches(10, 3, 1));
  EXPECT_NE(node_batches(50, 5, 1), node_batches(50, 5, 2));
}

TEST(Centralized, ZeroLearningRateKeepsInit) {
  const Graph g = random_graph({.nodes = 20, .edges = 50}, 1);
  TrainConfig cfg = small_config(g, Regime::Centralized, RemoteMode::Fresh);
  cfg.learning_rate = 0.0;
  const TrainResult r = train_centralized(g, cfg);
  EXPECT_EQ(r.params.at(0), ModelParams::init(cfg.model, cfg.seed));
  EXPECT_EQ(r.history.size(), 3u);
}

TEST(Centralized, SingleNodeLossNonIncreasing) {
  Matrix x(1, 2);
  x(0, 0) = 0.5;
  x(0, 1) = -1.0;
  LabelMatrix y(1);
  y.set(0, Task::C2);
  const std::vector<std::pair<NodeId, NodeId>> none;
  const Graph g = Graph::build(1, none, x, std::nullopt, y);
  TrainConfig cfg = small_config(g, Regime::Centralized, RemoteMode::Fresh);
  cfg.epochs = 10;
  cfg.learning_rate = 0.05;
  const TrainResult r = train_centralized(g, cfg);
  ASSERT_EQ(r.history.size(), 10u);
  for (std::size_t i = 1; i < r.history.size(); ++i) {
    EXPECT_LE(r.history[i].train_loss, r.history[i - 1].train_loss);
  }
}

TEST(Centralized, SameSeedSameCheckpoint) {
  const Graph g = random_graph({.nodes = 24, .edges = 60}, 2);
  const TrainConfig cfg = small_config(g, Regime::Centralized, RemoteMode::Fresh);
  EXPECT_EQ(checkpoint_bytes(train_centralized(g, cfg).params[0]),
            checkpoint_bytes(train_centralized(g, cfg).params[0]));
}

TEST(Centralized, DivergenceIsReported) {
  const Graph g = random_graph({.nodes = 12, .edges = 30}, 3);
  TrainConfig cfg = small_config(g, Regime::Centralized, RemoteMode::Fresh);
  cfg.learning_rate = 1e250;
  cfg.epochs = 20;
  EXPECT_THROW(train_centralized(g, cfg), DivergenceError);
}

TEST(Centralized, RejectsMismatchedModel) {
  const Graph g = random_graph({.nodes = 12, .edges = 30}, 3);
  TrainConfig cfg = small_config(g, Regime::Centralized, RemoteMode::Fresh);
  cfg.model.d_in += 1;
  EXPECT_THROW(train_centralized(g, cfg), ValidationError);
  cfg = small_config(g, Regime::FedAvg, RemoteMode::Fresh);
  cfg.local_epochs = 0;
  EXPECT_THROW(cfg.validate(), ValidationError);
}

TEST(Centralized, EarlyStopsOnFlatValidation) {
  const Graph g = random_graph({.nodes = 16, .edges = 40}, 4);
  const Graph v = random_graph({.nodes = 16, .edges = 40}, 5);
  TrainConfig cfg = small_config(g, Regime::Centralized, RemoteMode::Fresh);
  cfg.learning_rate = 0.0;
  cfg.epochs = 10;
  cfg.patience = 2;
  const TrainResult r = train_centralized(g, cfg, &v);
  EXPECT_TRUE(r.stopped_early);
  EXPECT_EQ(r.history.size(), 3u);
  EXPECT_EQ(r.best_epoch, 0u);
  ASSERT_TRUE(r.history[0].val_macro.has_value());
}

TEST(Local, SingleClientMatchesCentralized) {
  const Graph g = random_graph({.nodes = 24, .edges = 60}, 6);
  const Partition p = Partition::from_owner(g, 1, std::vector<ClientId>(24, 0));
  const Federation fed = Federation::make(g, p);
  const TrainConfig cfg = small_config(g, Regime::Local, RemoteMode::Placeholder);
  const TrainResult local = train_local(fed, cfg);
  const TrainResult central = train_centralized(g, cfg);
  EXPECT_EQ(local.params.at(0), central.params.at(0));
  for (Regime r : {Regime::FedAvg, Regime::SyncSgd}) {
    TrainConfig c = cfg;
    c.regime = r;
    EXPECT_EQ(train(fed, c).params.at(0), central.params.at(0)) << regime_name(r);
  }
}

TEST(Local, PlaceholderSendsNothing) {
  const Graph g = random_graph({.nodes = 30, .edges = 80}, 7);
  const Partition p = alternating(g, 3);
  const Federation fed = Federation::make(g, p);
  for (Regime r : {Regime::Local, Regime::FedAvg, Regime::SyncSgd}) {
    const TrainResult res = train(fed, small_config(g, r, RemoteMode::Placeholder));
    EXPECT_EQ(res.ledger.total_bytes(), 0u) << regime_name(r);
    EXPECT_TRUE(res.ledger.rows().empty());
  }
}

TEST(Local, ExchangeWithoutSharedParamsLeavesGap) {
  const Graph g = random_graph({.nodes = 30, .edges = 90}, 8);
  const Partition p = alternating(g, 3);
  const Federation fed = Federation::make(g, p);
  TrainConfig cfg = small_config(g, Regime::Local, RemoteMode::Fresh);
  cfg.epochs = 1;
  const TrainResult res = train_local(fed, cfg);
  ASSERT_EQ(res.params.size(), 3u);
  ASSERT_TRUE(res.a2.first_divergence.has_value());
  EXPECT_EQ(*res.a2.first_divergence, 1u);
  EXPECT_EQ(res.a2.required, 0u);

  DistributedOptions opts;
  const auto fw = distributed_forward(res.params, fed, opts);
  const CentralForward central = forward_full(res.params[0], g);
  double worst = 0.0;
  for (const NodeGap& gap : measure_gap(central.bank, fw, fed, cfg.model.layers)) {
    worst = std::max(worst, gap.max_abs);
  }
  EXPECT_GT(worst, 0.0);
}

TEST(SyncSgd, ClientsStayBitwiseEqual) {
  const Graph g = random_graph({.nodes = 30, .edges = 80}, 9);
  const Partition p = alternating(g, 3);
  const Federation fed = Federation::make(g, p);
  TrainHooks hooks;
  std::size_t steps = 0;
  hooks.after_step = [&](std::size_t, std::span<const ModelParams> theta) {
    ++steps;
    for (const auto& t : theta) ASSERT_EQ(t, theta[0]);
  };
  const TrainResult res = train(fed, small_config(g, Regime::SyncSgd, RemoteMode::Fresh), nullptr, hooks);
  EXPECT_EQ(steps, res.total_steps);
  EXPECT_EQ(res.a2.held, res.a2.checks);
  EXPECT_EQ(res.a2.required, res.a2.checks);
}

TEST(FedAvg, EqualsSyncSgdForOneFullBatchRound) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Graph g = random_graph({.nodes = 40, .edges = 120, .d_in = 3, .d_edge = 2}, 20 + seed);
    const Partition p = alternating(g, seed % 2 == 0 ? 2 : 4);
    const Federation fed = Federation::make(g, p);
    TrainConfig cfg = small_config(g, Regime::FedAvg, RemoteMode::Fresh);
    cfg.epochs = 1;
    cfg.batch_size = 0;
    cfg.seed = seed;
    const TrainResult fa = train_fedavg(fed, cfg);
    const TrainResult ss = train_syncsgd(fed, cfg);
    expect_close(fa.params[0].flat(), ss.params[0].flat(), 1e-12);
  }
}

TEST(FedAvg, IdenticalClientsFollowCentralized) {
  const Graph one = random_graph({.nodes = 10, .edges = 25, .d_in = 2}, 30);
  for (std::size_t copies : {2u, 3u, 4u}) {
    std::vector<std::pair<NodeId, NodeId>> edges;
    Matrix x(10 * copies, 2);
    LabelMatrix y(10 * copies);
    std::vector<ClientId> owner(10 * copies);
    for (std::size_t c = 0; c < copies; ++c) {
      const auto off = static_cast<NodeId>(10 * c);
      for (const Edge& e : one.edges()) edges.emplace_back(e.src + off, e.dst + off);
      for (NodeId v = 0; v < 10; ++v) {
        std::copy(one.node_features().row(v).begin(), one.node_features().row(v).end(),
                  x.row(v + off).begin());
        y.set_mask(v + off, one.labels().mask(v));
        owner[v + off] = static_cast<ClientId>(c);
      }
    }
    const Graph g = Graph::build(10 * copies, edges, x, std::nullopt, y);
    const Partition p = Partition::from_owner(g, copies, owner);
    const Federation fed = Federation::make(g, p);
    TrainConfig cfg = small_config(one, Regime::FedAvg, RemoteMode::Fresh);
    cfg.batch_size = 0;
    cfg.local_epochs = 2;
    const TrainResult fa = train_fedavg(fed, cfg);
    TrainConfig cc = cfg;
    cc.epochs = cfg.epochs * cfg.local_epochs;
    const TrainResult ce = train_centralized(one, cc);
    expect_close(fa.params[0].flat(), ce.params[0].flat(), 1e-12);
  }
}

TEST(FedAvg, WeightsAreOwnedCounts) {
  const Graph g = random_graph({.nodes = 37, .edges = 80}, 31);
  const Partition p = balanced_kway(g, 5, 0.3, 1);
  const Federation fed = Federation::make(g, p);
  const auto w = client_weights(fed);
  double sum = 0.0;
  std::size_t owned = 0;
  for (std::size_t c = 0; c < w.size(); ++c) {
    sum += w[c];
    owned += fed.clients[c].topology.num_owned();
    EXPECT_DOUBLE_EQ(w[c], static_cast<double>(fed.clients[c].topology.num_owned()) / 37.0);
  }
  EXPECT_EQ(owned, 37u);
  EXPECT_NEAR(sum, 1.0, 1e-15);
}

TEST(FedAvg, ParametersAgreeAtRoundStart) {
  const Graph g = random_graph({.nodes = 30, .edges = 80}, 32);
  const Federation fed = Federation::make(g, alternating(g, 3));
  TrainConfig cfg = small_config(g, Regime::FedAvg, RemoteMode::Fresh);
  cfg.local_epochs = 2;
  const TrainResult res = train_fedavg(fed, cfg);
  EXPECT_EQ(res.a2.required, cfg.epochs);
  EXPECT_LT(res.a2.held, res.a2.checks);
  EXPECT_TRUE(res.a2.first_divergence.has_value());
}

// Central gradient of the mean loss over every node, with flow into a
// neighbor cut whenever `groups` differ.
std::vector<double> central_gradient(const ModelParams& params, const Graph& g,
                                     std::span<const std::uint32_t> groups) {
  const CentralForward f = forward_full(params, g);
  const auto nodes = testing::iota_nodes(g.num_nodes());
  return backward(params, f.topology, f.bank, f.tape, g.node_features(), f.logits, g.labels(),
                  nodes, LossConfig{}, groups)
      .grad;
}

TEST(SyncSgd, FullBatchGradientMatchesStopGradientCentral) {
  for (std::size_t layers : {1u, 2u, 3u}) {
    const Graph g = random_graph({.nodes = 36, .edges = 100, .d_in = 3, .d_edge = 2}, 40 + layers);
    const Partition p = balanced_kway(g, 3, 0.1, layers);
    const Federation fed = Federation::make(g, p);
    TrainConfig cfg = small_config(g, Regime::SyncSgd, RemoteMode::Fresh);
    cfg.model.layers = layers;
    cfg.epochs = 1;
    cfg.batch_size = 0;
    std::vector<double> aggregate;
    TrainHooks hooks;
    hooks.gradients = [&](std::size_t, std::span<const GradientBundle> grads) {
      aggregate.assign(grads[0].grad.size(), 0.0);
      for (const auto& gb : grads) {
        const double w = static_cast<double>(gb.sample_count) / 36.0;
        for (std::size_t i = 0; i < aggregate.size(); ++i) aggregate[i] += w * gb.grad[i];
      }
    };
    train(fed, cfg, nullptr, hooks);

    const ModelParams init = ModelParams::init(cfg.model, cfg.seed);
    std::vector<std::uint32_t> groups(p.owners().begin(), p.owners().end());
    expect_close(aggregate, central_gradient(init, g, groups), 1e-12);

    if (layers == 1) {
      // Only the input embedding feeds remote rows at depth one.
      const auto full = central_gradient(init, g, {});
      const DenseSlot& emb = init.layout().embed;
      const std::size_t embed_end = emb.b + emb.out;
      ASSERT_EQ(emb.w, 0u);
      expect_close(std::span<const double>(aggregate).subspan(embed_end),
                   std::span<const double>(full).subspan(embed_end), 1e-12);
    }
  }
}

TEST(Batches, FreshForwardMatchesCentralRowsForBatch) {
  const Graph g = random_graph({.nodes = 40, .edges = 110}, 50);
  const Partition p = louvain(g, 4, 2);
  const Federation fed = Federation::make(g, p);
  const ModelParams params = ModelParams::init(small_model(g, 3), 5);
  const CentralForward central = forward_full(params, g);
  const std::vector<ModelParams> shared = {params};
  const auto fw = distributed_forward(shared, fed, DistributedOptions{});
  for (std::size_t c = 0; c < fed.num_clients(); ++c) {
    for (const auto& batch : node_batches(fed.clients[c].topology.num_owned(), 3, c)) {
      for (std::uint32_t i : batch) {
        const NodeId v = fed.clients[c].topology.global(i);
        for (std::size_t t = 0; t < kNumTasks; ++t) {
          EXPECT_EQ(fw[c].logits(i, t), central.logits(v, t));
        }
      }
    }
  }
}

TEST(Regimes, NeverReadRemoteFeatures) {
  const Graph g = random_graph({.nodes = 30, .edges = 80}, 60);
  const Federation fed = Federation::make(g, alternating(g, 3));
  for (Regime r : {Regime::Local, Regime::FedAvg, Regime::SyncSgd}) {
    for (RemoteMode m : {RemoteMode::Fresh, RemoteMode::Placeholder, RemoteMode::Stale}) {
      TrainConfig cfg = small_config(g, r, m);
      cfg.epochs = 1;
      EXPECT_EQ(train(fed, cfg).masked_reads, 0u);
    }
  }
}

TEST(Stale, ExchangesOncePerEpoch) {
  const Graph g = random_graph({.nodes = 30, .edges = 80}, 61);
  const Partition p = alternating(g, 3);
  const Federation fed = Federation::make(g, p);
  TrainConfig cfg = small_config(g, Regime::FedAvg, RemoteMode::Stale);
  cfg.epochs = 4;
  const TrainResult res = train_fedavg(fed, cfg);
  EXPECT_GT(res.steps_per_epoch, 1u);
  EXPECT_EQ(res.ledger.total_embeddings(),
            cfg.epochs * cfg.model.layers * fed.plan.embeddings_per_layer());

  cfg.policy.mode = RemoteMode::Fresh;
  const TrainResult fresh = train_fedavg(fed, cfg);
  EXPECT_EQ(fresh.ledger.total_embeddings(),
            fresh.total_steps * cfg.model.layers * fed.plan.embeddings_per_layer());
  EXPECT_NE(fresh.params[0], res.params[0]);
}

TEST(Stale, FrozenParametersMatchFresh) {
  const Graph g = random_graph({.nodes = 30, .edges = 80}, 62);
  const Federation fed = Federation::make(g, alternating(g, 3));
  TrainConfig cfg = small_config(g, Regime::SyncSgd, RemoteMode::Stale);
  cfg.learning_rate = 0.0;
  cfg.epochs = 2;
  std::vector<double> first_epoch, second_epoch;
  TrainHooks hooks;
  const std::size_t steps = node_batches(10, cfg.batch_size, 0).size();
  hooks.gradients = [&](std::size_t step, std::span<const GradientBundle> grads) {
    auto& dst = step < steps ? first_epoch : second_epoch;
    for (const auto& gb : grads) dst.insert(dst.end(), gb.grad.begin(), gb.grad.end());
  };
  train(fed, cfg, nullptr, hooks);

  TrainConfig fresh_cfg = cfg;
  fresh_cfg.policy.mode = RemoteMode::Fresh;
  std::vector<double> fresh_second;
  hooks.gradients = [&](std::size_t step, std::span<const GradientBundle> grads) {
    if (step < steps) return;
    for (const auto& gb : grads) fresh_second.insert(fresh_second.end(), gb.grad.begin(), gb.grad.end());
  };
  train(fed, fresh_cfg, nullptr, hooks);
  EXPECT_EQ(second_epoch, fresh_second);
  EXPECT_NE(first_epoch, fresh_second);
}

TEST(Schedules, ThreadedMatchesSerial) {
  const Graph g = random_graph({.nodes = 40, .edges = 110, .d_in = 3, .d_edge = 1}, 70);
  const Federation fed = Federation::make(g, balanced_kway(g, 4, 0.1, 3));
  const Graph vg = random_graph({.nodes = 40, .edges = 110, .d_in = 3, .d_edge = 1}, 71);
  const Federation vfed = Federation::make(vg, balanced_kway(vg, 4, 0.1, 3));
  for (Regime r : {Regime::Local, Regime::FedAvg, Regime::SyncSgd}) {
    for (RemoteMode m : {RemoteMode::Fresh, RemoteMode::Stale}) {
      TrainConfig cfg = small_config(g, r, m);
      cfg.model = small_model(g);
      cfg.patience = 2;
      const TrainResult a = train(fed, cfg, &vfed);
      cfg.schedule = Schedule::Threaded;
      const TrainResult b = train(fed, cfg, &vfed);
      ASSERT_EQ(a.params.size(), b.params.size());
      for (std::size_t i = 0; i < a.params.size(); ++i) {
        EXPECT_EQ(checkpoint_bytes(a.params[i]), checkpoint_bytes(b.params[i]));
      }
      EXPECT_EQ(a.ledger.to_csv(), b.ledger.to_csv());
      for (std::size_t e = 0; e < a.history.size(); ++e) {
        EXPECT_EQ(a.history[e].train_loss, b.history[e].train_loss);
        EXPECT_EQ(a.history[e].val_macro, b.history[e].val_macro);
      }
    }
  }
}

TEST(Evaluate, ConstantLogitsGivePrevalence) {
  const Graph g = random_graph({.nodes = 50, .edges = 120}, 80);
  const Federation fed = Federation::make(g, alternating(g, 2));
  const ModelParams zeros = ModelParams::zeros(small_model(g));
  const std::vector<ModelParams> shared = {zeros};
  const Evaluation ev = evaluate(shared, fed, RemotePolicy{});
  ASSERT_EQ(ev.tasks.size(), kNumTasks);
  for (const TaskReport& t : ev.tasks) {
    ASSERT_TRUE(t.pr_auc.has_value());
    const double minority = std::min(t.prevalence, 1.0 - t.prevalence);
    EXPECT_NEAR(*t.pr_auc, minority, 1e-12);
    EXPECT_EQ(t.positives, g.labels().positives(t.task));
  }
}

TEST(RegimeNames, RoundTrip) {
  for (Regime r : {Regime::Centralized, Regime::Local, Regime::FedAvg, Regime::SyncSgd}) {
    EXPECT_EQ(regime_from_name(regime_name(r)), r);
  }
  EXPECT_THROW(regime_from_name("gossip"), ValidationError);
}

}  // namespace
}  // namespace fedmp
