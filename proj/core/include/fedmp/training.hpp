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
#include <optional>
#include <string_view>
#include <vector>

#include "fedmp/engine.hpp"
#include "fedmp/exchange.hpp"
#include "fedmp/metrics.hpp"
#include "fedmp/model.hpp"

namespace fedmp {

enum class Regime : std::uint8_t { Centralized, Local, FedAvg, SyncSgd };

std::string_view regime_name(Regime r);
Regime regime_from_name(std::string_view name);

struct TrainConfig {
  Regime regime = Regime::FedAvg;
  RemotePolicy policy;  // ignored by the centralized regime
  double learning_rate = 0.01;
  std::size_t epochs = 100;       // communication rounds under FedAvg
  std::size_t local_epochs = 1;   // FedAvg only
  std::size_t batch_size = 128;   // 0 trains on the full owned set each step
  std::size_t patience = 10;      // 0 disables early stopping
  std::uint64_t seed = 0;
  Schedule schedule = Schedule::Serial;
  LossConfig loss;
  ModelConfig model;

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  std::size_t steps = 0;
  double train_loss = 0.0;  // batch-size weighted mean over the epoch's steps
  std::optional<double> val_macro;
};

// Where the shared-parameter assumption held. Checks happen before every
// forward pass; `required` counts the ones that must hold for the regime.
struct A2Log {
  std::size_t checks = 0;
  std::size_t required = 0;
  std::size_t held = 0;
  std::optional<std::size_t> first_divergence;  // step index
};

struct TrainResult {
  // One entry for shared-parameter regimes, one per client under Local.
  std::vector<ModelParams> params;
  std::vector<EpochRecord> history;
  ExchangeLedger ledger;
  A2Log a2;
  std::size_t steps_per_epoch = 0;
  std::size_t total_steps = 0;
  std::size_t best_epoch = 0;
  bool stopped_early = false;
  std::size_t masked_reads = 0;
};

// Shuffled chunks of [0, count) of at most `size` elements; size 0 or
// size >= count yields a single batch in ascending order.
std::vector<std::vector<std::uint32_t>> node_batches(std::size_t count, std::size_t size,
                                                     std::uint64_t seed);

// Policy used when scoring a trained model: stale runs refresh the cache
// right before inference, which equals a fresh pass.
RemotePolicy inference_policy(const TrainConfig& cfg);

struct Evaluation {
  std::vector<TaskReport> tasks;
  double macro = 0.0;
  Matrix logits;  // [num_nodes x 7], rows by global node id
};

// Distributed inference over `fed`; labels come from the clients' owned views.
Evaluation evaluate(std::span<const ModelParams> params, const Federation& fed,
                    const RemotePolicy& policy, Schedule schedule = Schedule::Serial);

// Observer invoked after every optimizer step with the per-client parameters.
using StepHook = std::function<void(std::size_t step, std::span<const ModelParams> params)>;

struct TrainHooks {
  StepHook after_step;
  // Per-client gradients of the step, before aggregation.
  std::function<void(std::size_t step, std::span<const GradientBundle>)> gradients;
};

// Trains on `fed`, optionally early-stopping on `validation` (which must have
// the same number of clients under the Local regime).
TrainResult train(const Federation& fed, const TrainConfig& cfg,
                  const Federation* validation = nullptr, const TrainHooks& hooks = {});

TrainResult train_centralized(const Graph& g, TrainConfig cfg, const Graph* validation = nullptr);
TrainResult train_local(const Federation& fed, TrainConfig cfg, const Federation* validation = nullptr);
TrainResult train_fedavg(const Federation& fed, TrainConfig cfg, const Federation* validation = nullptr);
TrainResult train_syncsgd(const Federation& fed, TrainConfig cfg, const Federation* validation = nullptr);

// K_c / K with K_c the owned node count of client c.
std::vector<double> client_weights(const Federation& fed);

}  // namespace fedmp
