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
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fedmp/synthgen.hpp"
#include "fedmp/training.hpp"

namespace fedmp {

enum class PartitionMethod : std::uint8_t { Louvain, Kway };

std::string_view partition_method_name(PartitionMethod m);
PartitionMethod partition_method_from_name(std::string_view name);

// A split is either read from an edge-list file or generated with the
// reference pattern mix, seeded by the run seed.
struct GraphSource {
  std::optional<std::filesystem::path> path;
  std::size_t nodes = 1024;
  double avg_degree = 6.0;
};

struct PartitionSpec {
  PartitionMethod method = PartitionMethod::Louvain;
  std::size_t clients = 8;
  double imbalance = 0.03;
  // Optional pre-computed assignments per split (train, val, test).
  std::array<std::optional<std::filesystem::path>, 3> files;
};

// A regime paired with a remote policy, e.g. "fedavg+le" or "fedavg+stale".
struct Variant {
  Regime regime = Regime::FedAvg;
  RemoteMode mode = RemoteMode::Placeholder;

  std::string name() const;
  friend bool operator==(const Variant&, const Variant&) = default;
};

Variant variant_from_name(std::string_view name);

struct ExperimentSpec {
  std::array<GraphSource, 3> graphs;  // train, val, test
  PartitionSpec partition;
  // Regime and policy come from each variant. Experiments default to a
  // deeper, wider model than the unit-test configuration.
  TrainConfig train = [] {
    TrainConfig t;
    t.model.hidden = 32;
    t.model.layers = 6;
    return t;
  }();
  std::vector<Variant> variants = {Variant{}};
  std::vector<std::uint64_t> seeds = {0};

  void validate() const;
};

ExperimentSpec parse_experiment_spec(std::string_view json_text);
std::string experiment_spec_json(const ExperimentSpec& spec);

struct RunRecord {
  Variant variant;
  std::uint64_t seed = 0;
  std::size_t clients = 0;
  std::vector<TaskReport> tasks;
  double macro = 0.0;
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;
  std::size_t steps_per_epoch = 0;
  std::size_t embeddings_sent = 0;
  std::size_t bytes_sent = 0;
  double final_train_loss = 0.0;
  std::optional<CommReport> comm;
  // Best parameters (one per client for Local) and the exchange ledger.
  std::vector<ModelParams> params;
  std::string ledger_csv;
};

struct VariantSummary {
  Variant variant;
  double mean = 0.0;
  double stddev = 0.0;  // population standard deviation over seeds
  // Mean over the seeds where the task is defined; empty if it never is.
  std::array<std::optional<double>, kNumTasks> task_mean{};
  std::optional<double> delta_local;
  std::optional<double> delta_fedavg;
};

struct ExperimentResult {
  std::vector<RunRecord> runs;
  std::vector<VariantSummary> summary;
};

using ProgressFn = std::function<void(const RunRecord&)>;

ExperimentResult run_experiment(const ExperimentSpec& spec, const ProgressFn& progress = {});

// Mean and deltas per variant; Local and FedAvg references use the
// placeholder variants of those regimes.
std::vector<VariantSummary> summarize(std::span<const RunRecord> runs);

std::string result_json(const ExperimentSpec& spec, const ExperimentResult& result);
// One row per (variant, seed) with per-task PR-AUC and the macro.
std::string result_csv(const ExperimentResult& result);

struct SweepRow {
  std::size_t clients = 0;
  VariantSummary summary;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::optional<VariantSummary> centralized;
};

// Runs the experiment once per client count; a centralized variant is run
// once and reported separately.
SweepResult run_sweep(const ExperimentSpec& spec, std::span<const std::size_t> client_counts,
                      const ProgressFn& progress = {});
std::string sweep_json(const ExperimentSpec& spec, const SweepResult& sweep);
std::string sweep_csv(const SweepResult& sweep);

// Graphs without node features get a constant scalar feature so that
// prediction rests on topology alone.
Graph with_default_features(const Graph& g);

// Reads or generates the three splits for one seed.
std::array<Graph, 3> materialize_graphs(const ExperimentSpec& spec, std::uint64_t seed);
Partition make_partition(const Graph& g, const PartitionSpec& spec, std::size_t split,
                         std::uint64_t seed);

}  // namespace fedmp
