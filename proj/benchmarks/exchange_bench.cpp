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

#include <benchmark/benchmark.h>

#include <vector>

#include "fedmp/exchange.hpp"
#include "fedmp/partition.hpp"
#include "fedmp/synthgen.hpp"

namespace {

using namespace fedmp;

void BM_Partition(benchmark::State& state) {
  const Graph g = generate(GenConfig::reference_mix(1024, 1)).graph;
  const auto k = static_cast<std::size_t>(state.range(0));
  const bool kway = state.range(1) != 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(kway ? balanced_kway(g, k, 0.03, 2) : louvain(g, k, 2));
  }
}
BENCHMARK(BM_Partition)
    ->ArgsProduct({{3, 8, 15}, {0, 1}})
    ->ArgNames({"clients", "kway"})
    ->Unit(benchmark::kMillisecond);

void BM_FederationSetup(benchmark::State& state) {
  const Graph g = generate(GenConfig::reference_mix(1024, 1)).graph;
  const Partition p = louvain(g, static_cast<std::size_t>(state.range(0)), 2);
  for (auto _ : state) benchmark::DoNotOptimize(Federation::make(g, p));
}
BENCHMARK(BM_FederationSetup)->Arg(3)->Arg(15)->Unit(benchmark::kMicrosecond);

void BM_ExchangeSchedule(benchmark::State& state) {
  const Graph g = constant_features(generate(GenConfig::reference_mix(1024, 1)).graph, 1.0);
  const Federation fed = Federation::make(g, louvain(g, 8, 2));
  ModelConfig cfg;
  cfg.layers = 4;
  const std::vector<ModelParams> params = {ModelParams::init(cfg, 3)};
  DistributedOptions opts;
  opts.keep_tape = false;
  opts.policy.mode = RemoteMode::Fresh;
  opts.schedule = state.range(0) ? Schedule::Threaded : Schedule::Serial;
  for (auto _ : state) benchmark::DoNotOptimize(distributed_forward(params, fed, opts));
}
BENCHMARK(BM_ExchangeSchedule)->Arg(0)->Arg(1)->ArgName("threaded")->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
