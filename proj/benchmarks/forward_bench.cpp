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

#include "fedmp/engine.hpp"
#include "fedmp/exchange.hpp"
#include "fedmp/partition.hpp"
#include "fedmp/synthgen.hpp"

namespace {

using namespace fedmp;

struct Setup {
  Graph graph;
  Federation fed;
  std::vector<ModelParams> params;
};

Setup make_setup(std::size_t nodes, std::size_t clients, std::size_t hidden) {
  Setup s;
  s.graph = constant_features(generate(GenConfig::reference_mix(nodes, 1)).graph, 1.0);
  s.fed = Federation::make(s.graph, louvain(s.graph, clients, 2));
  ModelConfig cfg;
  cfg.hidden = hidden;
  cfg.layers = 4;
  s.params = {ModelParams::init(cfg, 3)};
  return s;
}

void BM_CentralForward(benchmark::State& state) {
  const Setup s = make_setup(static_cast<std::size_t>(state.range(0)), 1, 16);
  for (auto _ : state) benchmark::DoNotOptimize(forward_full(s.params[0], s.graph));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_CentralForward)->Arg(256)->Arg(1024)->Unit(benchmark::kMillisecond);

void BM_DistributedForward(benchmark::State& state) {
  const Setup s = make_setup(1024, static_cast<std::size_t>(state.range(0)), 16);
  DistributedOptions opts;
  opts.keep_tape = false;
  opts.policy.mode = state.range(1) ? RemoteMode::Fresh : RemoteMode::Placeholder;
  for (auto _ : state) benchmark::DoNotOptimize(distributed_forward(s.params, s.fed, opts));
  state.counters["remote"] = static_cast<double>(s.fed.plan.embeddings_per_layer());
}
BENCHMARK(BM_DistributedForward)
    ->ArgsProduct({{2, 8, 15}, {0, 1}})
    ->ArgNames({"clients", "fresh"})
    ->Unit(benchmark::kMillisecond);

void BM_ForwardBackward(benchmark::State& state) {
  const Setup s = make_setup(1024, 1, static_cast<std::size_t>(state.range(0)));
  std::vector<std::uint32_t> nodes(s.graph.num_nodes());
  for (std::uint32_t v = 0; v < nodes.size(); ++v) nodes[v] = v;
  for (auto _ : state) {
    const CentralForward f = forward_full(s.params[0], s.graph);
    benchmark::DoNotOptimize(backward(s.params[0], f.topology, f.bank, f.tape,
                                      s.graph.node_features(), f.logits, s.graph.labels(), nodes, {}));
  }
}
BENCHMARK(BM_ForwardBackward)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
