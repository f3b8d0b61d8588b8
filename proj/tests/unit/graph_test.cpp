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
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "fedmp/errors.hpp"
#include "fedmp/graph.hpp"
#include "fedmp/graph_io.hpp"
#include "fedmp/synthgen.hpp"
#include "test_graphs.hpp"

namespace fedmp {
namespace {

using Pairs = std::vector<std::pair<NodeId, NodeId>>;

TEST(GraphBuild, FourCycle) {
  const Graph g = testing::four_cycle();
  ASSERT_EQ(g.num_nodes(), 4u);
  ASSERT_EQ(g.num_edges(), 4u);
  for (NodeId v = 0; v < 4; ++v) {
    ASSERT_EQ(g.out_edges(v).size(), 1u);
    EXPECT_EQ(g.out_edges(v)[0].node, (v + 1) % 4);
    EXPECT_EQ(g.in_edges(v)[0].node, (v + 3) % 4);
    EXPECT_EQ(g.edge(v).id, v);
  }
}

TEST(GraphBuild, Singleton) {
  const Graph g = Graph::build(1, {});
  EXPECT_EQ(g.num_nodes(), 1u);
  EXPECT_EQ(g.num_edges(), 0u);
  EXPECT_TRUE(g.in_edges(0).empty());
  EXPECT_TRUE(g.out_edges(0).empty());
}

TEST(GraphBuild, ParallelEdgesStayDistinct) {
  const Pairs e = {{0, 1}, {0, 1}};
  const Graph g = Graph::build(2, e);
  ASSERT_EQ(g.out_edges(0).size(), 2u);
  EXPECT_EQ(g.out_edges(0)[0], (Incidence{1, 0}));
  EXPECT_EQ(g.out_edges(0)[1], (Incidence{1, 1}));
  EXPECT_EQ(g.in_edges(1).size(), 2u);
}

TEST(GraphBuild, SelfLoopIsInAndOutNeighbor) {
  const Pairs e = {{2, 2}};
  const Graph g = Graph::build(3, e);
  ASSERT_EQ(g.in_edges(2).size(), 1u);
  ASSERT_EQ(g.out_edges(2).size(), 1u);
  EXPECT_EQ(g.in_edges(2)[0].node, 2u);
}

TEST(GraphBuild, RejectsOutOfRangeNode) {
  const Pairs e = {{0, 4}};
  EXPECT_THROW(Graph::build(4, e), ValidationError);
}

TEST(GraphBuild, RejectsFeatureRowMismatch) {
  const Pairs e = {{0, 1}};
  EXPECT_THROW(Graph::build(2, e, Matrix(3, 1)), ValidationError);
  EXPECT_THROW(Graph::build(2, e, std::nullopt, Matrix(2, 1)), ValidationError);
}

TEST(GraphBuild, NeighborOrderIgnoresInsertionOrder) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 25; ++trial) {
    const Graph g = testing::random_graph({.nodes = 12, .edges = 60, .d_in = 0}, trial);
    std::vector<std::size_t> perm(g.num_edges());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Pairs shuffled;
    for (std::size_t i : perm) shuffled.emplace_back(g.edge(i).src, g.edge(i).dst);
    const Graph h = Graph::build(g.num_nodes(), shuffled);
    for (NodeId v = 0; v < g.num_nodes(); ++v) {
      for (int side = 0; side < 2; ++side) {
        const auto a = side == 0 ? g.in_edges(v) : g.out_edges(v);
        const auto b = side == 0 ? h.in_edges(v) : h.out_edges(v);
        ASSERT_EQ(a.size(), b.size());
        EXPECT_TRUE(std::is_sorted(b.begin(), b.end()));
        for (std::size_t j = 0; j < a.size(); ++j) EXPECT_EQ(a[j].node, b[j].node);
      }
    }
  }
}

TEST(GraphIo, RoundTripFourCycle) {
  const Graph g = testing::four_cycle();
  const Graph back = deserialize(serialize(g));
  EXPECT_EQ(back, g);
  EXPECT_EQ(serialize(back), serialize(g));
}

TEST(GraphIo, ZeroWidthFeatures) {
  const Pairs e = {{0, 1}, {1, 0}};
  const Graph g = Graph::build(2, e);
  const std::string text = serialize(g);
  EXPECT_EQ(text.substr(0, text.find('\n')), "nodes=2 din=0 de=0");
  const Graph back = deserialize(text);
  EXPECT_EQ(back.feature_dim(), 0u);
  EXPECT_EQ(back.node_features().rows(), 2u);
  EXPECT_EQ(back, g);
}

TEST(GraphIo, DanglingNodeNamesLine) {
  const std::string text = "nodes=3 din=0 de=0\n0 1\n1 7\n";
  try {
    deserialize(text);
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
    EXPECT_GE(e.offset(), 23u);
  }
}

TEST(GraphIo, MalformedInputs) {
  EXPECT_THROW(deserialize(""), ParseError);
  EXPECT_THROW(deserialize("nodes=x din=0 de=0\n"), ParseError);
  EXPECT_THROW(deserialize("nodes=2 din=1 de=0\n0 1\nfeat 0 1.5\n"), ParseError);
  EXPECT_THROW(deserialize("nodes=2 din=0 de=1\n0 1\n"), ParseError);
  EXPECT_THROW(deserialize("nodes=2 din=0 de=0\nlabel 0 10x0000\n"), ParseError);
}

TEST(GraphIo, CommentsAndBlankLines) {
  const Graph g = deserialize("# header follows\nnodes=2 din=0 de=0\n\n0 1\n# done\n");
  EXPECT_EQ(g.num_edges(), 1u);
}

TEST(GraphIo, RoundTripRandomGraphsBitExact) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Graph g = testing::random_graph({.nodes = 20, .edges = 70, .d_in = 3, .d_edge = 2}, seed);
    EXPECT_EQ(deserialize(serialize(g)), g) << "seed " << seed;
  }
}

TEST(GraphIo, RoundTripGeneratorOutputs) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const Graph g = generate(GenConfig::reference_mix(300, seed)).graph;
    EXPECT_EQ(deserialize(serialize(g)), g) << "seed " << seed;
  }
}

TEST(ConstantFeatures, FillsOneColumn) {
  const Graph g = constant_features(testing::four_cycle(), 1.0);
  ASSERT_EQ(g.node_features().cols(), 1u);
  for (NodeId v = 0; v < 4; ++v) EXPECT_EQ(g.node_features()(v, 0), 1.0);
  const Graph z = constant_features(g, 0.0);
  for (double x : z.node_features().data()) EXPECT_EQ(x, 0.0);
}

TEST(ConstantFeatures, EmptyGraph) {
  const Graph g = constant_features(Graph::build(0, {}), 1.0);
  EXPECT_EQ(g.node_features().rows(), 0u);
  EXPECT_TRUE(g.node_features().empty());
}

TEST(Tasks, NamesRoundTrip) {
  for (Task t : kAllTasks) EXPECT_EQ(task_from_name(task_name(t)), t);
  EXPECT_EQ(task_name(Task::ScatterGather), "S-G");
  EXPECT_FALSE(task_from_name("C7").has_value());
}

}  // namespace
}  // namespace fedmp
