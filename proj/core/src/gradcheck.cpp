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

#include "fedmp/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace fedmp {

namespace {

struct Probe {
  double loss;
  std::uint64_t signature;
};

Probe probe(const ModelParams& p, const Graph& g, std::span<const std::uint32_t> nodes,
            const LossConfig& loss) {
  const CentralForward f = forward_full(p, g);
  return {bce_loss(f.logits, g.labels(), nodes, loss), activation_signature(f.tape)};
}

}  // namespace

GradCheckResult check_gradient(const ModelParams& params, const Graph& g,
                               std::span<const std::uint32_t> nodes, const LossConfig& loss,
                               const GradCheckOptions& opts) {
  const CentralForward base = forward_full(params, g);
  const GradientBundle gb = backward(params, base.topology, base.bank, base.tape,
                                     g.node_features(), base.logits, g.labels(), nodes, loss);
  const std::uint64_t sig = activation_signature(base.tape);

  GradCheckResult res;
  ModelParams work = params;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double orig = params.flat()[i];
    work.flat()[i] = orig + opts.epsilon;
    const Probe up = probe(work, g, nodes, loss);
    work.flat()[i] = orig - opts.epsilon;
    const Probe down = probe(work, g, nodes, loss);
    work.flat()[i] = orig;
    if (up.signature != sig || down.signature != sig) {
      ++res.skipped;
      continue;
    }
    const double fd = (up.loss - down.loss) / (2.0 * opts.epsilon);
    const double an = gb.grad[i];
    const double denom = std::max({std::abs(fd), std::abs(an), opts.floor});
    const double rel = std::abs(fd - an) / denom;
    ++res.checked;
    if (rel > opts.tolerance) ++res.failed;
    if (rel > res.max_rel_error) {
      res.max_rel_error = rel;
      res.worst_index = i;
    }
  }
  return res;
}

}  // namespace fedmp
