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

#include "fedmp/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include "fedmp/errors.hpp"
#include "fedmp/rng.hpp"

namespace fedmp {

namespace {

constexpr std::uint64_t kBatchStream = 0x6261746368;

bool all_equal(std::span<const ModelParams> theta) {
  for (std::size_t c = 1; c < theta.size(); ++c) {
    if (!(theta[c] == theta[0])) return false;
  }
  return true;
}

// sum_c (K_c / K) theta_c, accumulated in client order.
ModelParams aggregate(std::span<const ModelParams> theta, std::span<const std::size_t> counts,
                      std::size_t total) {
  std::vector<double> acc(theta[0].size(), 0.0);
  for (std::size_t c = 0; c < theta.size(); ++c) {
    const double w = static_cast<double>(counts[c]) / static_cast<double>(total);
    const auto src = theta[c].flat();
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += w * src[i];
  }
  return ModelParams::from_flat(theta[0].config(), std::move(acc));
}

std::vector<std::size_t> owned_counts(const Federation& fed) {
  std::vector<std::size_t> k(fed.num_clients());
  for (std::size_t c = 0; c < k.size(); ++c) k[c] = fed.clients[c].topology.num_owned();
  return k;
}

void check_shapes(const Federation& fed, const ModelConfig& m) {
  for (const ClientData& cd : fed.clients) {
    if (cd.topology.num_owned() > 0 && cd.features.cols() != m.d_in) {
      throw ValidationError("model expects " + std::to_string(m.d_in) +
                            " node features, graph has " + std::to_string(cd.features.cols()));
    }
    if (cd.topology.num_incidences(0) > 0 && cd.topology.edge_features().cols() != m.d_edge) {
      throw ValidationError("model expects " + std::to_string(m.d_edge) +
                            " edge features, graph has " +
                            std::to_string(cd.topology.edge_features().cols()));
    }
  }
}

Federation single_client(const Graph& g, const Partition& p) { return Federation::make(g, p); }

}  // namespace

std::string_view regime_name(Regime r) {
  switch (r) {
    case Regime::Centralized: return "centralized";
    case Regime::Local: return "local";
    case Regime::FedAvg: return "fedavg";
    case Regime::SyncSgd: return "syncsgd";
  }
  return "?";
}

Regime regime_from_name(std::string_view name) {
  for (Regime r : {Regime::Centralized, Regime::Local, Regime::FedAvg, Regime::SyncSgd}) {
    if (regime_name(r) == name) return r;
  }
  throw ValidationError("unknown regime '" + std::string(name) + "'");
}

void TrainConfig::validate() const {
  if (local_epochs < 1) throw ValidationError("local_epochs must be at least 1");
  if (!std::isfinite(learning_rate) || learning_rate < 0.0) {
    throw ValidationError("learning rate must be finite and non-negative");
  }
  if (model.hidden == 0) throw ValidationError("hidden width must be positive");
  if (model.layers == 0) throw ValidationError("model needs at least one layer");
}

std::vector<std::vector<std::uint32_t>> node_batches(std::size_t count, std::size_t size,
                                                     std::uint64_t seed) {
  std::vector<std::uint32_t> order(count);
  std::iota(order.begin(), order.end(), 0u);
  if (count == 0) return {};
  if (size == 0 || size >= count) return {order};
  std::mt19937_64 rng(seed);
  for (std::size_t i = count - 1; i > 0; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i);
    std::swap(order[i], order[pick(rng)]);
  }
  std::vector<std::vector<std::uint32_t>> out;
  for (std::size_t i = 0; i < count; i += size) {
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(count, i + size)));
  }
  return out;
}

RemotePolicy inference_policy(const TrainConfig& cfg) {
  if (cfg.regime == Regime::Centralized) return RemotePolicy{};
  RemotePolicy p = cfg.policy;
  if (p.mode == RemoteMode::Stale) p.mode = RemoteMode::Fresh;
  return p;
}

std::vector<double> client_weights(const Federation& fed) {
  const auto k = owned_counts(fed);
  const std::size_t total = std::accumulate(k.begin(), k.end(), std::size_t{0});
  std::vector<double> w(k.size());
  for (std::size_t c = 0; c < k.size(); ++c) {
    w[c] = static_cast<double>(k[c]) / static_cast<double>(total);
  }
  return w;
}

Evaluation evaluate(std::span<const ModelParams> params, const Federation& fed,
                    const RemotePolicy& policy, Schedule schedule) {
  DistributedOptions opts;
  opts.policy = policy;
  opts.schedule = schedule;
  opts.keep_tape = false;
  const auto fw = distributed_forward(params, fed, opts);

  const std::size_t n = fed.graph->num_nodes();
  Evaluation ev;
  ev.logits = Matrix(n, kNumTasks);
  LabelMatrix labels(n);
  for (std::size_t c = 0; c < fed.num_clients(); ++c) {
    const ClientData& cd = fed.clients[c];
    for (std::size_t i = 0; i < cd.topology.num_owned(); ++i) {
      const NodeId v = cd.topology.global(i);
      const auto src = fw[c].logits.row(i);
      std::copy(src.begin(), src.end(), ev.logits.row(v).begin());
      labels.set_mask(v, cd.labels.mask(static_cast<NodeId>(i)));
    }
  }
  std::vector<double> scores(n);
  std::vector<std::uint8_t> y(n);
  for (Task t : kAllTasks) {
    for (std::size_t v = 0; v < n; ++v) {
      scores[v] = ev.logits(v, task_index(t));
      y[v] = labels.get(static_cast<NodeId>(v), t) ? 1 : 0;
    }
    ev.tasks.push_back(pr_auc(t, scores, y));
  }
  ev.macro = macro(ev.tasks);
  return ev;
}

TrainResult train(const Federation& fed, const TrainConfig& cfg, const Federation* validation,
                  const TrainHooks& hooks) {
  cfg.validate();
  const std::size_t n = fed.num_clients();
  if (n == 0) throw ValidationError("federation has no clients");
  if (cfg.regime == Regime::Centralized && n != 1) {
    throw ValidationError("centralized training expects a single-client federation");
  }
  if (cfg.regime == Regime::Local && validation != nullptr && validation->num_clients() != n) {
    throw ValidationError("local models need a validation split with the same client count");
  }
  check_shapes(fed, cfg.model);
  if (validation != nullptr) check_shapes(*validation, cfg.model);

  const bool shared = cfg.regime == Regime::Centralized || cfg.regime == Regime::SyncSgd;
  const RemotePolicy policy = cfg.regime == Regime::Centralized ? RemotePolicy{} : cfg.policy;
  const bool mean = cfg.loss.reduction == LossConfig::Reduction::Mean;

  const auto counts = owned_counts(fed);
  const std::size_t total = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
  if (total == 0) throw ValidationError("no training nodes");

  std::vector<ModelParams> theta(n, ModelParams::init(cfg.model, cfg.seed));
  TrainResult res;
  for (const ClientData& cd : fed.clients) res.masked_reads += cd.masked_reads;

  StaleCache cache;
  const std::size_t inner = cfg.regime == Regime::FedAvg ? cfg.local_epochs : 1;
  double best = -std::numeric_limits<double>::infinity();
  std::vector<ModelParams> best_params;
  std::size_t since_best = 0;
  std::size_t step = 0;

  for (std::size_t round = 0; round < cfg.epochs; ++round) {
    EpochRecord rec;
    rec.epoch = round;
    double loss_sum = 0.0;
    double loss_weight = 0.0;

    for (std::size_t e = 0; e < inner; ++e) {
      const std::uint64_t epoch_seed = derive_seed(cfg.seed ^ kBatchStream, round * inner + e);
      std::vector<std::vector<std::vector<std::uint32_t>>> batches(n);
      std::size_t steps = 0;
      for (std::size_t c = 0; c < n; ++c) {
        batches[c] = node_batches(counts[c], cfg.batch_size, derive_seed(epoch_seed, c));
        steps = std::max(steps, batches[c].size());
      }
      res.steps_per_epoch = std::max(res.steps_per_epoch, steps);

      for (std::size_t s = 0; s < steps; ++s, ++step) {
        const bool required = shared || (cfg.regime == Regime::FedAvg && e == 0 && s == 0);
        const bool equal = all_equal(theta);
        ++res.a2.checks;
        if (required) ++res.a2.required;
        if (equal) {
          ++res.a2.held;
        } else {
          if (!res.a2.first_divergence) res.a2.first_divergence = step;
          if (required) {
            throw ProtocolViolation("client parameters differ at step " + std::to_string(step));
          }
        }

        DistributedOptions opts;
        opts.policy = policy;
        opts.schedule = cfg.schedule;
        opts.cache = &cache;
        opts.ledger = &res.ledger;
        opts.step = step;
        const auto fw = distributed_forward(theta, fed, opts);

        std::vector<GradientBundle> grads(n);
        for_each_client(n, cfg.schedule, [&](std::size_t c) {
          if (s >= batches[c].size()) return;
          const ClientData& cd = fed.clients[c];
          grads[c] = backward(theta[c], cd.topology, fw[c].bank, fw[c].tape, cd.features,
                              fw[c].logits, cd.labels, batches[c][s], cfg.loss);
        });
        if (hooks.gradients) hooks.gradients(step, grads);

        std::size_t batch_total = 0;
        for (std::size_t c = 0; c < n; ++c) {
          if (grads[c].sample_count == 0) continue;
          const double b = static_cast<double>(grads[c].sample_count);
          batch_total += grads[c].sample_count;
          loss_sum += mean ? b * grads[c].loss : grads[c].loss;
          loss_weight += b;
        }
        if (!std::isfinite(loss_sum)) {
          throw DivergenceError("non-finite training loss at epoch " + std::to_string(round) +
                                ", step " + std::to_string(step));
        }

        if (shared) {
          std::vector<double> g(theta[0].size(), 0.0);
          for (std::size_t c = 0; c < n; ++c) {
            if (grads[c].sample_count == 0) continue;
            const double w = mean ? static_cast<double>(grads[c].sample_count) /
                                        static_cast<double>(batch_total)
                                  : 1.0;
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += w * grads[c].grad[i];
          }
          for (auto& t : theta) sgd_step(t, g, cfg.learning_rate);
        } else {
          for (std::size_t c = 0; c < n; ++c) {
            if (grads[c].sample_count > 0) sgd_step(theta[c], grads[c].grad, cfg.learning_rate);
          }
        }
        if (hooks.after_step) hooks.after_step(step, theta);
      }
      rec.steps += steps;

      if (cfg.regime == Regime::FedAvg && e + 1 == inner) {
        const ModelParams avg = aggregate(theta, counts, total);
        for (auto& t : theta) t = avg;
      }
      if (policy.mode == RemoteMode::Stale) {
        DistributedOptions opts;
        opts.policy = RemotePolicy{RemoteMode::Fresh, policy.placeholder};
        opts.schedule = cfg.schedule;
        opts.ledger = &res.ledger;
        opts.step = step;
        opts.keep_tape = false;
        const auto fw = distributed_forward(theta, fed, opts);
        std::vector<LayerBank> banks;
        banks.reserve(n);
        for (const auto& f : fw) banks.push_back(f.bank);
        cache = snapshot_epoch(banks, fed.plan);
      }
      res.ledger.end_epoch(steps);
    }

    rec.train_loss = loss_weight > 0.0 ? loss_sum / loss_weight : 0.0;
    if (!std::isfinite(rec.train_loss)) {
      throw DivergenceError("non-finite training loss at epoch " + std::to_string(round));
    }
    const std::span<const ModelParams> current =
        cfg.regime == Regime::Local ? std::span<const ModelParams>(theta)
                                    : std::span<const ModelParams>(theta.data(), 1);
    if (validation != nullptr) {
      rec.val_macro = evaluate(current, *validation, inference_policy(cfg), cfg.schedule).macro;
      if (*rec.val_macro > best) {
        best = *rec.val_macro;
        best_params.assign(current.begin(), current.end());
        res.best_epoch = round;
        since_best = 0;
      } else {
        ++since_best;
      }
    }
    res.history.push_back(rec);
    if (validation != nullptr && cfg.patience > 0 && since_best >= cfg.patience) {
      res.stopped_early = round + 1 < cfg.epochs;
      break;
    }
  }

  res.total_steps = step;
  if (validation != nullptr && !best_params.empty()) {
    res.params = std::move(best_params);
  } else {
    res.best_epoch = res.history.empty() ? 0 : res.history.back().epoch;
    if (cfg.regime == Regime::Local) {
      res.params = std::move(theta);
    } else {
      res.params.assign(1, theta[0]);
    }
  }
  return res;
}

TrainResult train_centralized(const Graph& g, TrainConfig cfg, const Graph* validation) {
  cfg.regime = Regime::Centralized;
  const Partition p = Partition::from_owner(g, 1, std::vector<ClientId>(g.num_nodes(), 0));
  const Federation fed = single_client(g, p);
  if (validation == nullptr) return train(fed, cfg);
  const Partition vp =
      Partition::from_owner(*validation, 1, std::vector<ClientId>(validation->num_nodes(), 0));
  const Federation vfed = single_client(*validation, vp);
  return train(fed, cfg, &vfed);
}

TrainResult train_local(const Federation& fed, TrainConfig cfg, const Federation* validation) {
  cfg.regime = Regime::Local;
  return train(fed, cfg, validation);
}

TrainResult train_fedavg(const Federation& fed, TrainConfig cfg, const Federation* validation) {
  cfg.regime = Regime::FedAvg;
  return train(fed, cfg, validation);
}

TrainResult train_syncsgd(const Federation& fed, TrainConfig cfg, const Federation* validation) {
  cfg.regime = Regime::SyncSgd;
  return train(fed, cfg, validation);
}

}  // namespace fedmp
