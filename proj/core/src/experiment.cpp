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

#include "fedmp/experiment.hpp"

#include <cmath>
#include <set>
#include <sstream>

#include "fedmp/errors.hpp"
#include "fedmp/graph_io.hpp"
#include "fedmp/partition.hpp"
#include "fedmp/rng.hpp"
#include <nlohmann/json.hpp>

namespace fedmp {

namespace {

using nlohmann::json;

constexpr std::array<std::string_view, 3> kSplitKeys = {"train", "val", "test"};
constexpr std::uint64_t kPartitionStream = 0x70617274;

void reject_unknown(const json& obj, std::initializer_list<std::string_view> allowed,
                    std::string_view where) {
  if (!obj.is_object()) throw ValidationError(std::string(where) + " must be an object");
  for (const auto& [key, value] : obj.items()) {
    bool known = false;
    for (std::string_view a : allowed) known |= key == a;
    if (!known) throw ValidationError("unknown key '" + key + "' in " + std::string(where));
  }
}

template <typename T>
void read(const json& obj, const char* key, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("bad value for '") + key + "': " + e.what());
  }
}

json task_json(const TaskReport& r) {
  json t;
  t["task"] = task_name(r.task);
  t["total"] = r.total;
  t["positives"] = r.positives;
  t["prevalence"] = r.prevalence;
  t["minority"] = r.minority_is_negative ? "negative" : "positive";
  if (r.pr_auc) {
    t["pr_auc"] = *r.pr_auc;
  } else {
    t["pr_auc"] = nullptr;
    t["absent"] = r.absent_reason;
  }
  return t;
}

json comm_json(const CommReport& c) {
  return {{"steps_per_epoch", c.steps_per_epoch},
          {"layers", c.layers},
          {"width", c.width},
          {"params", c.params},
          {"clients", c.clients},
          {"epochs", c.epochs},
          {"embeddings", c.embeddings},
          {"mean_remote", rational_string(c.mean_remote)},
          {"ratio", rational_string(c.ratio)},
          {"ratio_value", boost::rational_cast<double>(c.ratio)},
          {"measured", rational_string(c.measured)},
          {"agrees", c.ratio == c.measured}};
}

json summary_json(const VariantSummary& s) {
  json j;
  j["variant"] = s.variant.name();
  j["macro_mean"] = s.mean;
  j["macro_std"] = s.stddev;
  json tasks = json::object();
  for (std::size_t t = 0; t < kNumTasks; ++t) {
    const auto& m = s.task_mean[t];
    tasks[std::string(task_name(kAllTasks[t]))] = m ? json(*m) : json(nullptr);
  }
  j["task_mean"] = tasks;
  j["delta_local"] = s.delta_local ? json(*s.delta_local) : json(nullptr);
  j["delta_fedavg"] = s.delta_fedavg ? json(*s.delta_fedavg) : json(nullptr);
  return j;
}

Partition single_owner(const Graph& g) {
  return Partition::from_owner(g, 1, std::vector<ClientId>(g.num_nodes(), 0));
}

}  // namespace

std::string_view partition_method_name(PartitionMethod m) {
  return m == PartitionMethod::Louvain ? "louvain" : "kway";
}

PartitionMethod partition_method_from_name(std::string_view name) {
  if (name == "louvain") return PartitionMethod::Louvain;
  if (name == "kway" || name == "metis") return PartitionMethod::Kway;
  throw ValidationError("unknown partition method '" + std::string(name) + "'");
}

std::string Variant::name() const {
  std::string n(regime_name(regime));
  if (regime == Regime::Centralized) return n;
  switch (mode) {
    case RemoteMode::Fresh: return n + "+le";
    case RemoteMode::Stale: return n + "+stale";
    case RemoteMode::Placeholder: return n;
  }
  return n;
}

Variant variant_from_name(std::string_view name) {
  Variant v;
  const auto plus = name.find('+');
  v.regime = regime_from_name(name.substr(0, plus));
  v.mode = RemoteMode::Placeholder;
  if (plus != std::string_view::npos) {
    const std::string_view suffix = name.substr(plus + 1);
    if (suffix == "le" || suffix == "fresh") {
      v.mode = RemoteMode::Fresh;
    } else if (suffix == "stale") {
      v.mode = RemoteMode::Stale;
    } else {
      throw ValidationError("unknown variant suffix '" + std::string(suffix) + "'");
    }
  }
  if (v.regime == Regime::Centralized) {
    if (plus != std::string_view::npos) throw ValidationError("centralized takes no remote policy");
    v.mode = RemoteMode::Fresh;
  }
  return v;
}

void ExperimentSpec::validate() const {
  train.validate();
  if (variants.empty()) throw ValidationError("experiment needs at least one variant");
  if (seeds.empty()) throw ValidationError("experiment needs at least one seed");
  if (partition.clients == 0) throw ValidationError("partition needs at least one client");
  if (partition.imbalance < 0.0) throw ValidationError("imbalance must be non-negative");
  for (std::size_t s = 0; s < 3; ++s) {
    const GraphSource& g = graphs[s];
    if (g.path) {
      if (!std::filesystem::exists(*g.path)) {
        throw ValidationError("graph file not found: " + g.path->string());
      }
    } else if (g.nodes == 0 || !(g.avg_degree > 0.0)) {
      throw ValidationError("generated " + std::string(kSplitKeys[s]) +
                            " graph needs positive nodes and degree");
    }
    if (partition.files[s] && !std::filesystem::exists(*partition.files[s])) {
      throw ValidationError("partition file not found: " + partition.files[s]->string());
    }
  }
}

ExperimentSpec parse_experiment_spec(std::string_view json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(e.what(), 0, e.byte);
  }
  reject_unknown(root, {"graphs", "partition", "model", "train", "variants", "seeds"}, "config");
  ExperimentSpec spec;
  if (root.contains("graphs")) {
    const json& g = root["graphs"];
    reject_unknown(g, {"train", "val", "test"}, "graphs");
    for (std::size_t s = 0; s < 3; ++s) {
      const char* key = kSplitKeys[s].data();
      if (!g.contains(key)) continue;
      const json& src = g[key];
      reject_unknown(src, {"path", "nodes", "avg_degree"}, "graphs." + std::string(key));
      if (src.contains("path")) spec.graphs[s].path = src["path"].get<std::string>();
      read(src, "nodes", spec.graphs[s].nodes);
      read(src, "avg_degree", spec.graphs[s].avg_degree);
    }
  }
  if (root.contains("partition")) {
    const json& p = root["partition"];
    reject_unknown(p, {"method", "clients", "imbalance", "files"}, "partition");
    if (p.contains("method")) {
      spec.partition.method = partition_method_from_name(p["method"].get<std::string>());
    }
    read(p, "clients", spec.partition.clients);
    read(p, "imbalance", spec.partition.imbalance);
    if (p.contains("files")) {
      reject_unknown(p["files"], {"train", "val", "test"}, "partition.files");
      for (std::size_t s = 0; s < 3; ++s) {
        const char* key = kSplitKeys[s].data();
        if (p["files"].contains(key)) spec.partition.files[s] = p["files"][key].get<std::string>();
      }
    }
  }
  if (root.contains("model")) {
    const json& m = root["model"];
    reject_unknown(m, {"hidden", "layers", "direction"}, "model");
    read(m, "hidden", spec.train.model.hidden);
    read(m, "layers", spec.train.model.layers);
    if (m.contains("direction")) {
      spec.train.model.direction = direction_from_name(m["direction"].get<std::string>());
    }
  }
  if (root.contains("train")) {
    const json& t = root["train"];
    reject_unknown(t,
                   {"learning_rate", "epochs", "local_epochs", "batch_size", "patience",
                    "schedule", "loss", "placeholder"},
                   "train");
    read(t, "learning_rate", spec.train.learning_rate);
    read(t, "epochs", spec.train.epochs);
    read(t, "local_epochs", spec.train.local_epochs);
    read(t, "batch_size", spec.train.batch_size);
    read(t, "patience", spec.train.patience);
    read(t, "placeholder", spec.train.policy.placeholder);
    if (t.contains("schedule")) spec.train.schedule = schedule_from_name(t["schedule"].get<std::string>());
    if (t.contains("loss")) {
      const std::string loss = t["loss"].get<std::string>();
      if (loss == "mean") {
        spec.train.loss.reduction = LossConfig::Reduction::Mean;
      } else if (loss == "sum") {
        spec.train.loss.reduction = LossConfig::Reduction::Sum;
      } else {
        throw ValidationError("loss must be 'mean' or 'sum'");
      }
    }
  }
  if (root.contains("variants")) {
    spec.variants.clear();
    for (const auto& v : root["variants"]) spec.variants.push_back(variant_from_name(v.get<std::string>()));
  }
  if (root.contains("seeds")) spec.seeds = root["seeds"].get<std::vector<std::uint64_t>>();
  return spec;
}

std::string experiment_spec_json(const ExperimentSpec& spec) {
  json root;
  for (std::size_t s = 0; s < 3; ++s) {
    json src;
    if (spec.graphs[s].path) {
      src["path"] = spec.graphs[s].path->string();
    } else {
      src["nodes"] = spec.graphs[s].nodes;
      src["avg_degree"] = spec.graphs[s].avg_degree;
    }
    root["graphs"][std::string(kSplitKeys[s])] = src;
  }
  json part;
  part["method"] = partition_method_name(spec.partition.method);
  part["clients"] = spec.partition.clients;
  part["imbalance"] = spec.partition.imbalance;
  for (std::size_t s = 0; s < 3; ++s) {
    if (spec.partition.files[s]) part["files"][std::string(kSplitKeys[s])] = spec.partition.files[s]->string();
  }
  root["partition"] = part;
  const TrainConfig& t = spec.train;
  root["model"] = {{"hidden", t.model.hidden},
                   {"layers", t.model.layers},
                   {"direction", direction_name(t.model.direction)}};
  root["train"] = {{"learning_rate", t.learning_rate},
                   {"epochs", t.epochs},
                   {"local_epochs", t.local_epochs},
                   {"batch_size", t.batch_size},
                   {"patience", t.patience},
                   {"schedule", schedule_name(t.schedule)},
                   {"loss", t.loss.reduction == LossConfig::Reduction::Mean ? "mean" : "sum"},
                   {"placeholder", t.policy.placeholder}};
  json vars = json::array();
  for (const Variant& v : spec.variants) vars.push_back(v.name());
  root["variants"] = vars;
  root["seeds"] = spec.seeds;
  return root.dump(2);
}

Graph with_default_features(const Graph& g) {
  return g.feature_dim() == 0 ? constant_features(g, 1.0) : g;
}

std::array<Graph, 3> materialize_graphs(const ExperimentSpec& spec, std::uint64_t seed) {
  std::array<Graph, 3> out;
  for (std::size_t s = 0; s < 3; ++s) {
    const GraphSource& src = spec.graphs[s];
    if (src.path) {
      out[s] = with_default_features(load_graph(*src.path));
      continue;
    }
    GenConfig cfg = GenConfig::reference_mix(src.nodes, seed, static_cast<Split>(s));
    cfg.avg_degree = src.avg_degree;
    out[s] = constant_features(generate(cfg).graph, 1.0);
  }
  return out;
}

Partition make_partition(const Graph& g, const PartitionSpec& spec, std::size_t split,
                         std::uint64_t seed) {
  if (spec.files.at(split)) return load_partition(g, *spec.files[split]);
  const std::uint64_t s = derive_seed(seed, kPartitionStream + split);
  if (spec.method == PartitionMethod::Louvain) return louvain(g, spec.clients, s);
  return balanced_kway(g, spec.clients, spec.imbalance, s);
}

ExperimentResult run_experiment(const ExperimentSpec& spec, const ProgressFn& progress) {
  spec.validate();
  ExperimentResult result;
  for (std::uint64_t seed : spec.seeds) {
    const std::array<Graph, 3> graphs = materialize_graphs(spec, seed);
    std::array<Partition, 3> parts;
    for (std::size_t s = 0; s < 3; ++s) parts[s] = make_partition(graphs[s], spec.partition, s, seed);
    std::array<Partition, 3> whole;
    for (std::size_t s = 0; s < 3; ++s) whole[s] = single_owner(graphs[s]);

    for (const Variant& v : spec.variants) {
      const bool central = v.regime == Regime::Centralized;
      const std::array<Partition, 3>& use = central ? whole : parts;
      const Federation train_fed = Federation::make(graphs[0], use[0]);
      const Federation val_fed = Federation::make(graphs[1], use[1]);
      const Federation test_fed = Federation::make(graphs[2], use[2]);

      TrainConfig cfg = spec.train;
      cfg.regime = v.regime;
      cfg.policy.mode = v.mode;
      cfg.seed = seed;
      cfg.model.d_in = graphs[0].feature_dim();
      cfg.model.d_edge = graphs[0].edge_feature_dim();
      const TrainResult tr = train(train_fed, cfg, &val_fed);
      const Evaluation ev = evaluate(tr.params, test_fed, inference_policy(cfg), cfg.schedule);

      RunRecord rec;
      rec.variant = v;
      rec.seed = seed;
      rec.clients = train_fed.num_clients();
      rec.tasks = ev.tasks;
      rec.macro = ev.macro;
      rec.epochs_run = tr.history.size();
      rec.best_epoch = tr.best_epoch;
      rec.steps_per_epoch = tr.steps_per_epoch;
      rec.embeddings_sent = tr.ledger.total_embeddings();
      rec.bytes_sent = tr.ledger.total_bytes();
      rec.final_train_loss = tr.history.empty() ? 0.0 : tr.history.back().train_loss;
      if (v.regime == Regime::FedAvg && v.mode == RemoteMode::Fresh && cfg.local_epochs == 1 &&
          !tr.history.empty()) {
        rec.comm = comm_report(static_cast<std::int64_t>(tr.steps_per_epoch),
                               static_cast<std::int64_t>(cfg.model.layers),
                               static_cast<std::int64_t>(cfg.model.hidden),
                               static_cast<std::int64_t>(tr.params[0].size()),
                               static_cast<std::int64_t>(train_fed.num_clients()),
                               static_cast<std::int64_t>(tr.ledger.epoch_steps().size()),
                               static_cast<std::int64_t>(tr.ledger.total_embeddings()));
      }
      rec.params = tr.params;
      rec.ledger_csv = tr.ledger.to_csv();
      if (progress) progress(rec);
      result.runs.push_back(std::move(rec));
    }
  }
  result.summary = summarize(result.runs);
  return result;
}

std::vector<VariantSummary> summarize(std::span<const RunRecord> runs) {
  std::vector<VariantSummary> out;
  std::vector<Variant> order;
  for (const RunRecord& r : runs) {
    if (std::find(order.begin(), order.end(), r.variant) == order.end()) order.push_back(r.variant);
  }
  for (const Variant& v : order) {
    VariantSummary s;
    s.variant = v;
    std::vector<double> m;
    std::array<double, kNumTasks> task_sum{};
    std::array<std::size_t, kNumTasks> task_count{};
    for (const RunRecord& r : runs) {
      if (!(r.variant == v)) continue;
      m.push_back(r.macro);
      for (std::size_t t = 0; t < kNumTasks; ++t) {
        if (!r.tasks[t].pr_auc) continue;
        task_sum[t] += *r.tasks[t].pr_auc;
        ++task_count[t];
      }
    }
    const double n = static_cast<double>(m.size());
    for (double x : m) s.mean += x;
    s.mean /= n;
    for (double x : m) s.stddev += (x - s.mean) * (x - s.mean);
    s.stddev = std::sqrt(s.stddev / n);
    for (std::size_t t = 0; t < kNumTasks; ++t) {
      if (task_count[t] > 0) s.task_mean[t] = task_sum[t] / static_cast<double>(task_count[t]);
    }
    out.push_back(s);
  }
  auto find = [&](Variant ref) -> const VariantSummary* {
    for (const auto& s : out) {
      if (s.variant == ref) return &s;
    }
    return nullptr;
  };
  const VariantSummary* local = find({Regime::Local, RemoteMode::Placeholder});
  const VariantSummary* fedavg = find({Regime::FedAvg, RemoteMode::Placeholder});
  const double local_mean = local ? local->mean : 0.0;
  const double fedavg_mean = fedavg ? fedavg->mean : 0.0;
  for (auto& s : out) {
    if (local) s.delta_local = s.mean - local_mean;
    if (fedavg) s.delta_fedavg = s.mean - fedavg_mean;
  }
  return out;
}

std::string result_json(const ExperimentSpec& spec, const ExperimentResult& result) {
  json root;
  root["format"] = "fedmp-result";
  root["version"] = 1;
  root["spec"] = json::parse(experiment_spec_json(spec));
  root["gradient_semantics"] = "stop-gradient at received embeddings";
  json runs = json::array();
  for (const RunRecord& r : result.runs) {
    json j;
    j["variant"] = r.variant.name();
    j["seed"] = r.seed;
    j["clients"] = r.clients;
    j["macro"] = r.macro;
    json tasks = json::array();
    for (const auto& t : r.tasks) tasks.push_back(task_json(t));
    j["tasks"] = tasks;
    j["epochs_run"] = r.epochs_run;
    j["best_epoch"] = r.best_epoch;
    j["steps_per_epoch"] = r.steps_per_epoch;
    j["embeddings_sent"] = r.embeddings_sent;
    j["bytes_sent"] = r.bytes_sent;
    j["final_train_loss"] = r.final_train_loss;
    if (r.comm) j["comm"] = comm_json(*r.comm);
    runs.push_back(j);
  }
  root["runs"] = runs;
  json summary = json::array();
  for (const auto& s : result.summary) summary.push_back(summary_json(s));
  root["summary"] = summary;
  return root.dump(2) + "\n";
}

std::string result_csv(const ExperimentResult& result) {
  std::ostringstream out;
  out.precision(17);
  out << "variant,seed";
  for (Task t : kAllTasks) out << ',' << task_name(t);
  out << ",macro\n";
  for (const RunRecord& r : result.runs) {
    out << r.variant.name() << ',' << r.seed;
    for (const auto& t : r.tasks) {
      out << ',';
      if (t.pr_auc) {
        out << *t.pr_auc;
      } else {
        out << "NA";
      }
    }
    out << ',' << r.macro << '\n';
  }
  return out.str();
}

SweepResult run_sweep(const ExperimentSpec& spec, std::span<const std::size_t> client_counts,
                      const ProgressFn& progress) {
  if (client_counts.empty()) throw ValidationError("sweep needs at least one client count");
  SweepResult out;
  ExperimentSpec base = spec;
  base.variants.clear();
  bool has_central = false;
  for (const Variant& v : spec.variants) {
    if (v.regime == Regime::Centralized) {
      has_central = true;
    } else {
      base.variants.push_back(v);
    }
  }
  if (has_central) {
    ExperimentSpec c = spec;
    c.variants = {Variant{Regime::Centralized, RemoteMode::Fresh}};
    out.centralized = run_experiment(c, progress).summary.at(0);
  }
  if (base.variants.empty()) return out;
  for (std::size_t k : client_counts) {
    ExperimentSpec s = base;
    s.partition.clients = k;
    for (const auto& sum : run_experiment(s, progress).summary) out.rows.push_back({k, sum});
  }
  return out;
}

std::string sweep_json(const ExperimentSpec& spec, const SweepResult& sweep) {
  json root;
  root["format"] = "fedmp-sweep";
  root["version"] = 1;
  root["spec"] = json::parse(experiment_spec_json(spec));
  json rows = json::array();
  for (const SweepRow& r : sweep.rows) {
    json j = summary_json(r.summary);
    j["clients"] = r.clients;
    rows.push_back(j);
  }
  root["rows"] = rows;
  root["centralized"] = sweep.centralized ? summary_json(*sweep.centralized) : json(nullptr);
  return root.dump(2) + "\n";
}

std::string sweep_csv(const SweepResult& sweep) {
  std::ostringstream out;
  out.precision(17);
  out << "clients,variant,macro_mean,macro_std\n";
  for (const SweepRow& r : sweep.rows) {
    out << r.clients << ',' << r.summary.variant.name() << ',' << r.summary.mean << ','
        << r.summary.stddev << '\n';
  }
  if (sweep.centralized) {
    out << "all," << sweep.centralized->variant.name() << ',' << sweep.centralized->mean << ','
        << sweep.centralized->stddev << '\n';
  }
  return out.str();
}

}  // namespace fedmp
