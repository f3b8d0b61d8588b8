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

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include "fedmp/errors.hpp"
#include "fedmp/experiment.hpp"
#include "fedmp/graph_io.hpp"
#include "fedmp/metrics.hpp"
#include "fedmp/partition.hpp"
#include "fedmp/plot.hpp"
#include "fedmp/synthgen.hpp"
#include "fedmp/training.hpp"
#include "fedmp/verify.hpp"
#include <nlohmann/json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitSuiteFailure = 3;

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw fedmp::ValidationError("cannot read '" + p.string() + "'");
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Collects artifacts under one output directory and writes manifest.json
// listing them.
class OutputDir {
 public:
  OutputDir(fs::path root, std::string command) : root_(std::move(root)), command_(std::move(command)) {
    fs::create_directories(root_);
  }

  void write(const std::string& name, const std::string& content) {
    const fs::path p = root_ / name;
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    out << content;
    if (!out) throw std::runtime_error("cannot write '" + p.string() + "'");
    files_.push_back(name);
  }

  void record(const std::string& name) { files_.push_back(name); }
  const fs::path& root() const { return root_; }
  json& info() { return info_; }

  void finish(bool complete) {
    json m;
    m["command"] = command_;
    m["complete"] = complete;
    m["files"] = files_;
    if (!info_.is_null()) m["info"] = info_;
    std::ofstream out(root_ / "manifest.json");
    out << m.dump(2) << "\n";
  }

 private:
  fs::path root_;
  std::string command_;
  std::vector<std::string> files_;
  json info_;
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// Options shared by train and sweep; unset flags leave the config value.
struct SpecFlags {
  std::string config;
  std::string graph, val_graph, test_graph;
  std::size_t nodes = 0;
  double degree = 0.0;
  std::string method;
  std::size_t clients = 0;
  double imbalance = -1.0;
  std::string variants;
  std::string seeds;
  double lr = 0.0;
  std::size_t epochs = 0, local_epochs = 0, batch = 0, patience = 0, hidden = 0, layers = 0;
  std::string direction, schedule;
  CLI::App* app = nullptr;

  void attach(CLI::App* a) {
    app = a;
    a->add_option("--config", config, "JSON experiment config; flags override it");
    a->add_option("--graph", graph, "Training graph edge list (also used for val/test unless given)");
    a->add_option("--val-graph", val_graph, "Validation graph edge list");
    a->add_option("--test-graph", test_graph, "Test graph edge list");
    a->add_option("--nodes", nodes, "Nodes per generated split");
    a->add_option("--degree", degree, "Average degree of generated splits");
    a->add_option("--method", method, "Partitioner: louvain or kway");
    a->add_option("--clients", clients, "Number of clients");
    a->add_option("--imbalance", imbalance, "Balance tolerance for kway");
    a->add_option("--variants", variants, "Comma list, e.g. local,fedavg,fedavg+le,syncsgd+le");
    a->add_option("--seeds", seeds, "Comma list of run seeds");
    a->add_option("--lr", lr, "Learning rate");
    a->add_option("--epochs", epochs, "Epochs (FedAvg rounds)");
    a->add_option("--local-epochs", local_epochs, "FedAvg local epochs per round");
    a->add_option("--batch", batch, "Batch size in nodes (0 = full batch)");
    a->add_option("--patience", patience, "Early stopping patience in epochs (0 = off)");
    a->add_option("--hidden", hidden, "Hidden width");
    a->add_option("--layers", layers, "Message passing layers");
    a->add_option("--direction", direction, "in, out or both");
    a->add_option("--schedule", schedule, "serial or threaded");
  }

  bool given(const std::string& flag) const { return app->count(flag) > 0; }

  fedmp::ExperimentSpec build() const {
    fedmp::ExperimentSpec spec;
    if (!config.empty()) spec = fedmp::parse_experiment_spec(read_text(config));
    if (given("--graph")) {
      for (auto& g : spec.graphs) g.path = graph;
    }
    if (given("--val-graph")) spec.graphs[1].path = val_graph;
    if (given("--test-graph")) spec.graphs[2].path = test_graph;
    for (auto& g : spec.graphs) {
      if (given("--nodes")) g.nodes = nodes;
      if (given("--degree")) g.avg_degree = degree;
    }
    if (given("--method")) spec.partition.method = fedmp::partition_method_from_name(method);
    if (given("--clients")) spec.partition.clients = clients;
    if (given("--imbalance")) spec.partition.imbalance = imbalance;
    if (given("--variants")) {
      spec.variants.clear();
      for (const auto& v : split_list(variants)) spec.variants.push_back(fedmp::variant_from_name(v));
    }
    if (given("--seeds")) {
      spec.seeds.clear();
      for (const auto& s : split_list(seeds)) {
        try {
          spec.seeds.push_back(std::stoull(s));
        } catch (const std::exception&) {
          throw fedmp::ValidationError("bad seed '" + s + "'");
        }
      }
    }
    auto& t = spec.train;
    if (given("--lr")) t.learning_rate = lr;
    if (given("--epochs")) t.epochs = epochs;
    if (given("--local-epochs")) t.local_epochs = local_epochs;
    if (given("--batch")) t.batch_size = batch;
    if (given("--patience")) t.patience = patience;
    if (given("--hidden")) t.model.hidden = hidden;
    if (given("--layers")) t.model.layers = layers;
    if (given("--direction")) t.model.direction = fedmp::direction_from_name(direction);
    if (given("--schedule")) t.schedule = fedmp::schedule_from_name(schedule);
    spec.validate();
    return spec;
  }
};

void print_run(const fedmp::RunRecord& r) {
  std::cerr << "  seed " << r.seed << "  " << r.variant.name() << "  k=" << r.clients
            << "  macro " << r.macro << "  epochs " << r.epochs_run << "\n";
}

void write_runs(OutputDir& out, const fedmp::ExperimentResult& result) {
  for (const fedmp::RunRecord& r : result.runs) {
    const std::string base = "runs/" + r.variant.name() + "_seed" + std::to_string(r.seed);
    out.write(base + "_ledger.csv", r.ledger_csv);
    for (std::size_t c = 0; c < r.params.size(); ++c) {
      const std::string suffix = r.params.size() == 1 ? "" : "_client" + std::to_string(c);
      out.write(base + suffix + ".ckpt", fedmp::checkpoint_bytes(r.params[c]));
    }
  }
}

int cmd_gen(std::size_t nodes, double degree, std::uint64_t seed, const std::string& split,
            const std::string& dir) {
  fedmp::Split s = fedmp::Split::Train;
  if (split == "val") {
    s = fedmp::Split::Val;
  } else if (split == "test") {
    s = fedmp::Split::Test;
  } else if (split != "train") {
    throw fedmp::ValidationError("unknown split '" + split + "'");
  }
  if (nodes == 0) throw fedmp::ValidationError("--nodes must be positive");
  fedmp::GenConfig cfg = fedmp::GenConfig::reference_mix(nodes, seed, s);
  cfg.avg_degree = degree;
  const fedmp::GeneratedGraph gen = fedmp::generate(cfg);

  OutputDir out(dir, "gen");
  out.write("graph.edges", fedmp::serialize(gen.graph));
  json side;
  side["nodes"] = gen.graph.num_nodes();
  side["edges"] = gen.graph.num_edges();
  side["seed"] = seed;
  side["split"] = split;
  const auto prev = fedmp::prevalence(gen.graph.labels());
  json p = json::object();
  for (std::size_t t = 0; t < fedmp::kNumTasks; ++t) p[std::string(fedmp::task_name(fedmp::kAllTasks[t]))] = prev[t];
  side["prevalence"] = p;
  json inst = json::array();
  for (const auto& i : gen.instances) {
    inst.push_back({{"task", fedmp::task_name(i.task)}, {"nodes", i.member_nodes}, {"edges", i.member_edges}});
  }
  side["instances"] = inst;
  out.write("graph.json", side.dump(2) + "\n");
  out.finish(true);
  for (std::size_t t = 0; t < fedmp::kNumTasks; ++t) {
    std::cout << fedmp::task_name(fedmp::kAllTasks[t]) << " prevalence " << prev[t] << "\n";
  }
  return 0;
}

int cmd_partition(const std::string& graph_path, const std::string& method, std::size_t clients,
                  double imbalance, std::uint64_t seed, const std::string& dir) {
  const fedmp::Graph g = fedmp::load_graph(graph_path);
  fedmp::PartitionSpec ps;
  ps.method = fedmp::partition_method_from_name(method);
  ps.clients = clients;
  ps.imbalance = imbalance;
  const fedmp::Partition p = ps.method == fedmp::PartitionMethod::Louvain
                                 ? fedmp::louvain(g, clients, seed)
                                 : fedmp::balanced_kway(g, clients, imbalance, seed);
  OutputDir out(dir, "partition");
  out.write("partition.txt", fedmp::serialize_partition(p));
  out.write("partition.json", fedmp::partition_summary_json(p, std::string(fedmp::partition_method_name(ps.method))));
  out.finish(true);
  std::cout << "clients " << p.num_clients() << "  cut edges " << p.cut_edges() << "  remote "
            << p.total_remote() << "\n";
  return 0;
}

int cmd_train(const SpecFlags& flags, const std::string& dir) {
  const fedmp::ExperimentSpec spec = flags.build();
  OutputDir out(dir, "train");
  out.write("spec.json", fedmp::experiment_spec_json(spec));
  out.finish(false);
  const fedmp::ExperimentResult result = fedmp::run_experiment(spec, print_run);
  out.write("result.json", fedmp::result_json(spec, result));
  out.write("result.csv", fedmp::result_csv(result));
  write_runs(out, result);
  out.finish(true);
  for (const auto& s : result.summary) {
    std::cout << s.variant.name() << "  macro " << s.mean << " +- " << s.stddev;
    if (s.delta_local) std::cout << "  dLocal " << *s.delta_local;
    if (s.delta_fedavg) std::cout << "  dFedAvg " << *s.delta_fedavg;
    std::cout << "\n";
  }
  std::cout << "gradients stop at received embeddings\n";
  return 0;
}

int cmd_sweep(const SpecFlags& flags, const std::string& ks, const std::string& dir) {
  const fedmp::ExperimentSpec spec = flags.build();
  std::vector<std::size_t> counts;
  for (const auto& k : split_list(ks)) {
    try {
      counts.push_back(std::stoul(k));
    } catch (const std::exception&) {
      throw fedmp::ValidationError("bad client count '" + k + "'");
    }
  }
  if (counts.empty()) throw fedmp::ValidationError("--client-counts is empty");
  OutputDir out(dir, "sweep");
  out.write("spec.json", fedmp::experiment_spec_json(spec));
  out.finish(false);
  const fedmp::SweepResult sweep = fedmp::run_sweep(spec, counts, print_run);
  out.write("sweep.json", fedmp::sweep_json(spec, sweep));
  out.write("sweep.csv", fedmp::sweep_csv(sweep));
  out.finish(true);
  std::cout << fedmp::sweep_csv(sweep);
  return 0;
}

int cmd_eval(const std::string& graph_path, const std::string& partition_path,
             const std::vector<std::string>& ckpts, const std::string& mode,
             const std::string& schedule, const std::string& dir) {
  const fedmp::Graph g = fedmp::with_default_features(fedmp::load_graph(graph_path));
  const fedmp::Partition p = partition_path.empty()
                                 ? fedmp::Partition::from_owner(g, 1, std::vector<fedmp::ClientId>(g.num_nodes(), 0))
                                 : fedmp::load_partition(g, partition_path);
  std::vector<fedmp::ModelParams> params;
  for (const auto& c : ckpts) params.push_back(fedmp::load_checkpoint(c));
  if (params.size() != 1 && params.size() != p.num_clients()) {
    throw fedmp::ValidationError("expected 1 or " + std::to_string(p.num_clients()) +
                                 " checkpoints, got " + std::to_string(params.size()));
  }
  const fedmp::Federation fed = fedmp::Federation::make(g, p);
  fedmp::RemotePolicy policy;
  policy.mode = fedmp::remote_mode_from_name(mode);
  if (policy.mode == fedmp::RemoteMode::Stale) policy.mode = fedmp::RemoteMode::Fresh;
  const fedmp::Evaluation ev = fedmp::evaluate(params, fed, policy, fedmp::schedule_from_name(schedule));
  OutputDir out(dir, "eval");
  out.write("report.csv", fedmp::task_report_csv(ev.tasks));
  out.info() = {{"macro", ev.macro}, {"clients", p.num_clients()}, {"mode", fedmp::remote_mode_name(policy.mode)}};
  out.finish(true);
  std::cout << fedmp::task_report_csv(ev.tasks) << "macro " << ev.macro << "\n";
  return 0;
}

int cmd_verify(const std::vector<std::string>& names, std::size_t instances, std::uint64_t seed,
               const std::string& schedule, const std::string& dir) {
  fedmp::VerifyOptions opts;
  opts.instances = instances;
  opts.seed = seed;
  opts.schedule = fedmp::schedule_from_name(schedule);
  std::vector<std::string> suites = names;
  if (suites.empty()) {
    for (auto s : fedmp::verify_suites()) suites.emplace_back(s);
  }
  for (const auto& s : suites) {
    const auto all = fedmp::verify_suites();
    if (std::find(all.begin(), all.end(), s) == all.end()) {
      throw fedmp::ValidationError("unknown verify suite '" + s + "'");
    }
  }
  std::vector<fedmp::SuiteReport> reports;
  bool ok = true;
  for (const auto& s : suites) {
    reports.push_back(fedmp::run_suite(s, opts));
    std::cout << fedmp::suite_report_text(reports.back()) << std::flush;
    ok = ok && reports.back().passed();
  }
  if (!dir.empty()) {
    OutputDir out(dir, "verify");
    out.write("verify.json", fedmp::suite_reports_json(reports));
    out.finish(true);
  }
  return ok ? 0 : kExitSuiteFailure;
}

int cmd_plot(const std::vector<std::string>& inputs, const std::string& dir) {
  std::vector<fedmp::BundleText> bundles;
  for (const auto& in : inputs) {
    fs::path p = in;
    if (fs::is_directory(p)) {
      p = fs::exists(p / "sweep.json") ? p / "sweep.json" : p / "result.json";
    }
    bundles.push_back({fs::path(in).filename().empty() ? p.parent_path().filename().string()
                                                       : fs::path(in).filename().string(),
                       read_text(p)});
  }
  const auto files = fedmp::render_plots(bundles);
  OutputDir out(dir, "plot");
  for (const auto& f : files) {
    out.write(f.name, f.content);
    std::cout << (out.root() / f.name).string() << "\n";
  }
  out.finish(true);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated message passing experiments with layer-wise embedding exchange"};
  app.require_subcommand(1);

  std::string out_dir;
  std::uint64_t seed = 0;

  auto* gen = app.add_subcommand("gen", "Generate a synthetic transaction graph with pattern labels");
  std::size_t nodes = 1024;
  double degree = 6.0;
  std::string split = "train";
  gen->add_option("--nodes", nodes, "Number of nodes")->capture_default_str();
  gen->add_option("--degree", degree, "Average degree")->capture_default_str();
  gen->add_option("--seed", seed, "Generator seed")->capture_default_str();
  gen->add_option("--split", split, "train, val or test")->capture_default_str();
  gen->add_option("--out", out_dir, "Output directory")->required();

  auto* part = app.add_subcommand("partition", "Split a graph across clients");
  std::string graph_path, method = "louvain";
  std::size_t clients = 8;
  double imbalance = 0.03;
  part->add_option("--graph", graph_path, "Edge list")->required();
  part->add_option("--method", method, "louvain or kway")->capture_default_str();
  part->add_option("--clients", clients, "Number of clients")->capture_default_str();
  part->add_option("--imbalance", imbalance, "Balance tolerance for kway")->capture_default_str();
  part->add_option("--seed", seed, "Partitioner seed")->capture_default_str();
  part->add_option("--out", out_dir, "Output directory")->required();

  auto* trn = app.add_subcommand("train", "Train and evaluate the configured variants over seeds");
  SpecFlags train_flags;
  train_flags.attach(trn);
  trn->add_option("--out", out_dir, "Output directory")->required();

  auto* swp = app.add_subcommand("sweep", "Repeat training over client counts");
  SpecFlags sweep_flags;
  sweep_flags.attach(swp);
  std::string counts = "3,5,10,15";
  swp->add_option("--client-counts", counts, "Comma list of client counts")->capture_default_str();
  swp->add_option("--out", out_dir, "Output directory")->required();

  auto* ev = app.add_subcommand("eval", "Score checkpoints on a graph");
  std::string partition_path, mode = "fresh", schedule = "serial";
  std::vector<std::string> ckpts;
  ev->add_option("--graph", graph_path, "Edge list")->required();
  ev->add_option("--partition", partition_path, "Partition file (default: one client)");
  ev->add_option("--checkpoint", ckpts, "Checkpoint, or one per client")->required();
  ev->add_option("--mode", mode, "placeholder or fresh")->capture_default_str();
  ev->add_option("--schedule", schedule, "serial or threaded")->capture_default_str();
  ev->add_option("--out", out_dir, "Output directory")->required();

  auto* ver = app.add_subcommand("verify", "Run property suites");
  std::vector<std::string> suites;
  std::size_t instances = 0;
  ver->add_option("suites", suites, "Suites to run (default: all)");
  ver->add_option("--instances", instances, "Instances per suite (0 = suite default)");
  ver->add_option("--seed", seed, "Instance seed")->capture_default_str();
  ver->add_option("--schedule", schedule, "serial or threaded")->capture_default_str();
  ver->add_option("--out", out_dir, "Output directory for verify.json");

  auto* plt = app.add_subcommand("plot", "Render SVG charts from result or sweep bundles");
  std::vector<std::string> inputs;
  plt->add_option("bundles", inputs, "result.json, sweep.json or their directories")->required();
  plt->add_option("--out", out_dir, "Output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) return cmd_gen(nodes, degree, seed, split, out_dir);
    if (*part) return cmd_partition(graph_path, method, clients, imbalance, seed, out_dir);
    if (*trn) return cmd_train(train_flags, out_dir);
    if (*swp) return cmd_sweep(sweep_flags, counts, out_dir);
    if (*ev) return cmd_eval(graph_path, partition_path, ckpts, mode, schedule, out_dir);
    if (*ver) return cmd_verify(suites, instances, seed, schedule, out_dir);
    if (*plt) return cmd_plot(inputs, out_dir);
  } catch (const fedmp::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const fedmp::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
