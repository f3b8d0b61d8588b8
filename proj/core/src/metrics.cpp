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

#include "fedmp/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>
#include <vector>

#include "fedmp/errors.hpp"

namespace fedmp {

double average_precision(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw ValidationError("scores and labels differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  const auto total_pos = static_cast<std::size_t>(
      std::count_if(labels.begin(), labels.end(), [](std::uint8_t y) { return y != 0; }));
  if (total_pos == 0) throw ValidationError("average precision needs a positive label");

  double ap = 0.0;
  std::size_t tp = 0, seen = 0, prev_tp = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      tp += labels[order[j]] != 0 ? 1 : 0;
      ++j;
    }
    seen = j;
    if (tp > prev_tp) {
      const double recall_step = static_cast<double>(tp - prev_tp) / static_cast<double>(total_pos);
      ap += recall_step * (static_cast<double>(tp) / static_cast<double>(seen));
    }
    prev_tp = tp;
    i = j;
  }
  return ap;
}

TaskReport pr_auc(Task task, std::span<const double> scores, std::span<const std::uint8_t> labels) {
  TaskReport r;
  r.task = task;
  r.total = labels.size();
  r.positives = static_cast<std::size_t>(
      std::count_if(labels.begin(), labels.end(), [](std::uint8_t y) { return y != 0; }));
  r.prevalence = r.total == 0 ? 0.0 : static_cast<double>(r.positives) / static_cast<double>(r.total);
  if (r.positives == 0 || r.positives == r.total) {
    r.absent_reason = r.total == 0 ? "empty" : "single-class";
    return r;
  }
  const std::size_t negatives = r.total - r.positives;
  if (r.positives > negatives) {
    r.minority_is_negative = true;
    std::vector<double> s(scores.size());
    std::vector<std::uint8_t> y(labels.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
      s[i] = -scores[i];
      y[i] = labels[i] != 0 ? 0 : 1;
    }
    r.pr_auc = average_precision(s, y);
  } else {
    r.pr_auc = average_precision(scores, labels);
  }
  return r;
}

double macro(std::span<const TaskReport> reports) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const TaskReport& r : reports) {
    if (r.pr_auc) {
      sum += *r.pr_auc;
      ++n;
    }
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

std::string task_report_csv(std::span<const TaskReport> reports) {
  std::ostringstream out;
  out.precision(17);
  out << "task,prevalence,pr_auc\n";
  for (const TaskReport& r : reports) {
    out << task_name(r.task) << ',' << r.prevalence << ',';
    if (r.pr_auc) {
      out << *r.pr_auc;
    } else {
      out << "NA";
    }
    out << '\n';
  }
  return out.str();
}

Rational comm_ratio(std::int64_t steps_per_epoch, std::int64_t layers, std::int64_t width,
                    Rational mean_remote, std::int64_t params) {
  if (steps_per_epoch <= 0 || layers <= 0 || width <= 0 || params <= 0 || mean_remote < 0) {
    throw ValidationError("comm_ratio needs positive S, L, d, P and non-negative R");
  }
  return Rational(1, steps_per_epoch) + Rational(layers * width) * mean_remote / Rational(params);
}

CommReport comm_report(std::int64_t steps_per_epoch, std::int64_t layers, std::int64_t width,
                       std::int64_t params, std::int64_t clients, std::int64_t epochs,
                       std::int64_t embeddings) {
  if (clients <= 0 || epochs <= 0) throw ValidationError("comm_report needs clients and epochs");
  CommReport r;
  r.steps_per_epoch = steps_per_epoch;
  r.layers = layers;
  r.width = width;
  r.params = params;
  r.clients = clients;
  r.epochs = epochs;
  r.embeddings = embeddings;
  r.mean_remote = Rational(embeddings, clients * layers * steps_per_epoch * epochs);
  r.ratio = comm_ratio(steps_per_epoch, layers, width, r.mean_remote, params);
  // Per epoch: FedAvg+LE moves C*P parameters plus the exchanged embeddings;
  // Sync-SGD moves C*P gradient scalars every step.
  const Rational fedavg_le = Rational(clients * params) + Rational(embeddings * width, epochs);
  const Rational syncsgd = Rational(steps_per_epoch * clients * params);
  r.measured = fedavg_le / syncsgd;
  return r;
}

std::string rational_string(const Rational& r) {
  return std::to_string(r.numerator()) + "/" + std::to_string(r.denominator());
}

}  // namespace fedmp
