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
#include <optional>
#include <span>
#include <string>

#include <boost/rational.hpp>

#include "fedmp/graph.hpp"

namespace fedmp {

// Average precision of `scores` for the positive class (labels != 0).
// Tied scores form one group evaluated at its boundary, so a constant score
// yields exactly positives / total. Requires at least one positive.
double average_precision(std::span<const double> scores, std::span<const std::uint8_t> labels);

struct TaskReport {
  Task task = Task::C2;
  std::size_t total = 0;
  std::size_t positives = 0;
  double prevalence = 0.0;
  // Average precision for the minority class; empty when the labels hold a
  // single class.
  std::optional<double> pr_auc;
  bool minority_is_negative = false;
  std::string absent_reason;
};

// Minority-class PR-AUC. When positives outnumber negatives the labels are
// inverted and the scores negated before computing average precision.
TaskReport pr_auc(Task task, std::span<const double> scores, std::span<const std::uint8_t> labels);

// Unweighted mean over tasks with a defined PR-AUC (0 when none is defined).
double macro(std::span<const TaskReport> reports);

std::string task_report_csv(std::span<const TaskReport> reports);

using Rational = boost::rational<std::int64_t>;

// Communication ratio of FedAvg with layer-wise exchange against Sync-SGD:
// 1/S + L d R / P.
Rational comm_ratio(std::int64_t steps_per_epoch, std::int64_t layers, std::int64_t width,
                    Rational mean_remote, std::int64_t params);

struct CommReport {
  std::int64_t steps_per_epoch = 0;
  std::int64_t layers = 0;
  std::int64_t width = 0;
  std::int64_t params = 0;
  std::int64_t clients = 0;
  std::int64_t epochs = 0;
  std::int64_t embeddings = 0;  // embedding rows sent over the whole run
  Rational mean_remote;         // per (client, layer, step)
  Rational ratio;               // closed form
  Rational measured;            // ledger volume over the Sync-SGD volume
};

// Builds the report from ledger totals of a fresh-exchange FedAvg run with
// one aggregation per epoch. Volumes are counted in scalars.
CommReport comm_report(std::int64_t steps_per_epoch, std::int64_t layers, std::int64_t width,
                       std::int64_t params, std::int64_t clients, std::int64_t epochs,
                       std::int64_t embeddings);

std::string rational_string(const Rational& r);

}  // namespace fedmp
