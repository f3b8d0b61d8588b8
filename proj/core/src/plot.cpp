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

#include "fedmp/plot.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "fedmp/errors.hpp"
#include "fedmp/graph.hpp"
#include <nlohmann/json.hpp>

namespace fedmp {

namespace {

using nlohmann::json;

constexpr std::array<const char*, 8> kPalette = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                                 "#9467bd", "#8c564b", "#e377c2", "#17becf"};
constexpr double kWidth = 720.0, kHeight = 420.0;
constexpr double kLeft = 60.0, kRight = 170.0, kTop = 30.0, kBottom = 50.0;

struct Series {
  std::string label;
  std::map<std::string, double> tasks;  // defined tasks only
};

std::string fmt(double x) {
  std::ostringstream s;
  s.precision(6);
  s << x;
  return s.str();
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

class Svg {
 public:
  Svg() {
    out_ << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
         << kHeight << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
         << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  }
  void line(double x1, double y1, double x2, double y2, const std::string& color, double width = 1.0,
            const std::string& dash = "") {
    out_ << "<line x1=\"" << fmt(x1) << "\" y1=\"" << fmt(y1) << "\" x2=\"" << fmt(x2) << "\" y2=\""
         << fmt(y2) << "\" stroke=\"" << color << "\" stroke-width=\"" << width << "\"";
    if (!dash.empty()) out_ << " stroke-dasharray=\"" << dash << "\"";
    out_ << "/>\n";
  }
  void rect(double x, double y, double w, double h, const std::string& color) {
    out_ << "<rect x=\"" << fmt(x) << "\" y=\"" << fmt(y) << "\" width=\"" << fmt(w)
         << "\" height=\"" << fmt(h) << "\" fill=\"" << color << "\"/>\n";
  }
  void circle(double x, double y, const std::string& color) {
    out_ << "<circle cx=\"" << fmt(x) << "\" cy=\"" << fmt(y) << "\" r=\"3\" fill=\"" << color
         << "\"/>\n";
  }
  void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& color) {
    out_ << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (const auto& [x, y] : pts) out_ << fmt(x) << ',' << fmt(y) << ' ';
    out_ << "\"/>\n";
  }
  void text(double x, double y, const std::string& s, const std::string& anchor = "start") {
    out_ << "<text x=\"" << fmt(x) << "\" y=\"" << fmt(y) << "\" text-anchor=\"" << anchor << "\">"
         << escape(s) << "</text>\n";
  }
  std::string finish() {
    out_ << "</svg>\n";
    return out_.str();
  }

 private:
  std::ostringstream out_;
};

double to_y(double v, double lo, double hi) {
  return kTop + (hi - v) / (hi - lo) * (kHeight - kTop - kBottom);
}

void y_axis(Svg& svg, double lo, double hi, const std::string& title) {
  for (int i = 0; i <= 5; ++i) {
    const double v = lo + (hi - lo) * i / 5.0;
    const double y = to_y(v, lo, hi);
    svg.line(kLeft, y, kWidth - kRight, y, "#dddddd");
    svg.text(kLeft - 6, y + 4, fmt(std::round(v * 1000.0) / 1000.0), "end");
  }
  svg.line(kLeft, kTop, kLeft, kHeight - kBottom, "black");
  svg.line(kLeft, kHeight - kBottom, kWidth - kRight, kHeight - kBottom, "black");
  svg.text(14, kTop - 10, title);
}

void legend_entry(Svg& svg, std::size_t row, const std::string& label, const std::string& color,
                  const std::string& dash = "") {
  const double y = kTop + 18.0 * static_cast<double>(row);
  svg.line(kWidth - kRight + 14, y, kWidth - kRight + 38, y, color, 2.0, dash);
  svg.text(kWidth - kRight + 44, y + 4, label);
}

std::pair<double, double> value_range(const std::vector<double>& values) {
  double lo = 1.0, hi = 0.0;
  for (double v : values) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (values.empty()) return {0.0, 1.0};
  lo = std::max(0.0, std::floor((lo - 0.05) * 10.0) / 10.0);
  hi = std::min(1.0, std::ceil((hi + 0.05) * 10.0) / 10.0);
  if (hi <= lo) hi = lo + 0.1;
  return {lo, hi};
}

std::string stem(const std::string& name) {
  std::string out;
  for (char c : name) out += std::isalnum(static_cast<unsigned char>(c)) || c == '-' ? c : '_';
  return out;
}

std::vector<PlotFile> sweep_plot(const std::string& name, const json& root) {
  std::map<std::string, std::vector<std::pair<double, double>>> lines;
  std::vector<double> values;
  std::ostringstream csv;
  csv.precision(17);
  csv << "clients,variant,macro_mean,macro_std\n";
  double min_k = 1e300, max_k = -1e300;
  for (const json& row : root.at("rows")) {
    const auto k = row.at("clients").get<double>();
    const auto v = row.at("variant").get<std::string>();
    const auto m = row.at("macro_mean").get<double>();
    lines[v].emplace_back(k, m);
    values.push_back(m);
    min_k = std::min(min_k, k);
    max_k = std::max(max_k, k);
    csv << k << ',' << v << ',' << m << ',' << row.at("macro_std").get<double>() << '\n';
  }
  if (lines.empty()) throw ValidationError("sweep bundle '" + name + "' has no rows");
  std::optional<double> central;
  if (root.contains("centralized") && !root["centralized"].is_null()) {
    central = root["centralized"].at("macro_mean").get<double>();
    values.push_back(*central);
    csv << ",centralized," << *central << ',' << root["centralized"].at("macro_std").get<double>()
        << '\n';
  }
  const auto [lo, hi] = value_range(values);
  if (max_k <= min_k) max_k = min_k + 1.0;
  auto to_x = [&](double k) { return kLeft + (k - min_k) / (max_k - min_k) * (kWidth - kLeft - kRight); };

  Svg svg;
  y_axis(svg, lo, hi, "macro PR-AUC");
  std::set<double> ticks;
  for (const auto& [v, pts] : lines) {
    for (const auto& p : pts) ticks.insert(p.first);
  }
  for (double k : ticks) svg.text(to_x(k), kHeight - kBottom + 18, fmt(k), "middle");
  svg.text((kLeft + kWidth - kRight) / 2.0, kHeight - 10, "number of clients", "middle");
  std::size_t row = 0;
  for (auto& [v, pts] : lines) {
    std::sort(pts.begin(), pts.end());
    const std::string color = kPalette[row % kPalette.size()];
    std::vector<std::pair<double, double>> xy;
    for (const auto& [k, m] : pts) xy.emplace_back(to_x(k), to_y(m, lo, hi));
    svg.polyline(xy, color);
    for (const auto& [x, y] : xy) svg.circle(x, y, color);
    legend_entry(svg, row++, v, color);
  }
  if (central) {
    const double y = to_y(*central, lo, hi);
    svg.line(kLeft, y, kWidth - kRight, y, "black", 1.5, "2,4");
    legend_entry(svg, row, "centralized", "black", "2,4");
  }
  return {{"sweep_" + stem(name) + ".svg", svg.finish()}, {"sweep_" + stem(name) + ".csv", csv.str()}};
}

std::vector<Series> result_series(const std::string& name, const json& root) {
  std::vector<Series> out;
  for (const json& s : root.at("summary")) {
    Series series;
    series.label = name + ":" + s.at("variant").get<std::string>();
    for (const auto& [task, value] : s.at("task_mean").items()) {
      if (!value.is_null()) series.tasks[task] = value.get<double>();
    }
    out.push_back(std::move(series));
  }
  if (out.empty()) throw ValidationError("result bundle '" + name + "' has no summary");
  return out;
}

std::string join(const std::vector<std::string>& items) {
  std::string s;
  for (const auto& x : items) s += (s.empty() ? "" : ", ") + x;
  return s;
}

std::vector<PlotFile> task_plot(const std::vector<Series>& series) {
  // Every series must define the same tasks.
  std::set<std::string> all;
  for (const Series& s : series) {
    for (const auto& [t, v] : s.tasks) all.insert(t);
  }
  std::vector<std::string> problems;
  for (const Series& s : series) {
    std::vector<std::string> missing;
    for (const std::string& t : all) {
      if (!s.tasks.contains(t)) missing.push_back(t);
    }
    if (!missing.empty()) problems.push_back("'" + s.label + "' lacks " + join(missing));
  }
  if (!problems.empty()) {
    std::string msg = "bundles disagree on tasks: ";
    for (std::size_t i = 0; i < problems.size(); ++i) msg += (i ? "; " : "") + problems[i];
    throw ValidationError(msg);
  }
  std::vector<std::string> tasks;
  for (Task t : kAllTasks) {
    if (all.contains(std::string(task_name(t)))) tasks.emplace_back(task_name(t));
  }
  for (const std::string& t : all) {
    if (std::find(tasks.begin(), tasks.end(), t) == tasks.end()) tasks.push_back(t);
  }

  std::ostringstream csv;
  csv.precision(17);
  csv << "series,task,pr_auc\n";
  Svg svg;
  y_axis(svg, 0.0, 1.0, "PR-AUC");
  const double plot_w = kWidth - kLeft - kRight;
  const double group_w = plot_w / static_cast<double>(std::max<std::size_t>(1, tasks.size()));
  const double bar_w = group_w * 0.8 / static_cast<double>(series.size());
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    const double gx = kLeft + group_w * static_cast<double>(t) + group_w * 0.1;
    svg.text(gx + group_w * 0.4, kHeight - kBottom + 18, tasks[t], "middle");
    for (std::size_t s = 0; s < series.size(); ++s) {
      const double v = series[s].tasks.at(tasks[t]);
      const double y = to_y(v, 0.0, 1.0);
      svg.rect(gx + bar_w * static_cast<double>(s), y, bar_w, kHeight - kBottom - y,
               kPalette[s % kPalette.size()]);
      csv << series[s].label << ',' << tasks[t] << ',' << v << '\n';
    }
  }
  for (std::size_t s = 0; s < series.size(); ++s) {
    legend_entry(svg, s, series[s].label, kPalette[s % kPalette.size()]);
  }
  return {{"tasks.svg", svg.finish()}, {"tasks.csv", csv.str()}};
}

}  // namespace

std::vector<PlotFile> render_plots(std::span<const BundleText> bundles) {
  if (bundles.empty()) throw ValidationError("plot needs at least one bundle");
  std::vector<PlotFile> files;
  std::vector<Series> bars;
  for (const BundleText& b : bundles) {
    json root;
    try {
      root = json::parse(b.json);
    } catch (const json::exception& e) {
      throw ValidationError("bundle '" + b.name + "' is not valid JSON: " + e.what());
    }
    const std::string format = root.is_object() ? root.value("format", "") : "";
    try {
      if (format == "fedmp-sweep") {
        for (PlotFile& f : sweep_plot(b.name, root)) files.push_back(std::move(f));
      } else if (format == "fedmp-result") {
        for (Series& s : result_series(b.name, root)) bars.push_back(std::move(s));
      } else {
        throw ValidationError("bundle '" + b.name + "' is neither a result nor a sweep");
      }
    } catch (const json::exception& e) {
      throw ValidationError("bundle '" + b.name + "' is malformed: " + e.what());
    }
  }
  if (!bars.empty()) {
    for (PlotFile& f : task_plot(bars)) files.push_back(std::move(f));
  }
  return files;
}

}  // namespace fedmp
