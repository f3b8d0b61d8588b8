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

#include "fedmp/graph_io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <vector>

#include "fedmp/errors.hpp"

namespace fedmp {

namespace {

void append_real(std::string& out, double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, res.ptr);
}

// Splits a line into whitespace-separated tokens, remembering their offsets.
struct Token {
  std::string_view text;
  std::size_t offset;
};

std::vector<Token> tokenize(std::string_view line, std::size_t base) {
  std::vector<Token> toks;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    if (i >= line.size()) break;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    toks.push_back({line.substr(i, j - i), base + i});
    i = j;
  }
  return toks;
}

class LineParser {
 public:
  explicit LineParser(std::size_t line) : line_(line) {}

  template <typename T>
  T integer(const Token& t, std::string_view what) const {
    T v{};
    auto [p, ec] = std::from_chars(t.text.data(), t.text.data() + t.text.size(), v);
    if (ec != std::errc() || p != t.text.data() + t.text.size()) {
      throw ParseError("expected integer " + std::string(what) + ", got '" +
                           std::string(t.text) + "'",
                       line_, t.offset);
    }
    return v;
  }

  double real(const Token& t) const {
    double v = 0.0;
    auto [p, ec] = std::from_chars(t.text.data(), t.text.data() + t.text.size(), v);
    if (ec != std::errc() || p != t.text.data() + t.text.size()) {
      throw ParseError("expected real, got '" + std::string(t.text) + "'", line_, t.offset);
    }
    return v;
  }

  NodeId node(const Token& t, std::size_t n) const {
    const auto v = integer<std::uint64_t>(t, "node id");
    if (v >= n) {
      throw ParseError("node id " + std::to_string(v) + " out of range for nodes=" +
                           std::to_string(n),
                       line_, t.offset);
    }
    return static_cast<NodeId>(v);
  }

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

std::size_t header_field(const Token& t, std::string_view key, const LineParser& lp) {
  const std::string prefix = std::string(key) + "=";
  if (t.text.substr(0, prefix.size()) != prefix) {
    throw ParseError("malformed header, expected '" + prefix + "<n>'", lp.line(), t.offset);
  }
  Token value{t.text.substr(prefix.size()), t.offset + prefix.size()};
  return lp.integer<std::size_t>(value, key);
}

}  // namespace

std::string serialize(const Graph& g) {
  std::string out;
  out.reserve(32 + g.num_edges() * 16);
  out += "nodes=" + std::to_string(g.num_nodes()) + " din=" + std::to_string(g.feature_dim()) +
         " de=" + std::to_string(g.edge_feature_dim()) + "\n";
  for (const Edge& e : g.edges()) {
    out += std::to_string(e.src);
    out += ' ';
    out += std::to_string(e.dst);
    for (double x : g.edge_features().row(e.id)) {
      out += ' ';
      append_real(out, x);
    }
    out += '\n';
  }
  if (g.feature_dim() > 0) {
    for (NodeId v = 0; v < g.num_nodes(); ++v) {
      out += "feat " + std::to_string(v);
      for (double x : g.node_features().row(v)) {
        out += ' ';
        append_real(out, x);
      }
      out += '\n';
    }
  }
  for (NodeId v = 0; v < g.num_nodes(); ++v) {
    const LabelMask m = g.labels().mask(v);
    if (m == 0) continue;
    out += "label " + std::to_string(v) + ' ';
    for (std::size_t t = 0; t < kNumTasks; ++t) out += ((m >> t) & 1u) ? '1' : '0';
    out += '\n';
  }
  return out;
}

Graph deserialize(std::string_view text) {
  std::size_t pos = 0;
  std::size_t line_no = 0;
  bool have_header = false;
  std::size_t n = 0, din = 0, de = 0;
  std::vector<std::pair<NodeId, NodeId>> edges;
  std::vector<double> edge_feats;
  Matrix feats;
  std::vector<bool> feat_seen;
  LabelMatrix labels;

  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = text.substr(pos, end - pos);
    ++line_no;
    const std::size_t base = pos;
    pos = end + 1;

    const auto toks = tokenize(line, base);
    if (toks.empty() || toks[0].text[0] == '#') continue;
    LineParser lp(line_no);

    if (!have_header) {
      if (toks.size() != 3) throw ParseError("malformed header", line_no, base);
      n = header_field(toks[0], "nodes", lp);
      din = header_field(toks[1], "din", lp);
      de = header_field(toks[2], "de", lp);
      feats = Matrix(n, din);
      feat_seen.assign(n, false);
      labels = LabelMatrix(n);
      have_header = true;
      continue;
    }

    if (toks[0].text == "feat") {
      if (toks.size() != 2 + din) {
        throw ParseError("feat line needs " + std::to_string(din) + " values", line_no, base);
      }
      const NodeId v = lp.node(toks[1], n);
      for (std::size_t k = 0; k < din; ++k) feats(v, k) = lp.real(toks[2 + k]);
      feat_seen[v] = true;
    } else if (toks[0].text == "label") {
      if (toks.size() != 3 || toks[2].text.size() != kNumTasks) {
        throw ParseError("label line needs a node and a 7-bit mask", line_no, base);
      }
      const NodeId v = lp.node(toks[1], n);
      LabelMask m = 0;
      for (std::size_t t = 0; t < kNumTasks; ++t) {
        const char c = toks[2].text[t];
        if (c != '0' && c != '1') {
          throw ParseError("label mask must be 0/1 characters", line_no, toks[2].offset + t);
        }
        if (c == '1') m = static_cast<LabelMask>(m | (1u << t));
      }
      labels.set_mask(v, m);
    } else {
      if (toks.size() != 2 + de) {
        throw ParseError("edge line needs src dst and " + std::to_string(de) + " features",
                         line_no, base);
      }
      const NodeId s = lp.node(toks[0], n);
      const NodeId d = lp.node(toks[1], n);
      edges.emplace_back(s, d);
      for (std::size_t k = 0; k < de; ++k) edge_feats.push_back(lp.real(toks[2 + k]));
    }
  }
  if (!have_header) throw ParseError("missing header", line_no, text.size());
  if (din > 0) {
    for (std::size_t v = 0; v < n; ++v) {
      if (!feat_seen[v]) {
        throw ParseError("truncated payload: no feat line for node " + std::to_string(v),
                         line_no, text.size());
      }
    }
  }
  Matrix ef(edges.size(), de);
  ef.data() = std::move(edge_feats);
  return Graph::build(n, edges, std::move(feats), std::move(ef), std::move(labels));
}

Graph load_graph(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open graph file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize(ss.str());
}

void save_graph(const Graph& g, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write graph file " + path.string());
  out << serialize(g);
}

}  // namespace fedmp
