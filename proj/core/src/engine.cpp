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

#include "fedmp/engine.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fedmp/errors.hpp"

namespace fedmp {

namespace {

constexpr double kNormEpsilon = 1e-12;

// y = (sum_k W[k, :] x_k) + b with W stored input-major. The accumulation
// order is fixed (k ascending) and shared by every code path.
void affine(const double* w, const double* b, std::size_t in, std::size_t out, const double* x,
            double* y) {
  std::fill(y, y + out, 0.0);
  for (std::size_t k = 0; k < in; ++k) {
    const double xk = x[k];
    const double* wk = w + k * out;
    for (std::size_t i = 0; i < out; ++i) y[i] += wk[i] * xk;
  }
  if (b != nullptr) {
    for (std::size_t i = 0; i < out; ++i) y[i] += b[i];
  }
}

// dx += W dy
void backprop_input(const double* w, std::size_t in, std::size_t out, const double* dy,
                    double* dx) {
  for (std::size_t k = 0; k < in; ++k) {
    const double* wk = w + k * out;
    double acc = 0.0;
    for (std::size_t i = 0; i < out; ++i) acc += wk[i] * dy[i];
    dx[k] += acc;
  }
}

// Accumulates dW += x dy^T, db += dy and (optionally) dx += W dy.
void affine_backward(const double* w, double* gw, double* gb, std::size_t in, std::size_t out,
                     const double* x, const double* dy, double* dx) {
  for (std::size_t k = 0; k < in; ++k) {
    const double xk = x[k];
    double* gk = gw + k * out;
    for (std::size_t i = 0; i < out; ++i) gk[i] += xk * dy[i];
  }
  if (gb != nullptr) {
    for (std::size_t i = 0; i < out; ++i) gb[i] += dy[i];
  }
  if (dx != nullptr) backprop_input(w, in, out, dy, dx);
}

bool all_zero(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; });
}

// Sides visited by a direction mode, in slot order.
std::array<int, 2> sides_of(Direction d) {
  switch (d) {
    case Direction::In: return {0, -1};
    case Direction::Out: return {1, -1};
    case Direction::Both: break;
  }
  return {0, 1};
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

std::string_view provenance_name(Provenance p) {
  switch (p) {
    case Provenance::Undefined: return "undefined";
    case Provenance::Local: return "local";
    case Provenance::Received: return "received";
    case Provenance::Placeholder: return "placeholder";
    case Provenance::Stale: return "stale";
  }
  return "?";
}

LocalTopology LocalTopology::whole(const Graph& g) {
  std::vector<NodeId> all(g.num_nodes());
  for (std::size_t v = 0; v < all.size(); ++v) all[v] = static_cast<NodeId>(v);
  return make(g, all);
}

LocalTopology LocalTopology::make(const Graph& g, std::span<const NodeId> owned) {
  LocalTopology t;
  std::vector<NodeId> own(owned.begin(), owned.end());
  std::sort(own.begin(), own.end());
  own.erase(std::unique(own.begin(), own.end()), own.end());
  if (!own.empty() && own.back() >= g.num_nodes()) {
    throw ValidationError("owned node " + std::to_string(own.back()) + " is out of range");
  }
  std::vector<NodeId> remote;
  for (NodeId v : own) {
    for (const Incidence& inc : g.in_edges(v)) {
      if (!std::binary_search(own.begin(), own.end(), inc.node)) remote.push_back(inc.node);
    }
    for (const Incidence& inc : g.out_edges(v)) {
      if (!std::binary_search(own.begin(), own.end(), inc.node)) remote.push_back(inc.node);
    }
  }
  std::sort(remote.begin(), remote.end());
  remote.erase(std::unique(remote.begin(), remote.end()), remote.end());

  t.num_owned_ = own.size();
  t.ids_ = std::move(own);
  t.ids_.insert(t.ids_.end(), remote.begin(), remote.end());
  t.edge_features_ = &g.edge_features();

  for (int side = 0; side < 2; ++side) {
    auto& off = t.off_[side];
    auto& adj = t.adj_[side];
    off.assign(t.num_owned_ + 1, 0);
    for (std::size_t v = 0; v < t.num_owned_; ++v) {
      const auto list = side == 0 ? g.in_edges(t.ids_[v]) : g.out_edges(t.ids_[v]);
      for (const Incidence& inc : list) {
        adj.push_back({*t.local_of(inc.node), inc.edge});
      }
      off[v + 1] = adj.size();
    }
  }
  return t;
}

std::optional<std::uint32_t> LocalTopology::local_of(NodeId v) const {
  const auto own_end = ids_.begin() + static_cast<std::ptrdiff_t>(num_owned_);
  auto it = std::lower_bound(ids_.begin(), own_end, v);
  if (it != own_end && *it == v) return static_cast<std::uint32_t>(it - ids_.begin());
  it = std::lower_bound(own_end, ids_.end(), v);
  if (it != ids_.end() && *it == v) return static_cast<std::uint32_t>(it - ids_.begin());
  return std::nullopt;
}

LayerBank::LayerBank(std::size_t layers, std::size_t num_local, std::size_t num_owned,
                     std::size_t width)
    : num_owned_(num_owned),
      h_(layers, Matrix(num_local, width)),
      prov_(layers, std::vector<Provenance>(num_local, Provenance::Undefined)) {}

void LayerBank::write_local(std::size_t l, std::size_t v, std::span<const double> values) {
  if (v >= num_owned_) {
    throw ProtocolViolation("local write to remote row " + std::to_string(v) + " at layer " +
                            std::to_string(l));
  }
  std::copy(values.begin(), values.end(), h_[l].row(v).begin());
  prov_[l][v] = Provenance::Local;
}

void LayerBank::write_remote(std::size_t l, std::size_t v, std::span<const double> values,
                             Provenance p) {
  if (v < num_owned_) {
    throw ProtocolViolation("remote write to owned row " + std::to_string(v) + " at layer " +
                            std::to_string(l));
  }
  if (p == Provenance::Local || p == Provenance::Undefined) {
    throw ProtocolViolation("remote rows cannot be tagged " + std::string(provenance_name(p)));
  }
  std::copy(values.begin(), values.end(), h_[l].row(v).begin());
  prov_[l][v] = p;
}

Matrix embed(const ModelParams& params, const Matrix& features) {
  const ModelConfig& cfg = params.config();
  if (features.cols() != cfg.d_in) {
    throw ValidationError("feature width " + std::to_string(features.cols()) +
                          " does not match model input width " + std::to_string(cfg.d_in));
  }
  const DenseSlot& s = params.layout().embed;
  Matrix h(features.rows(), cfg.hidden);
  for (std::size_t v = 0; v < features.rows(); ++v) {
    affine(params.data() + s.w, params.data() + s.b, s.in, s.out, features.row(v).data(),
           h.row(v).data());
  }
  return h;
}

void embed_into(const ModelParams& params, const Matrix& owned_features, LayerBank& bank) {
  if (owned_features.rows() != bank.num_owned()) {
    throw ValidationError("feature rows do not match owned node count");
  }
  const Matrix h = embed(params, owned_features);
  for (std::size_t v = 0; v < h.rows(); ++v) bank.write_local(0, v, h.row(v));
}

void layer_forward(const ModelParams& params, std::size_t l, const LocalTopology& topo,
                   LayerBank& bank, LayerTape* tape) {
  const ModelConfig& cfg = params.config();
  const std::size_t d = cfg.hidden;
  const std::size_t de = cfg.d_edge;
  const std::size_t width = cfg.update_input_width();
  const std::size_t n_own = topo.num_owned();
  const std::size_t n_loc = topo.num_local();
  if (l >= cfg.layers || l + 1 >= bank.depth()) {
    throw ValidationError("layer index " + std::to_string(l) + " out of range");
  }
  if (de > 0 && topo.edge_features().cols() != de) {
    throw ValidationError("edge feature width does not match model");
  }
  for (std::size_t v = 0; v < n_loc; ++v) {
    const Provenance p = bank.provenance(l, v);
    const bool ok = v < n_own ? p == Provenance::Local : p != Provenance::Undefined;
    if (!ok) {
      throw ProtocolViolation("layer " + std::to_string(l) + " row for node " +
                              std::to_string(topo.global(v)) + " is " +
                              std::string(provenance_name(p)) + " before layer " +
                              std::to_string(l + 1) + " is computed");
    }
  }

  const double* P = params.data();
  const LayerSlot& slot = params.layout().layers[l];
  const Matrix& h = bank.layer(l);
  const auto sides = sides_of(cfg.direction);

  Matrix x(n_own, width);
  for (std::size_t v = 0; v < n_own; ++v) {
    std::copy_n(h.row(v).data(), d, x.row(v).data());
  }

  std::vector<double> z(d), r(d), m(d), e(d);
  for (std::size_t s = 0; s < cfg.num_directions(); ++s) {
    const int side = sides[s];
    const MessageSlot& ms = slot.msg[s];
    Matrix a(n_own, d);
    Matrix b(n_loc, d);
    for (std::size_t v = 0; v < n_own; ++v) {
      affine(P + ms.w_self, P + ms.b1, d, d, h.row(v).data(), a.row(v).data());
    }
    for (std::size_t u = 0; u < n_loc; ++u) {
      affine(P + ms.w_nbr, nullptr, d, d, h.row(u).data(), b.row(u).data());
    }
    Matrix zt;
    std::vector<std::uint32_t> arg;
    if (tape != nullptr) {
      zt = Matrix(topo.num_incidences(side), d);
      arg.assign(n_own * d, 0);
    }
    const std::size_t base = d + 3 * d * s;
    for (std::size_t v = 0; v < n_own; ++v) {
      const auto list = topo.incidences(side, v);
      double* sum = x.row(v).data() + base;
      double* mean = sum + d;
      double* mx = mean + d;
      const std::size_t off = topo.incidence_offset(side, v);
      for (std::size_t j = 0; j < list.size(); ++j) {
        const LocalIncidence& inc = list[j];
        const double* av = a.row(v).data();
        const double* bu = b.row(inc.node).data();
        for (std::size_t i = 0; i < d; ++i) z[i] = av[i] + bu[i];
        if (de > 0) {
          affine(P + ms.w_edge, nullptr, de, d, topo.edge_features().row(inc.edge).data(),
                 e.data());
          for (std::size_t i = 0; i < d; ++i) z[i] = z[i] + e[i];
        }
        for (std::size_t i = 0; i < d; ++i) r[i] = z[i] > 0.0 ? z[i] : 0.0;
        affine(P + ms.out.w, P + ms.out.b, d, d, r.data(), m.data());
        for (std::size_t i = 0; i < d; ++i) sum[i] += m[i];
        for (std::size_t i = 0; i < d; ++i) {
          if (j == 0 || m[i] > mx[i]) {
            mx[i] = m[i];
            if (tape != nullptr) arg[v * d + i] = static_cast<std::uint32_t>(j);
          }
        }
        if (tape != nullptr) std::copy(z.begin(), z.end(), zt.row(off + j).begin());
      }
      if (!list.empty()) {
        const auto deg = static_cast<double>(list.size());
        for (std::size_t i = 0; i < d; ++i) mean[i] = sum[i] / deg;
      }
    }
    if (tape != nullptr) {
      DirectionTape& dt = tape->dirs[s];
      dt.a = std::move(a);
      dt.b = std::move(b);
      dt.z = std::move(zt);
      dt.argmax = std::move(arg);
    }
  }

  Matrix q(n_own, d);
  std::vector<double> o(d), hn(d), norm(n_own);
  for (std::size_t v = 0; v < n_own; ++v) {
    affine(P + slot.upd_hidden.w, P + slot.upd_hidden.b, width, d, x.row(v).data(),
           q.row(v).data());
    for (std::size_t i = 0; i < d; ++i) r[i] = q(v, i) > 0.0 ? q(v, i) : 0.0;
    affine(P + slot.upd_out.w, P + slot.upd_out.b, d, d, r.data(), o.data());
    double ss = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      hn[i] = h(v, i) + o[i];
      ss += hn[i] * hn[i];
    }
    const double n = std::sqrt(ss + kNormEpsilon);
    norm[v] = n;
    for (std::size_t i = 0; i < d; ++i) hn[i] = hn[i] / n;
    bank.write_local(l + 1, v, hn);
  }
  if (tape != nullptr) {
    tape->x = std::move(x);
    tape->q = std::move(q);
    tape->norm = std::move(norm);
  }
}

Matrix head_logits(const ModelParams& params, const LayerBank& bank) {
  const DenseSlot& s = params.layout().head;
  const Matrix& h = bank.layer(bank.depth() - 1);
  Matrix logits(bank.num_owned(), kNumTasks);
  for (std::size_t v = 0; v < bank.num_owned(); ++v) {
    affine(params.data() + s.w, params.data() + s.b, s.in, s.out, h.row(v).data(),
           logits.row(v).data());
  }
  return logits;
}

CentralForward forward_full(const ModelParams& params, const Graph& g) {
  const ModelConfig& cfg = params.config();
  CentralForward out;
  out.topology = LocalTopology::whole(g);
  out.bank = LayerBank(cfg.layers + 1, g.num_nodes(), g.num_nodes(), cfg.hidden);
  out.tape.layers.resize(cfg.layers);
  embed_into(params, g.node_features(), out.bank);
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    layer_forward(params, l, out.topology, out.bank, &out.tape.layers[l]);
  }
  out.logits = head_logits(params, out.bank);
  return out;
}

double bce_loss(const Matrix& logits, const LabelMatrix& labels,
                std::span<const std::uint32_t> nodes, const LossConfig& cfg) {
  double total = 0.0;
  for (std::uint32_t v : nodes) {
    for (Task t : kAllTasks) {
      const double z = logits(v, task_index(t));
      const double y = labels.get(v, t) ? 1.0 : 0.0;
      total += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
    }
  }
  if (cfg.reduction == LossConfig::Reduction::Mean && !nodes.empty()) {
    total /= static_cast<double>(nodes.size());
  }
  return total;
}

GradientBundle backward(const ModelParams& params, const LocalTopology& topo,
                        const LayerBank& bank, const ForwardTape& tape, const Matrix& owned_features,
                        const Matrix& logits, const LabelMatrix& labels,
                        std::span<const std::uint32_t> nodes, const LossConfig& cfg,
                        std::span<const std::uint32_t> groups) {
  const ModelConfig& cfg_m = params.config();
  const ParamLayout& lay = params.layout();
  const std::size_t d = cfg_m.hidden;
  const std::size_t de = cfg_m.d_edge;
  const std::size_t width = cfg_m.update_input_width();
  const std::size_t n_own = topo.num_owned();
  const std::size_t n_loc = topo.num_local();
  if (tape.layers.size() != cfg_m.layers) throw ValidationError("tape depth does not match model");
  if (!groups.empty() && groups.size() != n_loc) {
    throw ValidationError("group vector must have one entry per local node");
  }

  GradientBundle out;
  out.grad.assign(params.size(), 0.0);
  out.loss = bce_loss(logits, labels, nodes, cfg);
  out.sample_count = nodes.size();
  const double* P = params.data();
  double* G = out.grad.data();

  const double scale = cfg.reduction == LossConfig::Reduction::Mean && !nodes.empty()
                           ? 1.0 / static_cast<double>(nodes.size())
                           : 1.0;
  Matrix dlogits(n_own, kNumTasks);
  for (std::uint32_t v : nodes) {
    for (Task t : kAllTasks) {
      const double y = labels.get(v, t) ? 1.0 : 0.0;
      dlogits(v, task_index(t)) += scale * (sigmoid(logits(v, task_index(t))) - y);
    }
  }

  Matrix dh(n_loc, d);
  {
    const DenseSlot& s = lay.head;
    const Matrix& hl = bank.layer(cfg_m.layers);
    for (std::size_t v = 0; v < n_own; ++v) {
      if (all_zero(dlogits.row(v))) continue;
      affine_backward(P + s.w, G + s.w, G + s.b, s.in, s.out, hl.row(v).data(),
                      dlogits.row(v).data(), dh.row(v).data());
    }
  }

  const auto sides = sides_of(cfg_m.direction);
  std::vector<double> r(d), dr(d), dq(d), dx(width), dm(d), dz(d), da(d), du(d);
  for (std::size_t l = cfg_m.layers; l-- > 0;) {
    const LayerSlot& slot = lay.layers[l];
    const LayerTape& lt = tape.layers[l];
    const Matrix& h = bank.layer(l);
    Matrix dprev(n_loc, d);

    std::vector<std::uint8_t> active(n_own, 0);
    Matrix dxs(n_own, width);
    for (std::size_t v = 0; v < n_own; ++v) {
      if (all_zero(dh.row(v))) continue;
      active[v] = 1;
      // Through the normalization: du = (g - y (y . g)) / n.
      const auto y = bank.row(l + 1, v);
      const auto g = dh.row(v);
      double dot = 0.0;
      for (std::size_t i = 0; i < d; ++i) dot += y[i] * g[i];
      const double n = lt.norm[v];
      for (std::size_t i = 0; i < d; ++i) du[i] = (g[i] - y[i] * dot) / n;
      const double* dhv = du.data();
      for (std::size_t i = 0; i < d; ++i) dprev(v, i) += dhv[i];
      for (std::size_t i = 0; i < d; ++i) r[i] = lt.q(v, i) > 0.0 ? lt.q(v, i) : 0.0;
      std::fill(dr.begin(), dr.end(), 0.0);
      affine_backward(P + slot.upd_out.w, G + slot.upd_out.w, G + slot.upd_out.b, d, d, r.data(),
                      dhv, dr.data());
      for (std::size_t i = 0; i < d; ++i) dq[i] = lt.q(v, i) > 0.0 ? dr[i] : 0.0;
      double* dxv = dxs.row(v).data();
      affine_backward(P + slot.upd_hidden.w, G + slot.upd_hidden.w, G + slot.upd_hidden.b, width,
                      d, lt.x.row(v).data(), dq.data(), dxv);
      for (std::size_t i = 0; i < d; ++i) dprev(v, i) += dxv[i];
    }

    for (std::size_t s = 0; s < cfg_m.num_directions(); ++s) {
      const int side = sides[s];
      const MessageSlot& ms = slot.msg[s];
      const DirectionTape& dt = lt.dirs[s];
      Matrix db_all(n_loc, d);
      Matrix db_flow(n_loc, d);
      const std::size_t base = d + 3 * d * s;
      for (std::size_t v = 0; v < n_own; ++v) {
        if (!active[v]) continue;
        const auto list = topo.incidences(side, v);
        if (list.empty()) continue;
        const double* dsum = dxs.row(v).data() + base;
        const double* dmean = dsum + d;
        const double* dmax = dmean + d;
        const auto deg = static_cast<double>(list.size());
        const std::size_t off = topo.incidence_offset(side, v);
        std::fill(da.begin(), da.end(), 0.0);
        for (std::size_t j = 0; j < list.size(); ++j) {
          const LocalIncidence& inc = list[j];
          for (std::size_t i = 0; i < d; ++i) {
            dm[i] = dsum[i] + dmean[i] / deg;
            if (dt.argmax[v * d + i] == j) dm[i] += dmax[i];
          }
          const auto zj = dt.z.row(off + j);
          for (std::size_t i = 0; i < d; ++i) r[i] = zj[i] > 0.0 ? zj[i] : 0.0;
          std::fill(dr.begin(), dr.end(), 0.0);
          affine_backward(P + ms.out.w, G + ms.out.w, G + ms.out.b, d, d, r.data(), dm.data(),
                          dr.data());
          for (std::size_t i = 0; i < d; ++i) dz[i] = zj[i] > 0.0 ? dr[i] : 0.0;
          for (std::size_t i = 0; i < d; ++i) da[i] += dz[i];
          double* ball = db_all.row(inc.node).data();
          for (std::size_t i = 0; i < d; ++i) ball[i] += dz[i];
          const bool flow = inc.node < n_own && (groups.empty() || groups[inc.node] == groups[v]);
          if (flow) {
            double* bf = db_flow.row(inc.node).data();
            for (std::size_t i = 0; i < d; ++i) bf[i] += dz[i];
          }
          if (de > 0) {
            affine_backward(P + ms.w_edge, G + ms.w_edge, nullptr, de, d,
                            topo.edge_features().row(inc.edge).data(), dz.data(), nullptr);
          }
        }
        affine_backward(P + ms.w_self, G + ms.w_self, G + ms.b1, d, d, h.row(v).data(), da.data(),
                        dprev.row(v).data());
      }
      for (std::size_t u = 0; u < n_loc; ++u) {
        if (all_zero(db_all.row(u))) continue;
        affine_backward(P + ms.w_nbr, G + ms.w_nbr, nullptr, d, d, h.row(u).data(),
                        db_all.row(u).data(), nullptr);
        if (u < n_own && !all_zero(db_flow.row(u))) {
          backprop_input(P + ms.w_nbr, d, d, db_flow.row(u).data(), dprev.row(u).data());
        }
      }
    }
    dh = std::move(dprev);
  }

  const DenseSlot& s = lay.embed;
  for (std::size_t v = 0; v < n_own; ++v) {
    if (all_zero(dh.row(v))) continue;
    affine_backward(P + s.w, G + s.w, G + s.b, s.in, s.out, owned_features.row(v).data(),
                    dh.row(v).data(), nullptr);
  }
  return out;
}

std::uint64_t activation_signature(const ForwardTape& tape) {
  std::uint64_t hsh = 1469598103934665603ull;
  auto mix = [&hsh](std::uint64_t x) {
    hsh ^= x;
    hsh *= 1099511628211ull;
  };
  for (const LayerTape& lt : tape.layers) {
    for (const DirectionTape& dt : lt.dirs) {
      for (double z : dt.z.data()) mix(z > 0.0 ? 1 : 0);
      for (std::uint32_t a : dt.argmax) mix(a + 2);
    }
    for (double q : lt.q.data()) mix(q > 0.0 ? 1 : 0);
  }
  return hsh;
}

void sgd_step(ModelParams& params, std::span<const double> grad, double lr) {
  if (grad.size() != params.size()) throw ValidationError("gradient length mismatch");
  auto p = params.flat();
  for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * grad[i];
}

}  // namespace fedmp
