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

#include "fedmp/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include "fedmp/errors.hpp"
#include "fedmp/rng.hpp"
#include <nlohmann/json.hpp>

namespace fedmp {

namespace {

class Allocator {
 public:
  std::size_t take(std::size_t n) {
    const std::size_t at = next_;
    next_ += n;
    return at;
  }
  DenseSlot dense(std::size_t in, std::size_t out) {
    DenseSlot s;
    s.in = in;
    s.out = out;
    s.w = take(in * out);
    s.b = take(out);
    return s;
  }
  std::size_t used() const { return next_; }

 private:
  std::size_t next_ = 0;
};

std::uint64_t to_le(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  std::uint64_t r = 0;
  for (int i = 0; i < 8; ++i) r |= ((v >> (8 * i)) & 0xffu) << (8 * (7 - i));
  return r;
}

void fill_uniform(std::span<double> w, double fan_in, double fan_out, std::mt19937_64& rng) {
  const double a = std::sqrt(6.0 / (fan_in + fan_out));
  std::uniform_real_distribution<double> u(-a, a);
  for (double& x : w) x = u(rng);
}

}  // namespace

std::string_view direction_name(Direction d) {
  switch (d) {
    case Direction::Both: return "both";
    case Direction::In: return "in";
    case Direction::Out: return "out";
  }
  return "?";
}

Direction direction_from_name(std::string_view name) {
  if (name == "both") return Direction::Both;
  if (name == "in") return Direction::In;
  if (name == "out") return Direction::Out;
  throw ValidationError("unknown direction '" + std::string(name) + "'");
}

ParamLayout ParamLayout::make(const ModelConfig& cfg) {
  if (cfg.hidden == 0) throw ValidationError("hidden width must be positive");
  const std::size_t d = cfg.hidden;
  Allocator alloc;
  ParamLayout lay;
  lay.embed = alloc.dense(cfg.d_in, d);
  lay.layers.resize(cfg.layers);
  for (LayerSlot& ls : lay.layers) {
    for (std::size_t k = 0; k < cfg.num_directions(); ++k) {
      MessageSlot& m = ls.msg[k];
      m.w_self = alloc.take(d * d);
      m.w_nbr = alloc.take(d * d);
      m.w_edge = alloc.take(cfg.d_edge * d);
      m.b1 = alloc.take(d);
      m.out = alloc.dense(d, d);
    }
    ls.upd_hidden = alloc.dense(cfg.update_input_width(), d);
    ls.upd_out = alloc.dense(d, d);
  }
  lay.head = alloc.dense(d, 7);
  lay.total = alloc.used();
  return lay;
}

std::vector<ParamLayout::Block> ParamLayout::blocks(const ModelConfig& cfg) const {
  const std::size_t d = cfg.hidden;
  std::vector<Block> out;
  auto dense = [&out](const std::string& name, const DenseSlot& s) {
    out.push_back({name + ".w", s.w, s.in, s.out});
    out.push_back({name + ".b", s.b, 1, s.out});
  };
  dense("embed", embed);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string lp = "layer" + std::to_string(l);
    for (std::size_t k = 0; k < cfg.num_directions(); ++k) {
      const MessageSlot& m = layers[l].msg[k];
      const std::string mp = lp + ".msg" + std::to_string(k);
      out.push_back({mp + ".w_self", m.w_self, d, d});
      out.push_back({mp + ".w_nbr", m.w_nbr, d, d});
      out.push_back({mp + ".w_edge", m.w_edge, cfg.d_edge, d});
      out.push_back({mp + ".b1", m.b1, 1, d});
      dense(mp + ".out", m.out);
    }
    dense(lp + ".upd_hidden", layers[l].upd_hidden);
    dense(lp + ".upd_out", layers[l].upd_out);
  }
  dense("head", head);
  return out;
}

ModelParams ModelParams::zeros(const ModelConfig& cfg) {
  ModelParams p;
  p.cfg_ = cfg;
  p.layout_ = ParamLayout::make(cfg);
  p.flat_.assign(p.layout_.total, 0.0);
  return p;
}

ModelParams ModelParams::init(const ModelConfig& cfg, std::uint64_t seed) {
  ModelParams p = zeros(cfg);
  std::mt19937_64 rng(derive_seed(seed, 0x696e6974u));
  const auto& lay = p.layout_;
  const double d = static_cast<double>(cfg.hidden);
  auto block = [&p](std::size_t off, std::size_t n) {
    return std::span<double>(p.flat_.data() + off, n);
  };
  fill_uniform(block(lay.embed.w, lay.embed.in * lay.embed.out),
               static_cast<double>(cfg.d_in), d, rng);
  const double msg_fan_in = 2.0 * d + static_cast<double>(cfg.d_edge);
  for (const LayerSlot& ls : lay.layers) {
    for (std::size_t k = 0; k < cfg.num_directions(); ++k) {
      const MessageSlot& m = ls.msg[k];
      fill_uniform(block(m.w_self, cfg.hidden * cfg.hidden), msg_fan_in, d, rng);
      fill_uniform(block(m.w_nbr, cfg.hidden * cfg.hidden), msg_fan_in, d, rng);
      fill_uniform(block(m.w_edge, cfg.d_edge * cfg.hidden), msg_fan_in, d, rng);
      fill_uniform(block(m.out.w, m.out.in * m.out.out), d, d, rng);
    }
    fill_uniform(block(ls.upd_hidden.w, ls.upd_hidden.in * ls.upd_hidden.out),
                 static_cast<double>(ls.upd_hidden.in), d, rng);
    fill_uniform(block(ls.upd_out.w, ls.upd_out.in * ls.upd_out.out), d, d, rng);
  }
  fill_uniform(block(lay.head.w, lay.head.in * lay.head.out), d, 7.0, rng);
  return p;
}

ModelParams ModelParams::from_flat(const ModelConfig& cfg, std::vector<double> flat) {
  ModelParams p;
  p.cfg_ = cfg;
  p.layout_ = ParamLayout::make(cfg);
  if (flat.size() != p.layout_.total) {
    throw ValidationError("flat vector has " + std::to_string(flat.size()) +
                          " entries, model needs " + std::to_string(p.layout_.total));
  }
  p.flat_ = std::move(flat);
  return p;
}

ModelParams weighted_average(std::span<const ModelParams> params,
                             std::span<const double> weights) {
  if (params.empty() || params.size() != weights.size()) {
    throw ValidationError("weighted_average needs one weight per parameter set");
  }
  std::vector<double> acc(params[0].size(), 0.0);
  for (std::size_t c = 0; c < params.size(); ++c) {
    if (!(params[c].config() == params[0].config())) {
      throw ValidationError("weighted_average over mismatched model configs");
    }
    const auto src = params[c].flat();
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += weights[c] * src[i];
  }
  return ModelParams::from_flat(params[0].config(), std::move(acc));
}

std::string checkpoint_bytes(const ModelParams& p) {
  const ModelConfig& cfg = p.config();
  nlohmann::json manifest;
  manifest["format"] = "fedmp-params";
  manifest["version"] = 1;
  manifest["d_in"] = cfg.d_in;
  manifest["d_edge"] = cfg.d_edge;
  manifest["hidden"] = cfg.hidden;
  manifest["layers"] = cfg.layers;
  manifest["direction"] = direction_name(cfg.direction);
  manifest["count"] = p.size();
  auto& shapes = manifest["blocks"] = nlohmann::json::array();
  for (const auto& b : p.layout().blocks(cfg)) {
    shapes.push_back({{"name", b.name}, {"offset", b.offset}, {"rows", b.rows}, {"cols", b.cols}});
  }
  std::string out = manifest.dump() + "\n";
  const std::size_t header = out.size();
  out.resize(header + 8 * p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const std::uint64_t bits = to_le(std::bit_cast<std::uint64_t>(p.flat()[i]));
    std::memcpy(out.data() + header + 8 * i, &bits, 8);
  }
  return out;
}

ModelParams checkpoint_from_bytes(std::string_view bytes) {
  const std::size_t nl = bytes.find('\n');
  if (nl == std::string_view::npos) throw ParseError("checkpoint has no manifest line", 1, 0);
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(bytes.substr(0, nl));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad checkpoint manifest: ") + e.what(), 1, 0);
  }
  if (manifest.value("format", "") != "fedmp-params") {
    throw ParseError("not a fedmp parameter checkpoint", 1, 0);
  }
  ModelConfig cfg;
  cfg.d_in = manifest.at("d_in").get<std::size_t>();
  cfg.d_edge = manifest.at("d_edge").get<std::size_t>();
  cfg.hidden = manifest.at("hidden").get<std::size_t>();
  cfg.layers = manifest.at("layers").get<std::size_t>();
  cfg.direction = direction_from_name(manifest.at("direction").get<std::string>());
  const auto count = manifest.at("count").get<std::size_t>();
  const std::size_t payload = bytes.size() - nl - 1;
  if (payload != 8 * count) {
    throw ParseError("checkpoint payload holds " + std::to_string(payload) + " bytes, expected " +
                         std::to_string(8 * count),
                     0, nl + 1 + std::min(payload, 8 * count));
  }
  std::vector<double> flat(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint64_t bits = 0;
    std::memcpy(&bits, bytes.data() + nl + 1 + 8 * i, 8);
    flat[i] = std::bit_cast<double>(to_le(bits));
  }
  return ModelParams::from_flat(cfg, std::move(flat));
}

void save_checkpoint(const ModelParams& p, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write checkpoint " + path.string());
  out << checkpoint_bytes(p);
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return checkpoint_from_bytes(ss.str());
}

}  // namespace fedmp
