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
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fedmp {

// Which neighborhoods a layer aggregates over. Both = forward plus reverse
// message passing with separate message functions per direction.
enum class Direction : std::uint8_t { Both, In, Out };

std::string_view direction_name(Direction d);
Direction direction_from_name(std::string_view name);

struct ModelConfig {
  std::size_t d_in = 1;
  std::size_t d_edge = 0;
  std::size_t hidden = 16;
  std::size_t layers = 4;
  Direction direction = Direction::Both;

  std::size_t num_directions() const { return direction == Direction::Both ? 2 : 1; }
  // Width of [h_v | sum | mean | max per direction].
  std::size_t update_input_width() const { return hidden * (1 + 3 * num_directions()); }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Offsets into the flat parameter vector. Weight blocks are stored
// input-major: element (k, i) maps input k to output i.
struct DenseSlot {
  std::size_t w = 0;
  std::size_t b = 0;
  std::size_t in = 0;
  std::size_t out = 0;
};

// Message function: relu(Ws h_v + Wn h_u + We e + b1) followed by W2, b2.
struct MessageSlot {
  std::size_t w_self = 0;
  std::size_t w_nbr = 0;
  std::size_t w_edge = 0;
  std::size_t b1 = 0;
  DenseSlot out;
};

struct LayerSlot {
  // Index 0 is the first active direction (in before out).
  std::array<MessageSlot, 2> msg{};
  DenseSlot upd_hidden;
  DenseSlot upd_out;
};

struct ParamLayout {
  DenseSlot embed;
  std::vector<LayerSlot> layers;
  DenseSlot head;
  std::size_t total = 0;

  static ParamLayout make(const ModelConfig& cfg);

  struct Block {
    std::string name;
    std::size_t offset;
    std::size_t rows;
    std::size_t cols;
  };
  // Named blocks in storage order, for checkpoint manifests.
  std::vector<Block> blocks(const ModelConfig& cfg) const;
};

// Shared parameter set: input embedding, L layer blocks and seven affine
// classification heads. The flat vector is the storage, so flatten and
// unflatten are the identity on values.
class ModelParams {
 public:
  ModelParams() = default;

  static ModelParams zeros(const ModelConfig& cfg);
  // Weights uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)); biases zero.
  static ModelParams init(const ModelConfig& cfg, std::uint64_t seed);
  static ModelParams from_flat(const ModelConfig& cfg, std::vector<double> flat);

  const ModelConfig& config() const { return cfg_; }
  const ParamLayout& layout() const { return layout_; }
  std::size_t size() const { return flat_.size(); }

  std::span<const double> flat() const { return flat_; }
  std::span<double> flat() { return flat_; }
  const double* data() const { return flat_.data(); }

  friend bool operator==(const ModelParams& a, const ModelParams& b) {
    return a.cfg_ == b.cfg_ && a.flat_ == b.flat_;
  }

 private:
  ModelConfig cfg_;
  ParamLayout layout_;
  std::vector<double> flat_;
};

// Weighted sum of flat parameter vectors with identical configs.
ModelParams weighted_average(std::span<const ModelParams> params, std::span<const double> weights);

// Checkpoint: one JSON manifest line, then size() little-endian doubles.
void save_checkpoint(const ModelParams& p, const std::filesystem::path& path);
ModelParams load_checkpoint(const std::filesystem::path& path);
std::string checkpoint_bytes(const ModelParams& p);
ModelParams checkpoint_from_bytes(std::string_view bytes);

}  // namespace fedmp
