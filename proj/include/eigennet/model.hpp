// Copyright 2026 The eigennet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "eigennet/eigen_layers.hpp"
#include "eigennet/errors.hpp"
#include "eigennet/ops.hpp"
#include "eigennet/parameter.hpp"

namespace eigennet {

struct InputGeometry {
  std::size_t channels = 1;
  std::size_t height = 1;
  std::size_t width = 1;

  std::size_t features() const { return channels * height * width; }
};

struct LinearSpec {
  std::size_t out_features = 0;
};

struct ConvSpec {
  std::size_t out_channels = 0;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t pad = 0;
};

using LayerSpec = std::variant<LinearSpec, ConvSpec>;

struct BlockSpec {
  std::vector<LayerSpec> layers;
};

/// Ordered blocks, each ending in ReLU and carrying one local head; the last
/// block's head is the model output.
struct ModelSpec {
  std::string name;
  InputGeometry input;
  std::size_t classes = 10;
  std::vector<BlockSpec> blocks;
};

using Layer = std::variant<EigenLinear, EigenConv2d>;

struct Block {
  std::vector<Layer> layers;
  LocalHead head;
};

inline Tensor forward_layer(const Layer& layer, const Tensor& x) {
  return std::visit(
      [&](const auto& l) -> Tensor {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, EigenLinear>) {
          // Images or feature maps are flattened into features x batch.
          if (x.rank() == 4) {
            return forward_linear(
                l, transpose(reshape(x, {x.dim(0), x.size() / x.dim(0)})));
          }
          return forward_linear(l, x);
        } else {
          return forward_conv(l, x);
        }
      },
      layer);
}

inline const EigenLinear& factors_of(const Layer& layer) {
  return std::visit(
      [](const auto& l) -> const EigenLinear& {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, EigenLinear>) {
          return l;
        } else {
          return l.inner;
        }
      },
      layer);
}

/// h = relu(layer(...relu(layer(x)))) through every layer of the block.
inline Tensor block_forward(const Block& block, const Tensor& x) {
  Tensor h = x;
  for (const auto& layer : block.layers) h = relu(forward_layer(layer, h));
  return h;
}

inline Tensor block_orth_penalty(const Block& block) {
  Tensor total = layer_orth_penalty(factors_of(block.layers.front()));
  for (std::size_t i = 1; i < block.layers.size(); ++i) {
    total = add(total, layer_orth_penalty(factors_of(block.layers[i])));
  }
  return total;
}

inline double block_orth_drift(const Block& block) {
  double worst = 0.0;
  for (const auto& layer : block.layers) {
    worst = std::max(worst, layer_orth_drift(factors_of(layer)));
  }
  return worst;
}

class Model {
 public:
  Model() = default;

  /// Instantiates every layer and head of `spec`, seeding each one from
  /// `seed` and its position.
  static Model build(const ModelSpec& spec, std::uint64_t seed) {
    if (spec.blocks.empty()) throw ConfigError("model needs at least one block");
    if (spec.classes == 0) throw ConfigError("model needs at least one class");
    Model model;
    model.spec_ = spec;
    std::size_t channels = spec.input.channels;
    std::size_t height = spec.input.height;
    std::size_t width = spec.input.width;
    bool flat = false;
    std::size_t layer_index = 0;
    auto seed_for = [&](std::size_t salt) {
      return seed * 0x100000001b3ULL + 0x9e3779b97f4a7c15ULL * (salt + 1);
    };
    for (std::size_t b = 0; b < spec.blocks.size(); ++b) {
      const auto& block_spec = spec.blocks[b];
      if (block_spec.layers.empty()) {
        throw ConfigError("block " + std::to_string(b) + " has no layers");
      }
      Block block;
      for (const auto& layer_spec : block_spec.layers) {
        const std::uint64_t layer_seed = seed_for(layer_index++);
        if (const auto* lin = std::get_if<LinearSpec>(&layer_spec)) {
          const std::size_t in = flat ? channels : channels * height * width;
          block.layers.emplace_back(
              EigenLinear::create(in, lin->out_features, layer_seed));
          channels = lin->out_features;
          height = width = 1;
          flat = true;
        } else {
          const auto& conv = std::get<ConvSpec>(layer_spec);
          if (flat) {
            throw ConfigError("a convolution cannot follow a linear layer");
          }
          ConvGeometry g{conv.out_channels, channels, conv.kernel, conv.kernel,
                         conv.stride, conv.pad};
          const auto geo = im2col_geometry({1, channels, height, width},
                                           g.kernel_h, g.kernel_w, g.stride,
                                           g.pad);
          block.layers.emplace_back(EigenConv2d::create(g, layer_seed));
          channels = conv.out_channels;
          height = geo.out_h;
          width = geo.out_w;
        }
      }
      block.head = LocalHead::create(channels, spec.classes,
                                     seed_for(1000 + b));
      model.blocks_.push_back(std::move(block));
    }
    return model;
  }

  const ModelSpec& spec() const { return spec_; }
  std::size_t num_blocks() const { return blocks_.size(); }
  std::size_t classes() const { return spec_.classes; }
  const std::vector<Block>& blocks() const { return blocks_; }
  std::vector<Block>& blocks() { return blocks_; }
  const Block& block(std::size_t i) const { return blocks_.at(i); }

  /// Factor and bias parameters of block `b`, named by global layer index.
  ParameterList block_layer_parameters(std::size_t b) const {
    ParameterList out;
    std::size_t layer_index = 0;
    for (std::size_t i = 0; i < b; ++i) layer_index += blocks_[i].layers.size();
    for (const auto& layer : blocks_.at(b).layers) {
      auto params = factors_of(layer).parameters(
          "layer" + std::to_string(layer_index++));
      out.insert(out.end(), params.begin(), params.end());
    }
    return out;
  }

  ParameterList head_parameters(std::size_t b) const {
    return blocks_.at(b).head.parameters("head" + std::to_string(b));
  }

  /// Layer factors plus head of block `b`.
  ParameterList block_parameters(std::size_t b) const {
    auto out = block_layer_parameters(b);
    auto head = head_parameters(b);
    out.insert(out.end(), head.begin(), head.end());
    return out;
  }

  ParameterList all_parameters() const {
    ParameterList out;
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
      auto p = block_parameters(b);
      out.insert(out.end(), p.begin(), p.end());
    }
    return out;
  }

  Model clone() const {
    Model copy;
    copy.spec_ = spec_;
    for (const auto& block : blocks_) {
      Block b;
      for (const auto& layer : block.layers) {
        b.layers.push_back(
            std::visit([](const auto& l) -> Layer { return l.clone(); }, layer));
      }
      b.head = block.head.clone();
      copy.blocks_.push_back(std::move(b));
    }
    return copy;
  }

  /// Logits of the final head; nothing is recorded when the parameters are
  /// not on a tape.
  Tensor predict(const Tensor& x) const {
    Tensor h = x;
    for (const auto& block : blocks_) h = block_forward(block, h);
    return head_forward(blocks_.back().head, h);
  }

  /// Logits of every head, in block order.
  std::vector<Tensor> predict_all(const Tensor& x) const {
    std::vector<Tensor> out;
    Tensor h = x;
    for (const auto& block : blocks_) {
      h = block_forward(block, h);
      out.push_back(head_forward(block.head, h));
    }
    return out;
  }

 private:
  ModelSpec spec_;
  std::vector<Block> blocks_;
};

struct ParameterCounts {
  std::size_t stored_factors = 0;  // Q, lambda, P entries
  std::size_t effective = 0;       // stored minus orthonormality constraints
  std::size_t dense = 0;           // m * n of the equivalent dense weights
  std::size_t biases = 0;
  std::size_t heads = 0;
};

inline ParameterCounts count_parameters(const Model& model) {
  ParameterCounts counts;
  for (const auto& block : model.blocks()) {
    for (const auto& layer : block.layers) {
      const auto& f = factors_of(layer);
      counts.stored_factors += stored_factor_count(f);
      counts.effective += effective_dof(f);
      counts.dense += f.out_features() * f.in_features();
      if (f.bias) counts.biases += f.bias->size();
    }
    counts.heads += block.head.W.size() + block.head.b.size();
  }
  return counts;
}

/// 784 -> 512 -> 256 -> 128 -> 64 eigen-linear blocks (input width follows
/// the data).
inline ModelSpec mlp_4block(const InputGeometry& input, std::size_t classes) {
  ModelSpec spec{"mlp-4block", input, classes, {}};
  for (std::size_t width : {512, 256, 128, 64}) {
    spec.blocks.push_back({{LinearSpec{width}}});
  }
  return spec;
}

/// Four eigen-conv stages (16, 32, 64, 128 channels), each halving the
/// spatial extent: 4x4 kernels, stride 2, pad 1.
inline ModelSpec cnn_4block(const InputGeometry& input, std::size_t classes) {
  ModelSpec spec{"cnn-4block", input, classes, {}};
  for (std::size_t channels : {16, 32, 64, 128}) {
    spec.blocks.push_back({{ConvSpec{channels, 4, 2, 1}}});
  }
  return spec;
}

/// One eigen-linear layer per block with the given widths.
inline ModelSpec mlp_spec(const InputGeometry& input,
                          const std::vector<std::size_t>& widths,
                          std::size_t classes) {
  ModelSpec spec{"mlp", input, classes, {}};
  for (std::size_t width : widths) spec.blocks.push_back({{LinearSpec{width}}});
  return spec;
}

inline ModelSpec preset(const std::string& name, const InputGeometry& input,
                        std::size_t classes) {
  if (name == "mlp-4block") return mlp_4block(input, classes);
  if (name == "cnn-4block") return cnn_4block(input, classes);
  throw ConfigError("unknown preset '" + name +
                    "' (expected mlp-4block or cnn-4block)");
}

}  // namespace eigennet
