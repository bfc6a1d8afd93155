// Copyright 2026 The eigennet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "eigennet/errors.hpp"
#include "eigennet/kernels.hpp"
#include "eigennet/tensor.hpp"

namespace eigennet {

enum class OpKind : std::uint8_t {
  kLeaf,
  kMatMul,
  kAdd,
  kSub,
  kMul,
  kAddConstant,
  kScale,
  kRelu,
  kTranspose,
  kScaleColumns,
  kSoftmaxCrossEntropy,
  kGramOrthPenalty,
  kIm2Col,
  kReshape,
  kSwapLeadingAxes,
  kSum,
};

inline constexpr std::size_t kNoParent = std::numeric_limits<std::size_t>::max();

/// One recorded operation. Operands are kept alive so the backward rule can
/// read their forward values.
struct Node {
  OpKind kind = OpKind::kLeaf;
  std::array<std::size_t, 2> parents{kNoParent, kNoParent};
  std::array<std::shared_ptr<const detail::TensorState>, 2> operands{};
  std::shared_ptr<detail::TensorState> output;
  std::vector<double> cache;
  std::vector<ClassIndex> labels;
  double constant = 0.0;
  kernels::Im2ColGeometry geometry{};
};

/// Append-only record of operations for reverse-mode differentiation.
///
/// Nodes are appended in execution order, so every parent id is smaller than
/// its child's. A tape is confined to one thread; independent tapes may run
/// concurrently.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  ~Tape() { clear(); }

  /// Registers `t` as a differentiable leaf. Gradients reaching it are
  /// accumulated into its grad buffer by backward().
  Tensor watch(const Tensor& t) {
    const auto& state = detail::state_of(t);
    if (state->tape == this) return t;
    if (state->tape != nullptr) {
      throw TapeError("tensor " + to_string(t.shape()) +
                      " is already recorded on another tape");
    }
    Node node;
    node.kind = OpKind::kLeaf;
    node.output = state;
    push(std::move(node));
    return t;
  }

  std::size_t size() const { return nodes_.size(); }
  const Node& node(std::size_t id) const { return nodes_.at(id); }

  /// Forgets every node and unlinks the tensors that were recorded.
  void clear() {
    for (auto& n : nodes_) {
      if (n.output && n.output->tape == this) n.output->tape = nullptr;
    }
    nodes_.clear();
  }

  void push(Node node) {
    node.output->tape = this;
    node.output->node = nodes_.size();
    nodes_.push_back(std::move(node));
  }

  void backward(const Tensor& loss);

 private:
  std::vector<Node> nodes_;
};

namespace detail {

inline bool broadcasts(const Shape& operand, const Shape& out) {
  return operand.empty() && !out.empty();
}

}  // namespace detail

inline void Tape::backward(const Tensor& loss) {
  if (loss.rank() != 0) {
    throw RankError("backward() needs a scalar loss, got " +
                    to_string(loss.shape()));
  }
  if (loss.tape() != this) {
    throw TapeError("backward() loss is not recorded on this tape");
  }
  const std::size_t root = loss.node_id();
  std::vector<std::vector<double>> adjoint(root + 1);
  adjoint[root] = {1.0};

  auto accumulate_into = [&](std::size_t parent) -> std::vector<double>& {
    auto& buf = adjoint[parent];
    if (buf.empty()) buf.assign(nodes_[parent].output->value.size(), 0.0);
    return buf;
  };

  for (std::size_t id = root + 1; id-- > 0;) {
    if (adjoint[id].empty()) continue;
    const Node& n = nodes_[id];
    const std::vector<double>& up = adjoint[id];
    const auto p0 = n.parents[0];
    const auto p1 = n.parents[1];

    switch (n.kind) {
      case OpKind::kLeaf: {
        auto& state = *n.output;
        if (!state.has_grad) {
          state.grad.assign(state.value.size(), 0.0);
          state.has_grad = true;
        }
        for (std::size_t i = 0; i < up.size(); ++i) state.grad[i] += up[i];
        break;
      }
      case OpKind::kMatMul: {
        const auto& a = *n.operands[0];
        const auto& b = *n.operands[1];
        const std::size_t m = a.shape[0], k = a.shape[1], c = b.shape[1];
        if (p0 != kNoParent) {
          kernels::gemm_grad_lhs(up, b.value, accumulate_into(p0), m, k, c);
        }
        if (p1 != kNoParent) {
          kernels::gemm_grad_rhs(a.value, up, accumulate_into(p1), m, k, c);
        }
        break;
      }
      case OpKind::kAdd:
      case OpKind::kSub: {
        const double sign = n.kind == OpKind::kAdd ? 1.0 : -1.0;
        if (p0 != kNoParent) {
          auto& g = accumulate_into(p0);
          for (std::size_t i = 0; i < up.size(); ++i) g[i] += up[i];
        }
        if (p1 != kNoParent) {
          auto& g = accumulate_into(p1);
          if (detail::broadcasts(n.operands[1]->shape, n.output->shape)) {
            double total = 0.0;
            for (double u : up) total += u;
            g[0] += sign * total;
          } else {
            for (std::size_t i = 0; i < up.size(); ++i) g[i] += sign * up[i];
          }
        }
        break;
      }
      case OpKind::kMul: {
        const auto& a = n.operands[0]->value;
        const auto& b = n.operands[1]->value;
        const bool scalar_rhs =
            detail::broadcasts(n.operands[1]->shape, n.output->shape);
        if (p0 != kNoParent) {
          auto& g = accumulate_into(p0);
          for (std::size_t i = 0; i < up.size(); ++i) {
            g[i] += up[i] * (scalar_rhs ? b[0] : b[i]);
          }
        }
        if (p1 != kNoParent) {
          auto& g = accumulate_into(p1);
          if (scalar_rhs) {
            double total = 0.0;
            for (std::size_t i = 0; i < up.size(); ++i) total += up[i] * a[i];
            g[0] += total;
          } else {
            for (std::size_t i = 0; i < up.size(); ++i) g[i] += up[i] * a[i];
          }
        }
        break;
      }
      case OpKind::kAddConstant:
      case OpKind::kReshape: {
        auto& g = accumulate_into(p0);
        for (std::size_t i = 0; i < up.size(); ++i) g[i] += up[i];
        break;
      }
      case OpKind::kScale: {
        auto& g = accumulate_into(p0);
        for (std::size_t i = 0; i < up.size(); ++i) g[i] += n.constant * up[i];
        break;
      }
      case OpKind::kRelu: {
        const auto& x = n.operands[0]->value;
        auto& g = accumulate_into(p0);
        for (std::size_t i = 0; i < up.size(); ++i) {
          if (x[i] > 0.0) g[i] += up[i];
        }
        break;
      }
      case OpKind::kTranspose: {
        const std::size_t rows = n.operands[0]->shape[0];
        const std::size_t cols = n.operands[0]->shape[1];
        auto& g = accumulate_into(p0);
        for (std::size_t i = 0; i < rows; ++i) {
          for (std::size_t j = 0; j < cols; ++j) g[i * cols + j] += up[j * rows + i];
        }
        break;
      }
      case OpKind::kScaleColumns: {
        const auto& mat = n.operands[0]->value;
        const auto& v = n.operands[1]->value;
        const std::size_t rows = n.operands[0]->shape[0];
        const std::size_t cols = n.operands[0]->shape[1];
        if (p0 != kNoParent) {
          auto& g = accumulate_into(p0);
          for (std::size_t i = 0; i < rows; ++i) {
            for (std::size_t j = 0; j < cols; ++j) {
              g[i * cols + j] += up[i * cols + j] * v[j];
            }
          }
        }
        if (p1 != kNoParent) {
          auto& g = accumulate_into(p1);
          for (std::size_t i = 0; i < rows; ++i) {
            for (std::size_t j = 0; j < cols; ++j) {
              g[j] += up[i * cols + j] * mat[i * cols + j];
            }
          }
        }
        break;
      }
      case OpKind::kSoftmaxCrossEntropy: {
        // cache holds the softmax probabilities.
        const std::size_t batch = n.operands[0]->shape[0];
        const std::size_t classes = n.operands[0]->shape[1];
        const double scale = up[0] / static_cast<double>(batch);
        auto& g = accumulate_into(p0);
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t c = 0; c < classes; ++c) {
            const double onehot = n.labels[b] == c ? 1.0 : 0.0;
            g[b * classes + c] += scale * (n.cache[b * classes + c] - onehot);
          }
        }
        break;
      }
      case OpKind::kGramOrthPenalty: {
        // d/dM ||M^T M - I||_F^2 = 4 M (M^T M - I); cache holds M^T M - I.
        const auto& m = *n.operands[0];
        kernels::gram_grad(m.value, n.cache, 4.0 * up[0], accumulate_into(p0),
                           m.shape[0], m.shape[1]);
        break;
      }
      case OpKind::kIm2Col: {
        kernels::col2im_accumulate(n.geometry, up, accumulate_into(p0));
        break;
      }
      case OpKind::kSwapLeadingAxes: {
        const auto& in = n.operands[0]->shape;
        const std::size_t a = in[0], b = in[1];
        const std::size_t inner = in.size() > 2 ? numel(Shape(in.begin() + 2, in.end())) : 1;
        auto& g = accumulate_into(p0);
        for (std::size_t i = 0; i < a; ++i) {
          for (std::size_t j = 0; j < b; ++j) {
            const double* src = up.data() + (j * a + i) * inner;
            double* dst = g.data() + (i * b + j) * inner;
            for (std::size_t k = 0; k < inner; ++k) dst[k] += src[k];
          }
        }
        break;
      }
      case OpKind::kSum: {
        auto& g = accumulate_into(p0);
        for (double& v : g) v += up[0];
        break;
      }
    }
    adjoint[id].clear();
    adjoint[id].shrink_to_fit();
  }
}

}  // namespace eigennet
