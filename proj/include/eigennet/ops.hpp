// Copyright 2026 The eigennet Authors
// SPDX-License-Identifier: Apache-2.0

// Differentiable operations. An op records a node only when one of its
// operands lives on a tape; otherwise it is a plain computation.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "eigennet/errors.hpp"
#include "eigennet/kernels.hpp"
#include "eigennet/tape.hpp"
#include "eigennet/tensor.hpp"

namespace eigennet {

namespace detail {

inline Tape* tape_of(const Tensor& a) { return a.tape(); }

inline Tape* tape_of(const Tensor& a, const Tensor& b) {
  Tape* ta = a.tape();
  Tape* tb = b.tape();
  if (ta != nullptr && tb != nullptr && ta != tb) {
    throw TapeError("operands are recorded on different tapes");
  }
  return ta != nullptr ? ta : tb;
}

inline std::size_t parent_of(const Tensor& t) {
  return t.on_tape() ? t.node_id() : kNoParent;
}

inline Tensor record(Tape* tape, Node node, Tensor out) {
  if (tape == nullptr) return out;
  node.output = state_of(out);
  tape->push(std::move(node));
  return out;
}

inline Node unary_node(OpKind kind, const Tensor& a) {
  Node node;
  node.kind = kind;
  node.parents = {parent_of(a), kNoParent};
  node.operands = {state_of(a), nullptr};
  return node;
}

inline Node binary_node(OpKind kind, const Tensor& a, const Tensor& b) {
  Node node;
  node.kind = kind;
  node.parents = {parent_of(a), parent_of(b)};
  node.operands = {state_of(a), state_of(b)};
  return node;
}

inline void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw RankError(std::string(op) + " needs a matrix, got " +
                    to_string(t.shape()));
  }
}

// Equal shapes, or a rank-0 right-hand side broadcast over the left.
inline void require_elementwise(const Tensor& a, const Tensor& b,
                                const char* op) {
  if (a.shape() == b.shape() || b.rank() == 0) return;
  throw DimensionError(std::string(op) + ": shape mismatch " +
                       to_string(a.shape()) + " vs " + to_string(b.shape()));
}

template <typename Fn>
Tensor elementwise(OpKind kind, const Tensor& a, const Tensor& b, Fn fn,
                   const char* name) {
  require_elementwise(a, b, name);
  std::vector<double> out(a.size());
  const auto x = a.data();
  const auto y = b.data();
  if (b.rank() == 0 && a.rank() != 0) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fn(x[i], y[0]);
  } else {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fn(x[i], y[i]);
  }
  return record(tape_of(a, b), binary_node(kind, a, b),
                Tensor(a.shape(), std::move(out)));
}

}  // namespace detail

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + to_string(a.shape()) +
                         " and " + to_string(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n);
  kernels::gemm(a.data(), b.data(), out, m, k, n);
  return detail::record(detail::tape_of(a, b),
                        detail::binary_node(OpKind::kMatMul, a, b),
                        Tensor({m, n}, std::move(out)));
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  return detail::elementwise(OpKind::kAdd, a, b,
                             [](double x, double y) { return x + y; }, "add");
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  return detail::elementwise(OpKind::kSub, a, b,
                             [](double x, double y) { return x - y; }, "sub");
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  return detail::elementwise(OpKind::kMul, a, b,
                             [](double x, double y) { return x * y; }, "mul");
}

inline Tensor add(const Tensor& a, double c) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (double& v : out) v += c;
  auto node = detail::unary_node(OpKind::kAddConstant, a);
  node.constant = c;
  return detail::record(detail::tape_of(a), std::move(node),
                        Tensor(a.shape(), std::move(out)));
}

inline Tensor sub(const Tensor& a, double c) { return add(a, -c); }

inline Tensor scale(const Tensor& a, double c) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (double& v : out) v *= c;
  auto node = detail::unary_node(OpKind::kScale, a);
  node.constant = c;
  return detail::record(detail::tape_of(a), std::move(node),
                        Tensor(a.shape(), std::move(out)));
}

inline Tensor mul(const Tensor& a, double c) { return scale(a, c); }

inline Tensor relu(const Tensor& x) {
  std::vector<double> out(x.data().begin(), x.data().end());
  for (double& v : out) v = v > 0.0 ? v : 0.0;
  return detail::record(detail::tape_of(x),
                        detail::unary_node(OpKind::kRelu, x),
                        Tensor(x.shape(), std::move(out)));
}

inline Tensor transpose(const Tensor& a) {
  detail::require_matrix(a, "transpose");
  const std::size_t rows = a.dim(0), cols = a.dim(1);
  std::vector<double> out(a.size());
  const auto in = a.data();
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) out[j * rows + i] = in[i * cols + j];
  }
  return detail::record(detail::tape_of(a),
                        detail::unary_node(OpKind::kTranspose, a),
                        Tensor({cols, rows}, std::move(out)));
}

/// out[:, j] = m[:, j] * v[j]; realizes M * diag(v).
inline Tensor scale_columns(const Tensor& m, const Tensor& v) {
  detail::require_matrix(m, "scale_columns");
  if (v.rank() != 1 || v.dim(0) != m.dim(1)) {
    throw DimensionError("scale_columns: vector " + to_string(v.shape()) +
                         " does not match columns of " + to_string(m.shape()));
  }
  const std::size_t rows = m.dim(0), cols = m.dim(1);
  std::vector<double> out(m.size());
  const auto in = m.data();
  const auto s = v.data();
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] = in[i * cols + j] * s[j];
  }
  return detail::record(detail::tape_of(m, v),
                        detail::binary_node(OpKind::kScaleColumns, m, v),
                        Tensor(m.shape(), std::move(out)));
}

inline Tensor sum(const Tensor& a) {
  double total = 0.0;
  for (double v : a.data()) total += v;
  return detail::record(detail::tape_of(a), detail::unary_node(OpKind::kSum, a),
                        Tensor::scalar(total));
}

/// Mean over the batch of -log softmax(logits)[label]; logits is batch x
/// classes.
inline Tensor softmax_cross_entropy(const Tensor& logits,
                                    std::span<const ClassIndex> labels) {
  detail::require_matrix(logits, "softmax_cross_entropy");
  const std::size_t batch = logits.dim(0), classes = logits.dim(1);
  if (labels.size() != batch) {
    throw DimensionError("softmax_cross_entropy: " +
                         std::to_string(labels.size()) + " labels for batch " +
                         std::to_string(batch));
  }
  for (ClassIndex label : labels) {
    if (label >= classes) {
      throw LabelError("label " + std::to_string(label) + " out of range for " +
                       std::to_string(classes) + " classes");
    }
  }
  const auto z = logits.data();
  std::vector<double> probs(logits.size());
  double total = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    const double* row = z.data() + b * classes;
    const double peak = *std::max_element(row, row + classes);
    double denom = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      probs[b * classes + c] = std::exp(row[c] - peak);
      denom += probs[b * classes + c];
    }
    for (std::size_t c = 0; c < classes; ++c) probs[b * classes + c] /= denom;
    total += std::log(denom) - (row[labels[b]] - peak);
  }
  Tape* tape = detail::tape_of(logits);
  Tensor out = Tensor::scalar(total / static_cast<double>(batch));
  if (tape == nullptr) return out;
  auto node = detail::unary_node(OpKind::kSoftmaxCrossEntropy, logits);
  node.cache = std::move(probs);
  node.labels.assign(labels.begin(), labels.end());
  return detail::record(tape, std::move(node), std::move(out));
}

/// ||M^T M - I_r||_F^2 for a thin factor M (m x r, m >= r).
inline Tensor gram_orth_penalty(const Tensor& m) {
  detail::require_matrix(m, "gram_orth_penalty");
  const std::size_t rows = m.dim(0), cols = m.dim(1);
  if (rows < cols) {
    throw FactorShapeError("gram_orth_penalty: factor " + to_string(m.shape()) +
                           " has more columns than rows");
  }
  std::vector<double> deviation(cols * cols);
  kernels::gram_minus_identity(m.data(), deviation, rows, cols);
  double total = 0.0;
  for (double d : deviation) total += d * d;
  Tape* tape = detail::tape_of(m);
  Tensor out = Tensor::scalar(total);
  if (tape == nullptr) return out;
  auto node = detail::unary_node(OpKind::kGramOrthPenalty, m);
  node.cache = std::move(deviation);
  return detail::record(tape, std::move(node), std::move(out));
}

/// Value-identical copy with no tape link; gradients stop here.
inline Tensor detach(const Tensor& x) { return Tensor(x.shape(), x.values()); }

inline Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.size()) {
    throw DimensionError("reshape: cannot view " + to_string(x.shape()) +
                         " as " + to_string(shape));
  }
  return detail::record(detail::tape_of(x),
                        detail::unary_node(OpKind::kReshape, x),
                        Tensor(std::move(shape), x.values()));
}

/// [a x b x rest...] -> [b x a x rest...].
inline Tensor swap_leading_axes(const Tensor& x) {
  if (x.rank() < 2) {
    throw RankError("swap_leading_axes needs rank >= 2, got " +
                    to_string(x.shape()));
  }
  const std::size_t a = x.dim(0), b = x.dim(1);
  const std::size_t inner = x.size() / (a * b);
  std::vector<double> out(x.size());
  const auto in = x.data();
  for (std::size_t i = 0; i < a; ++i) {
    for (std::size_t j = 0; j < b; ++j) {
      std::copy_n(in.data() + (i * b + j) * inner, inner,
                  out.data() + (j * a + i) * inner);
    }
  }
  Shape shape = x.shape();
  std::swap(shape[0], shape[1]);
  return detail::record(detail::tape_of(x),
                        detail::unary_node(OpKind::kSwapLeadingAxes, x),
                        Tensor(std::move(shape), std::move(out)));
}

inline kernels::Im2ColGeometry im2col_geometry(const Shape& input,
                                               std::size_t kernel_h,
                                               std::size_t kernel_w,
                                               std::size_t stride,
                                               std::size_t pad) {
  if (input.size() != 4) {
    throw RankError("im2col needs a b x c x h x w input, got " +
                    to_string(input));
  }
  if (stride == 0 || kernel_h == 0 || kernel_w == 0) {
    throw GeometryError("im2col: kernel extents and stride must be positive");
  }
  kernels::Im2ColGeometry g;
  g.batch = input[0];
  g.channels = input[1];
  g.height = input[2];
  g.width = input[3];
  g.kernel_h = kernel_h;
  g.kernel_w = kernel_w;
  g.stride = stride;
  g.pad = pad;
  const std::size_t span_h = g.height + 2 * pad;
  const std::size_t span_w = g.width + 2 * pad;
  if (span_h < kernel_h || span_w < kernel_w ||
      (span_h - kernel_h) % stride != 0 || (span_w - kernel_w) % stride != 0) {
    throw GeometryError("im2col: input " + to_string(input) + " with kernel " +
                        std::to_string(kernel_h) + "x" +
                        std::to_string(kernel_w) + ", stride " +
                        std::to_string(stride) + ", pad " +
                        std::to_string(pad) +
                        " does not give an integral output extent");
  }
  g.out_h = (span_h - kernel_h) / stride + 1;
  g.out_w = (span_w - kernel_w) / stride + 1;
  return g;
}

/// [b x c x h x w] -> [(b*oh*ow) x (c*kh*kw)], zero padded.
inline Tensor im2col(const Tensor& x, std::size_t kernel_h,
                     std::size_t kernel_w, std::size_t stride,
                     std::size_t pad) {
  const auto g = im2col_geometry(x.shape(), kernel_h, kernel_w, stride, pad);
  std::vector<double> out(g.rows() * g.cols(), 0.0);
  kernels::im2col(g, x.data(), out);
  Tape* tape = detail::tape_of(x);
  Tensor result({g.rows(), g.cols()}, std::move(out));
  if (tape == nullptr) return result;
  auto node = detail::unary_node(OpKind::kIm2Col, x);
  node.geometry = g;
  return detail::record(tape, std::move(node), std::move(result));
}

inline void backward(const Tensor& loss) {
  if (loss.rank() != 0) {
    throw RankError("backward() needs a scalar loss, got " +
                    to_string(loss.shape()));
  }
  if (!loss.on_tape()) throw TapeError("backward() loss is not on a tape");
  loss.tape()->backward(loss);
}

}  // namespace eigennet
