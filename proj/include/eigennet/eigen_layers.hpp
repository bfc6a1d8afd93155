// Copyright 2026 The eigennet Authors
// SPDX-License-Identifier: Apache-2.0

// Eigenbasis-parameterized layers: W = Q diag(lambda) P^T with thin factors
// Q (m x r), P (n x r), r = min(m, n), kept near-orthonormal by a Gram
// penalty.

#pragma once

#include <Eigen/Core>
#include <Eigen/QR>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "eigennet/errors.hpp"
#include "eigennet/ops.hpp"
#include "eigennet/parameter.hpp"
#include "eigennet/tensor.hpp"

namespace eigennet {

/// Orthonormal m x r columns from a seeded Gaussian draw. The QR sign
/// ambiguity is fixed by making R's diagonal positive.
inline Tensor init_orthonormal(std::size_t m, std::size_t r,
                               std::uint64_t seed) {
  if (r == 0 || m < r) {
    throw FactorShapeError("init_orthonormal: cannot fit " + std::to_string(r) +
                           " orthonormal columns in dimension " +
                           std::to_string(m));
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  kernels::RowMatrix draw(m, r);
  for (Eigen::Index i = 0; i < draw.rows(); ++i) {
    for (Eigen::Index j = 0; j < draw.cols(); ++j) draw(i, j) = gauss(rng);
  }
  Eigen::HouseholderQR<kernels::RowMatrix> qr(draw);
  kernels::RowMatrix q = qr.householderQ() * kernels::RowMatrix::Identity(
                                                 static_cast<Eigen::Index>(m),
                                                 static_cast<Eigen::Index>(r));
  const kernels::RowMatrix& packed = qr.matrixQR();
  for (Eigen::Index j = 0; j < q.cols(); ++j) {
    if (packed(j, j) < 0.0) q.col(j) *= -1.0;
  }
  return Tensor({m, r}, std::vector<double>(q.data(), q.data() + q.size()));
}

/// Frobenius norm of M^T M - I (not squared).
inline double orth_drift(const Tensor& factor) {
  return std::sqrt(gram_orth_penalty(detach(factor)).item());
}

struct EigenLinear {
  Tensor Q;
  Tensor lambda;
  Tensor P;
  std::optional<Tensor> bias;

  std::size_t out_features() const { return Q.dim(0); }
  std::size_t in_features() const { return P.dim(0); }
  std::size_t rank() const { return lambda.dim(0); }

  /// Fresh layer: orthonormal factors, unit spectrum, zero bias.
  static EigenLinear create(std::size_t in_features, std::size_t out_features,
                            std::uint64_t seed, bool with_bias = true) {
    const std::size_t r = std::min(in_features, out_features);
    EigenLinear layer;
    layer.Q = init_orthonormal(out_features, r, seed);
    layer.P = init_orthonormal(in_features, r, seed ^ 0x9e3779b97f4a7c15ULL);
    layer.lambda = Tensor::full({r}, 1.0);
    if (with_bias) layer.bias = Tensor::zeros({out_features});
    return layer;
  }

  void validate() const {
    const std::size_t m = Q.rank() == 2 ? Q.dim(0) : 0;
    const std::size_t n = P.rank() == 2 ? P.dim(0) : 0;
    const std::size_t r = std::min(m, n);
    if (Q.rank() != 2 || P.rank() != 2 || lambda.rank() != 1 || Q.dim(1) != r ||
        P.dim(1) != r || lambda.dim(0) != r ||
        (bias && bias->shape() != Shape{m})) {
      throw DimensionError("EigenLinear: inconsistent factors Q" +
                           to_string(Q.shape()) + " lambda" +
                           to_string(lambda.shape()) + " P" +
                           to_string(P.shape()));
    }
  }

  ParameterList parameters(const std::string& prefix) const {
    ParameterList out{{prefix + ".Q", Q, true},
                      {prefix + ".lambda", lambda, true},
                      {prefix + ".P", P, true}};
    if (bias) out.push_back({prefix + ".bias", *bias, false});
    return out;
  }

  EigenLinear clone() const {
    EigenLinear copy{Q.clone(), lambda.clone(), P.clone(), std::nullopt};
    if (bias) copy.bias = bias->clone();
    return copy;
  }
};

struct ConvGeometry {
  std::size_t out_channels = 0;
  std::size_t in_channels = 0;
  std::size_t kernel_h = 0;
  std::size_t kernel_w = 0;
  std::size_t stride = 1;
  std::size_t pad = 0;

  std::size_t patch_size() const { return in_channels * kernel_h * kernel_w; }
};

/// Convolution whose (out_ch) x (in_ch*kh*kw) weight matrix is an
/// EigenLinear.
struct EigenConv2d {
  ConvGeometry geometry;
  EigenLinear inner;

  static EigenConv2d create(const ConvGeometry& geometry, std::uint64_t seed,
                            bool with_bias = true) {
    return {geometry, EigenLinear::create(geometry.patch_size(),
                                          geometry.out_channels, seed,
                                          with_bias)};
  }

  void validate() const {
    inner.validate();
    if (inner.out_features() != geometry.out_channels ||
        inner.in_features() != geometry.patch_size()) {
      throw DimensionError("EigenConv2d: factor shapes do not match geometry");
    }
  }

  ParameterList parameters(const std::string& prefix) const {
    return inner.parameters(prefix);
  }

  EigenConv2d clone() const { return {geometry, inner.clone()}; }
};

/// W = scale_columns(Q, lambda) * P^T, materialized.
inline Tensor reconstruct_weight(const EigenLinear& layer) {
  return matmul(scale_columns(layer.Q, layer.lambda), transpose(layer.P));
}

namespace detail {

// m x k plus bias broadcast across the k columns, written as the outer
// product bias * 1^T so it stays within the recorded op set.
inline Tensor add_row_bias(const Tensor& z, const Tensor& bias) {
  const Tensor column = reshape(bias, {bias.size(), 1});
  return add(z, matmul(column, Tensor::full({1, z.dim(1)}, 1.0)));
}

}  // namespace detail

/// z = Q (diag(lambda) (P^T x)) + bias for x of shape n x batch. W is never
/// formed.
inline Tensor forward_linear(const EigenLinear& layer, const Tensor& x) {
  if (x.rank() != 2 || x.dim(0) != layer.in_features()) {
    throw DimensionError("forward_linear: layer expects " +
                         std::to_string(layer.in_features()) +
                         " x batch input, got " + to_string(x.shape()));
  }
  const Tensor coords = matmul(transpose(layer.P), x);
  Tensor z = matmul(scale_columns(layer.Q, layer.lambda), coords);
  if (layer.bias) z = detail::add_row_bias(z, *layer.bias);
  return z;
}

/// b x c x h x w -> b x out_ch x oh x ow via im2col and the factored map.
inline Tensor forward_conv(const EigenConv2d& layer, const Tensor& x) {
  const auto& g = layer.geometry;
  if (x.rank() != 4 || x.dim(1) != g.in_channels) {
    throw DimensionError("forward_conv: layer expects b x " +
                         std::to_string(g.in_channels) + " x h x w, got " +
                         to_string(x.shape()));
  }
  const auto geo = im2col_geometry(x.shape(), g.kernel_h, g.kernel_w, g.stride,
                                   g.pad);
  const Tensor columns = im2col(x, g.kernel_h, g.kernel_w, g.stride, g.pad);
  const Tensor z = forward_linear(layer.inner, transpose(columns));
  const std::size_t batch = x.dim(0);
  const Tensor grouped =
      reshape(z, {g.out_channels, batch, geo.out_h * geo.out_w});
  return reshape(swap_leading_axes(grouped),
                 {batch, g.out_channels, geo.out_h, geo.out_w});
}

/// ||Q^T Q - I||_F^2 + ||P^T P - I||_F^2.
inline Tensor layer_orth_penalty(const EigenLinear& layer) {
  return add(gram_orth_penalty(layer.Q), gram_orth_penalty(layer.P));
}

inline Tensor layer_orth_penalty(const EigenConv2d& layer) {
  return layer_orth_penalty(layer.inner);
}

inline double layer_orth_drift(const EigenLinear& layer) {
  return std::max(orth_drift(layer.Q), orth_drift(layer.P));
}

/// Raw factor entries minus the r(r+1)/2 orthonormality constraints on each
/// of Q and P. Equals m*n whenever r = min(m, n).
inline std::size_t effective_dof(std::size_t m, std::size_t n, std::size_t r) {
  return m * r + n * r + r - 2 * (r * (r + 1) / 2);
}

inline std::size_t effective_dof(const EigenLinear& layer) {
  return effective_dof(layer.out_features(), layer.in_features(), layer.rank());
}

inline std::size_t effective_dof(const EigenConv2d& layer) {
  return effective_dof(layer.inner);
}

/// Number of stored factor values (Q, lambda, P), bias excluded.
inline std::size_t stored_factor_count(const EigenLinear& layer) {
  return layer.Q.size() + layer.lambda.size() + layer.P.size();
}

inline std::size_t stored_factor_count(const EigenConv2d& layer) {
  return stored_factor_count(layer.inner);
}

/// Mean-pool (feature maps only) followed by one dense map to class logits.
struct LocalHead {
  Tensor W;  // classes x features
  Tensor b;  // classes

  std::size_t classes() const { return W.dim(0); }
  std::size_t features() const { return W.dim(1); }

  static LocalHead create(std::size_t features, std::size_t classes,
                          std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(
        0.0, 1.0 / std::sqrt(static_cast<double>(features)));
    std::vector<double> w(classes * features);
    for (double& v : w) v = gauss(rng);
    return {Tensor({classes, features}, std::move(w)), Tensor::zeros({classes})};
  }

  ParameterList parameters(const std::string& prefix) const {
    return {{prefix + ".W", W, true}, {prefix + ".b", b, false}};
  }

  LocalHead clone() const { return {W.clone(), b.clone()}; }
};

/// Spatial mean of b x c x h x w, returned as c x b.
inline Tensor spatial_mean_pool(const Tensor& h) {
  if (h.rank() != 4) throw RankError("spatial_mean_pool needs a feature map");
  const std::size_t batch = h.dim(0), channels = h.dim(1);
  const std::size_t area = h.dim(2) * h.dim(3);
  const Tensor flat = reshape(h, {batch * channels, area});
  const Tensor pooled =
      matmul(flat, Tensor::full({area, 1}, 1.0 / static_cast<double>(area)));
  return transpose(reshape(pooled, {batch, channels}));
}

/// Logits (batch x classes) from features (features x batch) or feature maps
/// (batch x c x h x w).
inline Tensor head_forward(const LocalHead& head, const Tensor& h) {
  Tensor features;
  if (h.rank() == 4) {
    features = spatial_mean_pool(h);
  } else if (h.rank() == 2) {
    features = h;
  } else {
    throw RankError("head_forward: unsupported input " + to_string(h.shape()));
  }
  if (features.dim(0) != head.features()) {
    throw DimensionError("head_forward: head expects " +
                         std::to_string(head.features()) + " features, got " +
                         to_string(h.shape()));
  }
  const Tensor logits = detail::add_row_bias(matmul(head.W, features), head.b);
  return transpose(logits);
}

}  // namespace eigennet
