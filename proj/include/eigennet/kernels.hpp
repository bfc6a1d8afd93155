// Copyright 2026 The eigennet Authors
// SPDX-License-Identifier: Apache-2.0

// Dense kernels shared by the forward ops and their backward rules. Matrix
// products are delegated to Eigen over row-major views of the raw buffers.

#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <span>

namespace eigennet::kernels {

using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatrixView = Eigen::Map<const RowMatrix>;
using MatrixView = Eigen::Map<RowMatrix>;

inline ConstMatrixView view(std::span<const double> data, std::size_t rows,
                            std::size_t cols) {
  return ConstMatrixView(data.data(), static_cast<Eigen::Index>(rows),
                         static_cast<Eigen::Index>(cols));
}

inline MatrixView view(std::span<double> data, std::size_t rows,
                       std::size_t cols) {
  return MatrixView(data.data(), static_cast<Eigen::Index>(rows),
                    static_cast<Eigen::Index>(cols));
}

// out = a * b
inline void gemm(std::span<const double> a, std::span<const double> b,
                 std::span<double> out, std::size_t m, std::size_t k,
                 std::size_t n) {
  view(out, m, n).noalias() = view(a, m, k) * view(b, k, n);
}

// acc += grad * b^T, a is m x k, b is k x n, grad is m x n
inline void gemm_grad_lhs(std::span<const double> grad,
                          std::span<const double> b, std::span<double> acc,
                          std::size_t m, std::size_t k, std::size_t n) {
  view(acc, m, k).noalias() += view(grad, m, n) * view(b, k, n).transpose();
}

// acc += a^T * grad
inline void gemm_grad_rhs(std::span<const double> a,
                          std::span<const double> grad, std::span<double> acc,
                          std::size_t m, std::size_t k, std::size_t n) {
  view(acc, k, n).noalias() += view(a, m, k).transpose() * view(grad, m, n);
}

// out = m^T m - I, m is rows x cols
inline void gram_minus_identity(std::span<const double> m,
                                std::span<double> out, std::size_t rows,
                                std::size_t cols) {
  auto g = view(out, cols, cols);
  g.setZero();
  g.selfadjointView<Eigen::Lower>().rankUpdate(view(m, rows, cols).transpose());
  g.triangularView<Eigen::StrictlyUpper>() = g.transpose();
  g.diagonal().array() -= 1.0;
}

// acc += scale * m * d
inline void gram_grad(std::span<const double> m, std::span<const double> d,
                      double scale, std::span<double> acc, std::size_t rows,
                      std::size_t cols) {
  view(acc, rows, cols).noalias() +=
      scale * (view(m, rows, cols) * view(d, cols, cols));
}

struct Im2ColGeometry {
  std::size_t batch = 0;
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t kernel_h = 0;
  std::size_t kernel_w = 0;
  std::size_t stride = 1;
  std::size_t pad = 0;
  std::size_t out_h = 0;
  std::size_t out_w = 0;

  std::size_t rows() const { return batch * out_h * out_w; }
  std::size_t cols() const { return channels * kernel_h * kernel_w; }
};

// Row (b, oy, ox) holds the receptive field flattened channel-major, then
// kernel-row-major. Out-of-image taps read as zero.
template <typename Visit>
void for_each_tap(const Im2ColGeometry& g, Visit&& visit) {
  const std::size_t cols = g.cols();
  for (std::size_t b = 0; b < g.batch; ++b) {
    for (std::size_t oy = 0; oy < g.out_h; ++oy) {
      for (std::size_t ox = 0; ox < g.out_w; ++ox) {
        const std::size_t row = (b * g.out_h + oy) * g.out_w + ox;
        for (std::size_t c = 0; c < g.channels; ++c) {
          for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
            const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                            static_cast<std::ptrdiff_t>(g.pad);
            for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
              const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                              static_cast<std::ptrdiff_t>(g.pad);
              const std::size_t col = (c * g.kernel_h + ky) * g.kernel_w + kx;
              if (iy < 0 || ix < 0 ||
                  iy >= static_cast<std::ptrdiff_t>(g.height) ||
                  ix >= static_cast<std::ptrdiff_t>(g.width)) {
                continue;
              }
              const std::size_t src =
                  ((b * g.channels + c) * g.height +
                   static_cast<std::size_t>(iy)) *
                      g.width +
                  static_cast<std::size_t>(ix);
              visit(row * cols + col, src);
            }
          }
        }
      }
    }
  }
}

inline void im2col(const Im2ColGeometry& g, std::span<const double> image,
                   std::span<double> columns) {
  for_each_tap(g, [&](std::size_t dst, std::size_t src) {
    columns[dst] = image[src];
  });
}

inline void col2im_accumulate(const Im2ColGeometry& g,
                              std::span<const double> columns,
                              std::span<double> image) {
  for_each_tap(g, [&](std::size_t dst, std::size_t src) {
    image[src] += columns[dst];
  });
}

}  // namespace eigennet::kernels
