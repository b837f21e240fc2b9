// Copyright 2026 The pelab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <algorithm>

#include "ops_internal.hpp"

namespace pelab {

Index conv_output_length(Index length, Index kernel, Index stride) {
  if (kernel < 1 || stride < 1) {
    throw ConfigError("conv kernel and stride must be >= 1 (kernel " + std::to_string(kernel) +
                      ", stride " + std::to_string(stride) + ")");
  }
  const Index padded = length + kernel - 1;
  if (kernel > padded) {
    throw ShapeError("conv kernel " + std::to_string(kernel) + " longer than padded input " +
                     std::to_string(padded) + ": empty output");
  }
  return (padded - kernel) / stride + 1;
}

namespace {

// Patch extraction for a same-padded strided 1-D convolution over a
// [channels, length] slab. Columns are output positions; patch rows are
// `ld` apart so several items can share one matrix.
struct Geometry1d {
  Index channels, length, kernel, stride, pad, out_length;

  Index taps() const { return kernel; }
  Index in_spatial() const { return length; }
  Index out_spatial() const { return out_length; }

  // Output positions [lo, hi) of tap k that read inside the input.
  void valid_range(Index k, Index& lo, Index& hi) const {
    const Index off = k - pad;
    lo = off >= 0 ? 0 : (-off + stride - 1) / stride;
    hi = length - 1 - off < 0 ? 0 : std::min(out_length, (length - 1 - off) / stride + 1);
    lo = std::min(lo, hi);
  }

  template <typename Scalar>
  void im2col(const Scalar* x, Scalar* cols, Index ld) const {
    for (Index k = 0; k < kernel; ++k) {
      Index lo, hi;
      valid_range(k, lo, hi);
      const Index off = k - pad;
      for (Index c = 0; c < channels; ++c) {
        const Scalar* xc = x + c * length;
        Scalar* row = cols + (c * kernel + k) * ld;
        std::fill(row, row + lo, Scalar(0));
        if (stride == 1) {
          std::copy(xc + lo + off, xc + hi + off, row + lo);
        } else {
          for (Index l = lo; l < hi; ++l) row[l] = xc[l * stride + off];
        }
        std::fill(row + hi, row + out_length, Scalar(0));
      }
    }
  }

  template <typename Scalar>
  void col2im(const Scalar* cols, Scalar* x, Index ld) const {
    for (Index k = 0; k < kernel; ++k) {
      Index lo, hi;
      valid_range(k, lo, hi);
      const Index off = k - pad;
      for (Index c = 0; c < channels; ++c) {
        Scalar* xc = x + c * length;
        const Scalar* row = cols + (c * kernel + k) * ld;
        for (Index l = lo; l < hi; ++l) xc[l * stride + off] += row[l];
      }
    }
  }
};

// Same-padded stride-1 2-D patches over a [channels, T, F] slab.
struct Geometry2d {
  Index channels, rows, cols_f, kt, kf;

  Index taps() const { return kt * kf; }
  Index in_spatial() const { return rows * cols_f; }
  Index out_spatial() const { return rows * cols_f; }

  template <typename Scalar>
  void im2col(const Scalar* x, Scalar* cols, Index ld) const {
    const Index pt = same_pad_left(kt);
    const Index pf = same_pad_left(kf);
    const Index sp = rows * cols_f;
    for (Index c = 0; c < channels; ++c) {
      const Scalar* xc = x + c * sp;
      for (Index a = 0; a < kt; ++a) {
        for (Index b = 0; b < kf; ++b) {
          Scalar* row = cols + ((c * kt + a) * kf + b) * ld;
          for (Index t = 0; t < rows; ++t) {
            const Index st = t + a - pt;
            Scalar* dst = row + t * cols_f;
            if (st < 0 || st >= rows) {
              std::fill(dst, dst + cols_f, Scalar(0));
              continue;
            }
            for (Index f = 0; f < cols_f; ++f) {
              const Index sf = f + b - pf;
              dst[f] = (sf >= 0 && sf < cols_f) ? xc[st * cols_f + sf] : Scalar(0);
            }
          }
        }
      }
    }
  }

  template <typename Scalar>
  void col2im(const Scalar* cols, Scalar* x, Index ld) const {
    const Index pt = same_pad_left(kt);
    const Index pf = same_pad_left(kf);
    const Index sp = rows * cols_f;
    for (Index c = 0; c < channels; ++c) {
      Scalar* xc = x + c * sp;
      for (Index a = 0; a < kt; ++a) {
        for (Index b = 0; b < kf; ++b) {
          const Scalar* row = cols + ((c * kt + a) * kf + b) * ld;
          for (Index t = 0; t < rows; ++t) {
            const Index st = t + a - pt;
            if (st < 0 || st >= rows) continue;
            const Scalar* src = row + t * cols_f;
            for (Index f = 0; f < cols_f; ++f) {
              const Index sf = f + b - pf;
              if (sf >= 0 && sf < cols_f) xc[st * cols_f + sf] += src[f];
            }
          }
        }
      }
    }
  }
};

template <typename Scalar>
void check_bias(const Var<Scalar>& bias, Index channels, const char* op) {
  if (bias.defined() && (bias.value().rank() != 1 || bias.shape()[0] != channels)) {
    throw ShapeError(std::string(op) + " bias shape " + shape_to_string(bias.shape()) +
                     " does not match " + std::to_string(channels) + " output channels");
  }
}

template <typename Scalar>
std::vector<Var<Scalar>> inputs_of(const Var<Scalar>& x, const Var<Scalar>& w, const Var<Scalar>& b) {
  std::vector<Var<Scalar>> in{x, w};
  if (b.defined()) in.push_back(b);
  return in;
}

// Batch items per GEMM so that the patch matrix stays near 4M scalars.
inline Index gemm_chunk(Index batch, Index rows, Index cols_per_item) {
  const Index per = std::max<Index>(1, rows * cols_per_item);
  return std::clamp<Index>((Index(1) << 22) / per, 1, std::max<Index>(batch, 1));
}

// Copies [c, sp] blocks of items [n0, n0+nb) of a [batch, c, sp] buffer
// side by side into a [c, nb*sp] matrix, or back (accumulating).
template <typename Scalar, typename Mat>
void gather_items(const Scalar* src, Index n0, Index nb, Index c, Index sp, Mat& dst) {
  for (Index j = 0; j < nb; ++j) {
    dst.middleCols(j * sp, sp) =
        Eigen::Map<const Mat>(src + (n0 + j) * c * sp, c, sp);
  }
}

// y[n] = W [C_out, C*taps] . im2col(x[n]) + bias, for x of shape
// [batch, C, in_spatial]; items are processed in column-stacked chunks.
template <typename Scalar, typename Geometry>
Var<Scalar> conv_forward(const char* op, const Var<Scalar>& x, const Var<Scalar>& w,
                         const Var<Scalar>& bias, Index batch, const Geometry& geo,
                         Shape out_shape) {
  using Mat = typename Tensor<Scalar>::RowMatrix;
  const Index c_out = w.shape()[0];
  const Index kdim = geo.channels * geo.taps();
  const Index in_block = geo.channels * geo.in_spatial();
  const Index out_sp = geo.out_spatial();
  const Index chunk = gemm_chunk(batch, kdim, out_sp);
  Tensor<Scalar> out(out_shape);
  {
    Mat cols(kdim, chunk * out_sp);
    Mat y(c_out, chunk * out_sp);
    const auto wm = w.value().matrix(c_out, kdim);
    for (Index n0 = 0; n0 < batch; n0 += chunk) {
      const Index nb = std::min(chunk, batch - n0);
      for (Index j = 0; j < nb; ++j) {
        geo.im2col(x.value().data() + (n0 + j) * in_block, cols.data() + j * out_sp, cols.cols());
      }
      y.leftCols(nb * out_sp).noalias() = wm * cols.leftCols(nb * out_sp);
      for (Index j = 0; j < nb; ++j) {
        auto yn = out.matrix(c_out, out_sp, (n0 + j) * c_out * out_sp);
        yn = y.middleCols(j * out_sp, out_sp);
        if (bias.defined()) yn.colwise() += bias.value().array().matrix();
      }
    }
  }
  return record_op<Scalar>(op, std::move(out), inputs_of(x, w, bias),
                           [x, w, bias, batch, geo, c_out, kdim, in_block, out_sp, chunk](
                               const Tensor<Scalar>& g) mutable {
                             Mat cols(kdim, chunk * out_sp);
                             Mat gcols(kdim, chunk * out_sp);
                             Mat gm(c_out, chunk * out_sp);
                             const auto wm = w.value().matrix(c_out, kdim);
                             for (Index n0 = 0; n0 < batch; n0 += chunk) {
                               const Index nb = std::min(chunk, batch - n0);
                               const Index width = nb * out_sp;
                               gather_items(g.data(), n0, nb, c_out, out_sp, gm);
                               if (w.requires_grad()) {
                                 for (Index j = 0; j < nb; ++j) {
                                   geo.im2col(x.value().data() + (n0 + j) * in_block,
                                              cols.data() + j * out_sp, cols.cols());
                                 }
                                 w.grad_buffer().matrix(c_out, kdim).noalias() +=
                                     gm.leftCols(width) * cols.leftCols(width).transpose();
                               }
                               if (x.requires_grad()) {
                                 gcols.leftCols(width).noalias() = wm.transpose() * gm.leftCols(width);
                                 for (Index j = 0; j < nb; ++j) {
                                   geo.col2im(gcols.data() + j * out_sp,
                                              x.grad_buffer().data() + (n0 + j) * in_block, gcols.cols());
                                 }
                               }
                               if (bias.requires_grad()) {
                                 bias.grad_buffer().array() += gm.leftCols(width).rowwise().sum().array();
                               }
                             }
                           });
}

// Adjoint of conv_forward: y[n] = col2im(W^T . x[n]) + bias, with
// x of shape [batch, C_in, out_spatial] and W of shape [C_in, C_out, taps].
template <typename Scalar, typename Geometry>
Var<Scalar> conv_transpose_forward(const char* op, const Var<Scalar>& x, const Var<Scalar>& w,
                                   const Var<Scalar>& bias, Index batch, const Geometry& geo,
                                   Shape out_shape) {
  using Mat = typename Tensor<Scalar>::RowMatrix;
  const Index c_in = w.shape()[0];
  const Index kdim = geo.channels * geo.taps();
  const Index x_sp = geo.out_spatial();
  const Index y_block = geo.channels * geo.in_spatial();
  const Index chunk = gemm_chunk(batch, kdim, x_sp);
  Tensor<Scalar> out(out_shape);
  {
    Mat xm(c_in, chunk * x_sp);
    Mat cols(kdim, chunk * x_sp);
    const auto wm = w.value().matrix(c_in, kdim);
    for (Index n0 = 0; n0 < batch; n0 += chunk) {
      const Index nb = std::min(chunk, batch - n0);
      gather_items(x.value().data(), n0, nb, c_in, x_sp, xm);
      cols.leftCols(nb * x_sp).noalias() = wm.transpose() * xm.leftCols(nb * x_sp);
      for (Index j = 0; j < nb; ++j) {
        geo.col2im(cols.data() + j * x_sp, out.data() + (n0 + j) * y_block, cols.cols());
        if (bias.defined()) {
          out.matrix(geo.channels, geo.in_spatial(), (n0 + j) * y_block).colwise() +=
              bias.value().array().matrix();
        }
      }
    }
  }
  return record_op<Scalar>(op, std::move(out), inputs_of(x, w, bias),
                           [x, w, bias, batch, geo, c_in, kdim, x_sp, y_block, chunk](
                               const Tensor<Scalar>& g) mutable {
                             Mat cols(kdim, chunk * x_sp);
                             Mat xm(c_in, chunk * x_sp);
                             Mat gx(c_in, chunk * x_sp);
                             const auto wm = w.value().matrix(c_in, kdim);
                             for (Index n0 = 0; n0 < batch; n0 += chunk) {
                               const Index nb = std::min(chunk, batch - n0);
                               const Index width = nb * x_sp;
                               for (Index j = 0; j < nb; ++j) {
                                 geo.im2col(g.data() + (n0 + j) * y_block, cols.data() + j * x_sp, cols.cols());
                                 if (bias.requires_grad()) {
                                   bias.grad_buffer().array() +=
                                       g.matrix(geo.channels, geo.in_spatial(), (n0 + j) * y_block)
                                           .rowwise().sum().array();
                                 }
                               }
                               if (x.requires_grad()) {
                                 gx.leftCols(width).noalias() = wm * cols.leftCols(width);
                                 for (Index j = 0; j < nb; ++j) {
                                   x.grad_buffer().matrix(c_in, x_sp, (n0 + j) * c_in * x_sp) +=
                                       gx.middleCols(j * x_sp, x_sp);
                                 }
                               }
                               if (w.requires_grad()) {
                                 gather_items(x.value().data(), n0, nb, c_in, x_sp, xm);
                                 w.grad_buffer().matrix(c_in, kdim).noalias() +=
                                     xm.leftCols(width) * cols.leftCols(width).transpose();
                               }
                             }
                           });
}

}  // namespace

template <typename Scalar>
Var<Scalar> conv1d(const Var<Scalar>& x, const Var<Scalar>& w, const Var<Scalar>& bias, Index stride) {
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  const bool batched = xs.size() == 3;
  if ((xs.size() != 2 && !batched) || ws.size() != 3 || ws[1] != xs[xs.size() - 2]) {
    throw ShapeError("conv1d shape mismatch: input " + shape_to_string(xs) + ", weight " +
                     shape_to_string(ws));
  }
  check_bias(bias, ws[0], "conv1d");
  const Index batch = batched ? xs[0] : 1;
  const Index length = xs.back();
  const Index kernel = ws[2];
  const Index out_len = conv_output_length(length, kernel, stride);
  Geometry1d geo{ws[1], length, kernel, stride, same_pad_left(kernel), out_len};
  Shape out_shape = batched ? Shape{batch, ws[0], out_len} : Shape{ws[0], out_len};
  return conv_forward<Scalar>("conv1d", x, w, bias, batch, geo, std::move(out_shape));
}

template <typename Scalar>
Var<Scalar> conv_transpose1d(const Var<Scalar>& x, const Var<Scalar>& w, const Var<Scalar>& bias,
                             Index stride, std::optional<Index> output_length) {
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  const bool batched = xs.size() == 3;
  if ((xs.size() != 2 && !batched) || ws.size() != 3 || ws[0] != xs[xs.size() - 2]) {
    throw ShapeError("conv_transpose1d shape mismatch: input " + shape_to_string(xs) +
                     ", weight " + shape_to_string(ws));
  }
  check_bias(bias, ws[1], "conv_transpose1d");
  const Index batch = batched ? xs[0] : 1;
  const Index length = xs.back();
  const Index kernel = ws[2];
  Index out_len = output_length.value_or(stride == 1 ? length : (length - 1) * stride + 1);
  if (out_len < 1 || conv_output_length(out_len, kernel, stride) != length) {
    throw ShapeError("conv_transpose1d output length " + std::to_string(out_len) +
                     " is inconsistent with input length " + std::to_string(length) +
                     " at stride " + std::to_string(stride));
  }
  Geometry1d geo{ws[1], out_len, kernel, stride, same_pad_left(kernel), length};
  Shape out_shape = batched ? Shape{batch, ws[1], out_len} : Shape{ws[1], out_len};
  return conv_transpose_forward<Scalar>("conv_transpose1d", x, w, bias, batch, geo,
                                        std::move(out_shape));
}

template <typename Scalar>
Var<Scalar> conv2d(const Var<Scalar>& x, const Var<Scalar>& w, const Var<Scalar>& bias) {
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  const bool batched = xs.size() == 4;
  if ((xs.size() != 3 && !batched) || ws.size() != 4 || ws[1] != xs[xs.size() - 3]) {
    throw ShapeError("conv2d shape mismatch: input " + shape_to_string(xs) + ", weight " +
                     shape_to_string(ws));
  }
  check_bias(bias, ws[0], "conv2d");
  const Index batch = batched ? xs[0] : 1;
  const Index rows = xs[xs.size() - 2];
  const Index cols = xs.back();
  Geometry2d geo{ws[1], rows, cols, ws[2], ws[3]};
  Shape out_shape = batched ? Shape{batch, ws[0], rows, cols} : Shape{ws[0], rows, cols};
  return conv_forward<Scalar>("conv2d", x, w, bias, batch, geo, std::move(out_shape));
}

template <typename Scalar>
Var<Scalar> conv_transpose2d(const Var<Scalar>& x, const Var<Scalar>& w, const Var<Scalar>& bias) {
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  const bool batched = xs.size() == 4;
  if ((xs.size() != 3 && !batched) || ws.size() != 4 || ws[0] != xs[xs.size() - 3]) {
    throw ShapeError("conv_transpose2d shape mismatch: input " + shape_to_string(xs) +
                     ", weight " + shape_to_string(ws));
  }
  check_bias(bias, ws[1], "conv_transpose2d");
  const Index batch = batched ? xs[0] : 1;
  const Index rows = xs[xs.size() - 2];
  const Index cols = xs.back();
  Geometry2d geo{ws[1], rows, cols, ws[2], ws[3]};
  Shape out_shape = batched ? Shape{batch, ws[1], rows, cols} : Shape{ws[1], rows, cols};
  return conv_transpose_forward<Scalar>("conv_transpose2d", x, w, bias, batch, geo,
                                        std::move(out_shape));
}

#define PELAB_INSTANTIATE(S)                                                                   \
  template Var<S> conv1d(const Var<S>&, const Var<S>&, const Var<S>&, Index);                  \
  template Var<S> conv_transpose1d(const Var<S>&, const Var<S>&, const Var<S>&, Index,         \
                                   std::optional<Index>);                                      \
  template Var<S> conv2d(const Var<S>&, const Var<S>&, const Var<S>&);                         \
  template Var<S> conv_transpose2d(const Var<S>&, const Var<S>&, const Var<S>&);
PELAB_INSTANTIATE_FLOAT_DOUBLE(PELAB_INSTANTIATE)
#undef PELAB_INSTANTIATE

}  // namespace pelab
