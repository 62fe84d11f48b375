// Copyright 2026 The wavecap Authors
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

#include "wavecap/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace wavecap {
inline namespace WAVECAP_ABI {

namespace {

using Mat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<Mat>;
using CMapM = Eigen::Map<const Mat>;
using StridedMap = Eigen::Map<Mat, 0, Eigen::OuterStride<>>;
using CStridedMap = Eigen::Map<const Mat, 0, Eigen::OuterStride<>>;

using ImplPtr = std::shared_ptr<TensorImpl>;

bool wants_grad(const ImplPtr& p) { return p && p->requires_grad; }

void require(bool cond, const std::string& msg) {
  if (!cond) throw DimensionError(msg);
}

// Split a shape around an axis into (outer, size, inner).
struct AxisSplit {
  std::size_t outer = 1, size = 1, inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.size = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

}  // namespace

// ---------------------------------------------------------------------------
// Elementwise and structural

Tensor add(const Tensor& a, const Tensor& b) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  require(sb.size() <= sa.size() && std::equal(sb.begin(), sb.end(), sa.end() - sb.size()),
          "add: shape " + to_string(sb) + " does not broadcast onto " + to_string(sa));
  const std::size_t n = a.numel(), m = b.numel();
  std::vector<Real> out(a.data().begin(), a.data().end());
  const auto bd = b.data();
  for (std::size_t i = 0; i < n; ++i) out[i] += bd[i % m];
  ImplPtr ai = a.impl(), bi = b.impl();
  return make_result(sa, std::move(out), {a, b}, "add", [ai, bi, n, m](TensorImpl& o) {
    if (wants_grad(ai)) {
      Real* g = ai->grad_buffer();
      for (std::size_t i = 0; i < n; ++i) g[i] += o.grad[i];
    }
    if (wants_grad(bi)) {
      Real* g = bi->grad_buffer();
      for (std::size_t i = 0; i < n; ++i) g[i % m] += o.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), "sub: shape mismatch " + to_string(a.shape()) + " vs " +
                                      to_string(b.shape()));
  const std::size_t n = a.numel();
  std::vector<Real> out(n);
  const auto ad = a.data(), bd = b.data();
  for (std::size_t i = 0; i < n; ++i) out[i] = ad[i] - bd[i];
  ImplPtr ai = a.impl(), bi = b.impl();
  return make_result(a.shape(), std::move(out), {a, b}, "sub", [ai, bi, n](TensorImpl& o) {
    if (wants_grad(ai)) {
      Real* g = ai->grad_buffer();
      for (std::size_t i = 0; i < n; ++i) g[i] += o.grad[i];
    }
    if (wants_grad(bi)) {
      Real* g = bi->grad_buffer();
      for (std::size_t i = 0; i < n; ++i) g[i] -= o.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), "mul: shape mismatch " + to_string(a.shape()) + " vs " +
                                      to_string(b.shape()));
  const std::size_t n = a.numel();
  std::vector<Real> out(n);
  const auto ad = a.data(), bd = b.data();
  for (std::size_t i = 0; i < n; ++i) out[i] = ad[i] * bd[i];
  ImplPtr ai = a.impl(), bi = b.impl();
  return make_result(a.shape(), std::move(out), {a, b}, "mul", [ai, bi, n](TensorImpl& o) {
    if (wants_grad(ai)) {
      Real* g = ai->grad_buffer();
      for (std::size_t i = 0; i < n; ++i) g[i] += o.grad[i] * bi->data[i];
    }
    if (wants_grad(bi)) {
      Real* g = bi->grad_buffer();
      for (std::size_t i = 0; i < n; ++i) g[i] += o.grad[i] * ai->data[i];
    }
  });
}

Tensor scale(const Tensor& a, Real factor) {
  const std::size_t n = a.numel();
  std::vector<Real> out(n);
  const auto ad = a.data();
  for (std::size_t i = 0; i < n; ++i) out[i] = ad[i] * factor;
  ImplPtr ai = a.impl();
  return make_result(a.shape(), std::move(out), {a}, "scale", [ai, n, factor](TensorImpl& o) {
    Real* g = ai->grad_buffer();
    for (std::size_t i = 0; i < n; ++i) g[i] += o.grad[i] * factor;
  });
}

Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (Real v : a.data()) acc += v;
  ImplPtr ai = a.impl();
  const std::size_t n = a.numel();
  return make_result({1}, {static_cast<Real>(acc)}, {a}, "sum", [ai, n](TensorImpl& o) {
    Real* g = ai->grad_buffer();
    for (std::size_t i = 0; i < n; ++i) g[i] += o.grad[0];
  });
}

Tensor mean(const Tensor& a) { return scale(sum(a), Real(1) / static_cast<Real>(a.numel())); }

Tensor reshape(const Tensor& a, Shape shape) {
  require(numel(shape) == a.numel(),
          "reshape: cannot view " + to_string(a.shape()) + " as " + to_string(shape));
  ImplPtr ai = a.impl();
  const std::size_t n = a.numel();
  return make_result(std::move(shape), a.values(), {a}, "reshape", [ai, n](TensorImpl& o) {
    Real* g = ai->grad_buffer();
    for (std::size_t i = 0; i < n; ++i) g[i] += o.grad[i];
  });
}

Tensor permute(const Tensor& a, const std::vector<std::size_t>& axes) {
  const auto& in_shape = a.shape();
  const std::size_t rank = in_shape.size();
  require(axes.size() == rank, "permute: axis count mismatch");
  std::vector<bool> used(rank, false);
  for (auto ax : axes) {
    require(ax < rank && !used[ax], "permute: invalid axis list");
    used[ax] = true;
  }
  std::vector<std::size_t> in_strides(rank, 1);
  for (std::size_t i = rank; i-- > 1;) in_strides[i - 1] = in_strides[i] * in_shape[i];
  Shape out_shape(rank);
  std::vector<std::size_t> src_strides(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    out_shape[i] = in_shape[axes[i]];
    src_strides[i] = in_strides[axes[i]];
  }
  // Map from output flat index to input flat index.
  const std::size_t n = a.numel();
  std::vector<std::size_t> source(n);
  std::vector<std::size_t> idx(rank, 0);
  std::size_t offset = 0;
  for (std::size_t flat = 0; flat < n; ++flat) {
    source[flat] = offset;
    for (std::size_t d = rank; d-- > 0;) {
      ++idx[d];
      offset += src_strides[d];
      if (idx[d] < out_shape[d]) break;
      offset -= src_strides[d] * idx[d];
      idx[d] = 0;
    }
  }
  std::vector<Real> out(n);
  const auto ad = a.data();
  for (std::size_t i = 0; i < n; ++i) out[i] = ad[source[i]];
  ImplPtr ai = a.impl();
  return make_result(std::move(out_shape), std::move(out), {a}, "permute",
                     [ai, source = std::move(source)](TensorImpl& o) {
                       Real* g = ai->grad_buffer();
                       for (std::size_t i = 0; i < source.size(); ++i) g[source[i]] += o.grad[i];
                     });
}

Tensor transpose(const Tensor& a, std::size_t axis0, std::size_t axis1) {
  std::vector<std::size_t> axes(a.ndim());
  std::iota(axes.begin(), axes.end(), 0);
  require(axis0 < axes.size() && axis1 < axes.size(), "transpose: axis out of range");
  std::swap(axes[axis0], axes[axis1]);
  return permute(a, axes);
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  require(!parts.empty(), "concat: no inputs");
  Shape out_shape = parts.front().shape();
  require(axis < out_shape.size(), "concat: axis out of range");
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    require(p.ndim() == out_shape.size(), "concat: rank mismatch");
    for (std::size_t d = 0; d < out_shape.size(); ++d)
      if (d != axis)
        require(p.dim(d) == parts.front().dim(d),
                "concat: shape mismatch " + to_string(p.shape()) + " vs " +
                    to_string(parts.front().shape()));
    out_shape[axis] += p.dim(axis);
  }
  const auto out_split = split_at(out_shape, axis);
  std::vector<Real> out(numel(out_shape));
  std::vector<ImplPtr> impls;
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const auto s = split_at(p.shape(), axis);
    const std::size_t block = s.size * s.inner;
    const auto pd = p.data();
    for (std::size_t o = 0; o < s.outer; ++o)
      std::copy_n(pd.begin() + o * block, block,
                  out.begin() + o * out_split.size * out_split.inner + offset * out_split.inner);
    impls.push_back(p.impl());
    offsets.push_back(offset);
    offset += s.size;
  }
  return make_result(out_shape, std::move(out), parts, "concat",
                     [impls, offsets, out_split](TensorImpl& o) {
                       for (std::size_t k = 0; k < impls.size(); ++k) {
                         const auto& p = impls[k];
                         if (!wants_grad(p)) continue;
                         const std::size_t rows = p->data.size() / out_split.outer;
                         Real* g = p->grad_buffer();
                         for (std::size_t r = 0; r < out_split.outer; ++r)
                           for (std::size_t i = 0; i < rows; ++i)
                             g[r * rows + i] +=
                                 o.grad[r * out_split.size * out_split.inner +
                                        offsets[k] * out_split.inner + i];
                       }
                     });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.ndim() >= 2 && b.ndim() >= 2, "matmul: operands must be at least 2-D");
  const std::size_t m = a.dim(a.ndim() - 2), k = a.dim(a.ndim() - 1);
  const std::size_t k2 = b.dim(b.ndim() - 2), n = b.dim(b.ndim() - 1);
  require(k == k2, "matmul: inner dimensions differ: " + to_string(a.shape()) + " x " +
                       to_string(b.shape()));
  const std::size_t batch = a.numel() / (m * k);
  const bool shared_b = b.ndim() == 2;
  if (!shared_b) {
    require(b.ndim() == a.ndim() && std::equal(a.shape().begin(), a.shape().end() - 2,
                                               b.shape().begin()),
            "matmul: batch dimensions differ: " + to_string(a.shape()) + " x " +
                to_string(b.shape()));
  }
  Shape out_shape(a.shape().begin(), a.shape().end() - 2);
  out_shape.push_back(m);
  out_shape.push_back(n);
  std::vector<Real> out(batch * m * n);
  const Real* ad = a.data().data();
  const Real* bd = b.data().data();
  if (shared_b) {
    MapM(out.data(), batch * m, n).noalias() = CMapM(ad, batch * m, k) * CMapM(bd, k, n);
  } else {
    for (std::size_t i = 0; i < batch; ++i)
      MapM(out.data() + i * m * n, m, n).noalias() =
          CMapM(ad + i * m * k, m, k) * CMapM(bd + i * k * n, k, n);
  }
  ImplPtr ai = a.impl(), bi = b.impl();
  return make_result(std::move(out_shape), std::move(out), {a, b}, "matmul",
                     [ai, bi, batch, m, k, n, shared_b](TensorImpl& o) {
                       const Real* g = o.grad.data();
                       if (shared_b) {
                         CMapM go(g, batch * m, n);
                         if (wants_grad(ai))
                           MapM(ai->grad_buffer(), batch * m, k).noalias() +=
                               go * CMapM(bi->data.data(), k, n).transpose();
                         if (wants_grad(bi))
                           MapM(bi->grad_buffer(), k, n).noalias() +=
                               CMapM(ai->data.data(), batch * m, k).transpose() * go;
                         return;
                       }
                       for (std::size_t i = 0; i < batch; ++i) {
                         CMapM go(g + i * m * n, m, n);
                         if (wants_grad(ai))
                           MapM(ai->grad_buffer() + i * m * k, m, k).noalias() +=
                               go * CMapM(bi->data.data() + i * k * n, k, n).transpose();
                         if (wants_grad(bi))
                           MapM(bi->grad_buffer() + i * k * n, k, n).noalias() +=
                               CMapM(ai->data.data() + i * m * k, m, k).transpose() * go;
                       }
                     });
}

Tensor apply_mask(const Tensor& x, std::span<const std::uint8_t> valid, std::size_t channel_axis) {
  require(channel_axis < x.ndim(), "apply_mask: channel axis out of range");
  const auto s = split_at(x.shape(), channel_axis);
  require(valid.size() == s.outer * s.inner, "apply_mask: mask length mismatch");
  std::vector<Real> out(x.data().begin(), x.data().end());
  std::vector<std::uint8_t> keep(valid.begin(), valid.end());
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t c = 0; c < s.size; ++c)
      for (std::size_t i = 0; i < s.inner; ++i)
        if (!keep[o * s.inner + i]) out[(o * s.size + c) * s.inner + i] = Real(0);
  ImplPtr xi = x.impl();
  return make_result(x.shape(), std::move(out), {x}, "apply_mask",
                     [xi, s, keep = std::move(keep)](TensorImpl& o) {
                       Real* g = xi->grad_buffer();
                       for (std::size_t a = 0; a < s.outer; ++a)
                         for (std::size_t c = 0; c < s.size; ++c)
                           for (std::size_t i = 0; i < s.inner; ++i)
                             if (keep[a * s.inner + i]) {
                               const std::size_t f = (a * s.size + c) * s.inner + i;
                               g[f] += o.grad[f];
                             }
                     });
}

// ---------------------------------------------------------------------------
// Convolutions

std::size_t conv_output_length(std::size_t length, std::size_t kernel, std::size_t stride,
                               std::size_t padding, std::size_t dilation) {
  const std::size_t span = dilation * (kernel - 1) + 1;
  if (length + 2 * padding < span || stride == 0) return 0;
  return (length + 2 * padding - span) / stride + 1;
}

namespace {

// Columns of the 1D unfolding: row (c, j) holds x[c, t*stride + j*dil - pad].
void im2col_1d(const Real* x, std::size_t channels, std::size_t length, std::size_t kernel,
               const Conv1dOptions& opt, std::size_t out_len, Real* cols) {
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t j = 0; j < kernel; ++j) {
      Real* row = cols + (c * kernel + j) * out_len;
      for (std::size_t t = 0; t < out_len; ++t) {
        const auto pos = static_cast<std::ptrdiff_t>(t * opt.stride + j * opt.dilation) -
                         static_cast<std::ptrdiff_t>(opt.padding);
        row[t] = (pos >= 0 && pos < static_cast<std::ptrdiff_t>(length)) ? x[c * length + pos]
                                                                         : Real(0);
      }
    }
}

void col2im_1d(const Real* cols, std::size_t channels, std::size_t length, std::size_t kernel,
               const Conv1dOptions& opt, std::size_t out_len, Real* dx) {
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t j = 0; j < kernel; ++j) {
      const Real* row = cols + (c * kernel + j) * out_len;
      for (std::size_t t = 0; t < out_len; ++t) {
        const auto pos = static_cast<std::ptrdiff_t>(t * opt.stride + j * opt.dilation) -
                         static_cast<std::ptrdiff_t>(opt.padding);
        if (pos >= 0 && pos < static_cast<std::ptrdiff_t>(length)) dx[c * length + pos] += row[t];
      }
    }
}

}  // namespace

Tensor conv1d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              const Conv1dOptions& opt) {
  require(input.ndim() == 2 || input.ndim() == 3,
          "conv1d: input must be [C, T] or [B, C, T], got " + to_string(input.shape()));
  require(weight.ndim() == 3, "conv1d: weight must be [C_out, C_in, k]");
  const bool batched = input.ndim() == 3;
  const std::size_t batch = batched ? input.dim(0) : 1;
  const std::size_t c_in = input.dim(batched ? 1 : 0);
  const std::size_t length = input.dim(batched ? 2 : 1);
  const std::size_t c_out = weight.dim(0), kernel = weight.dim(2);
  require(weight.dim(1) == c_in, "conv1d: input has " + std::to_string(c_in) +
                                     " channels but weight expects " +
                                     std::to_string(weight.dim(1)));
  require(!bias.defined() || bias.numel() == c_out, "conv1d: bias length mismatch");
  if (opt.stride == 0 || opt.dilation == 0) throw ConfigError("conv1d: stride and dilation must be >= 1");
  const std::size_t out_len = conv_output_length(length, kernel, opt.stride, opt.padding, opt.dilation);
  require(out_len >= 1, "conv1d: kernel span exceeds padded input length");

  const std::size_t ck = c_in * kernel;
  const bool direct = kernel == 1 && opt.stride == 1 && opt.padding == 0;
  std::vector<Real> out(batch * c_out * out_len);
  std::vector<Real> cols(direct ? 0 : ck * out_len);
  CMapM w(weight.data().data(), c_out, ck);
  for (std::size_t b = 0; b < batch; ++b) {
    const Real* x = input.data().data() + b * c_in * length;
    MapM y(out.data() + b * c_out * out_len, c_out, out_len);
    if (direct) {
      y.noalias() = w * CMapM(x, c_in, out_len);
    } else {
      im2col_1d(x, c_in, length, kernel, opt, out_len, cols.data());
      y.noalias() = w * CMapM(cols.data(), ck, out_len);
    }
    if (bias.defined())
      for (std::size_t o = 0; o < c_out; ++o) y.row(o).array() += bias.data()[o];
  }
  Shape out_shape = batched ? Shape{batch, c_out, out_len} : Shape{c_out, out_len};
  ImplPtr xi = input.impl(), wi = weight.impl(), bi = bias.impl();
  return make_result(
      std::move(out_shape), std::move(out), {input, weight, bias}, "conv1d",
      [=](TensorImpl& o) {
        std::vector<Real> cols_b(direct ? 0 : ck * out_len);
        std::vector<Real> dcols(direct ? 0 : ck * out_len);
        CMapM w(wi->data.data(), c_out, ck);
        for (std::size_t b = 0; b < batch; ++b) {
          CMapM gy(o.grad.data() + b * c_out * out_len, c_out, out_len);
          const Real* x = xi->data.data() + b * c_in * length;
          if (wants_grad(bi)) {
            Real* gb = bi->grad_buffer();
            for (std::size_t c = 0; c < c_out; ++c) gb[c] += gy.row(c).sum();
          }
          if (direct) {
            if (wants_grad(wi))
              MapM(wi->grad_buffer(), c_out, ck).noalias() += gy * CMapM(x, c_in, out_len).transpose();
            if (wants_grad(xi))
              MapM(xi->grad_buffer() + b * c_in * length, c_in, length).noalias() += w.transpose() * gy;
            continue;
          }
          if (wants_grad(wi)) {
            im2col_1d(x, c_in, length, kernel, opt, out_len, cols_b.data());
            MapM(wi->grad_buffer(), c_out, ck).noalias() +=
                gy * CMapM(cols_b.data(), ck, out_len).transpose();
          }
          if (wants_grad(xi)) {
            MapM(dcols.data(), ck, out_len).noalias() = w.transpose() * gy;
            col2im_1d(dcols.data(), c_in, length, kernel, opt, out_len,
                      xi->grad_buffer() + b * c_in * length);
          }
        }
      });
}

namespace {

struct Conv2dGeometry {
  std::size_t batch, c_in, height, width, c_out, kh, kw, groups, cg_in, cg_out;
  std::size_t out_h, out_w, stride, padding;
};

// Unfold output rows [r0, r1) of one group into cols[(c, i, j), (r, q)].
void im2col_2d(const Real* x, const Conv2dGeometry& g, std::size_t r0, std::size_t r1, Real* cols) {
  const std::size_t n = (r1 - r0) * g.out_w;
  for (std::size_t c = 0; c < g.cg_in; ++c) {
    const Real* plane = x + c * g.height * g.width;
    for (std::size_t i = 0; i < g.kh; ++i)
      for (std::size_t j = 0; j < g.kw; ++j) {
        Real* row = cols + ((c * g.kh + i) * g.kw + j) * n;
        for (std::size_t r = r0; r < r1; ++r) {
          const auto y = static_cast<std::ptrdiff_t>(r * g.stride + i) -
                         static_cast<std::ptrdiff_t>(g.padding);
          Real* dst = row + (r - r0) * g.out_w;
          if (y < 0 || y >= static_cast<std::ptrdiff_t>(g.height)) {
            std::fill_n(dst, g.out_w, Real(0));
            continue;
          }
          const Real* src = plane + y * g.width;
          for (std::size_t q = 0; q < g.out_w; ++q) {
            const auto xcol = static_cast<std::ptrdiff_t>(q * g.stride + j) -
                              static_cast<std::ptrdiff_t>(g.padding);
            dst[q] = (xcol >= 0 && xcol < static_cast<std::ptrdiff_t>(g.width)) ? src[xcol] : Real(0);
          }
        }
      }
  }
}

void col2im_2d(const Real* cols, const Conv2dGeometry& g, std::size_t r0, std::size_t r1, Real* dx) {
  const std::size_t n = (r1 - r0) * g.out_w;
  for (std::size_t c = 0; c < g.cg_in; ++c) {
    Real* plane = dx + c * g.height * g.width;
    for (std::size_t i = 0; i < g.kh; ++i)
      for (std::size_t j = 0; j < g.kw; ++j) {
        const Real* row = cols + ((c * g.kh + i) * g.kw + j) * n;
        for (std::size_t r = r0; r < r1; ++r) {
          const auto y = static_cast<std::ptrdiff_t>(r * g.stride + i) -
                         static_cast<std::ptrdiff_t>(g.padding);
          if (y < 0 || y >= static_cast<std::ptrdiff_t>(g.height)) continue;
          const Real* src = row + (r - r0) * g.out_w;
          Real* dst = plane + y * g.width;
          for (std::size_t q = 0; q < g.out_w; ++q) {
            const auto xcol = static_cast<std::ptrdiff_t>(q * g.stride + j) -
                              static_cast<std::ptrdiff_t>(g.padding);
            if (xcol >= 0 && xcol < static_cast<std::ptrdiff_t>(g.width)) dst[xcol] += src[q];
          }
        }
      }
  }
}

// Output rows per unfolding chunk, keeping the column buffer near 4M values.
std::size_t rows_per_chunk(const Conv2dGeometry& g) {
  const std::size_t per_row = g.cg_in * g.kh * g.kw * g.out_w;
  return std::max<std::size_t>(1, std::min(g.out_h, (std::size_t{1} << 22) / std::max<std::size_t>(per_row, 1)));
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              const Conv2dOptions& opt) {
  require(input.ndim() == 3 || input.ndim() == 4,
          "conv2d: input must be [C, H, W] or [B, C, H, W], got " + to_string(input.shape()));
  require(weight.ndim() == 4, "conv2d: weight must be [C_out, C_in/groups, kh, kw]");
  const bool batched = input.ndim() == 4;
  Conv2dGeometry g{};
  g.batch = batched ? input.dim(0) : 1;
  g.c_in = input.dim(batched ? 1 : 0);
  g.height = input.dim(batched ? 2 : 1);
  g.width = input.dim(batched ? 3 : 2);
  g.c_out = weight.dim(0);
  g.kh = weight.dim(2);
  g.kw = weight.dim(3);
  g.groups = opt.groups;
  g.stride = opt.stride;
  g.padding = opt.padding;
  if (g.groups == 0 || g.stride == 0) throw ConfigError("conv2d: groups and stride must be >= 1");
  require(g.c_in % g.groups == 0 && g.c_out % g.groups == 0,
          "conv2d: channels (" + std::to_string(g.c_in) + " in, " + std::to_string(g.c_out) +
              " out) not divisible by groups " + std::to_string(g.groups));
  g.cg_in = g.c_in / g.groups;
  g.cg_out = g.c_out / g.groups;
  require(weight.dim(1) == g.cg_in, "conv2d: weight expects " + std::to_string(weight.dim(1)) +
                                        " input channels per group, input provides " +
                                        std::to_string(g.cg_in));
  require(!bias.defined() || bias.numel() == g.c_out, "conv2d: bias length mismatch");
  g.out_h = conv_output_length(g.height, g.kh, g.stride, g.padding, 1);
  g.out_w = conv_output_length(g.width, g.kw, g.stride, g.padding, 1);
  require(g.out_h >= 1 && g.out_w >= 1, "conv2d: kernel exceeds padded input");

  const std::size_t plane_out = g.out_h * g.out_w;
  const std::size_t ckk = g.cg_in * g.kh * g.kw;
  const std::size_t chunk = rows_per_chunk(g);
  std::vector<Real> out(g.batch * g.c_out * plane_out);
  std::vector<Real> cols(ckk * chunk * g.out_w);
  for (std::size_t b = 0; b < g.batch; ++b)
    for (std::size_t grp = 0; grp < g.groups; ++grp) {
      const Real* x = input.data().data() + (b * g.c_in + grp * g.cg_in) * g.height * g.width;
      CMapM w(weight.data().data() + grp * g.cg_out * ckk, g.cg_out, ckk);
      Real* y = out.data() + (b * g.c_out + grp * g.cg_out) * plane_out;
      for (std::size_t r0 = 0; r0 < g.out_h; r0 += chunk) {
        const std::size_t r1 = std::min(g.out_h, r0 + chunk);
        const std::size_t n = (r1 - r0) * g.out_w;
        im2col_2d(x, g, r0, r1, cols.data());
        StridedMap(y + r0 * g.out_w, g.cg_out, n, Eigen::OuterStride<>(plane_out)).noalias() =
            w * CMapM(cols.data(), ckk, n);
      }
      if (bias.defined())
        for (std::size_t o = 0; o < g.cg_out; ++o) {
          const Real bv = bias.data()[grp * g.cg_out + o];
          Real* yo = y + o * plane_out;
          for (std::size_t i = 0; i < plane_out; ++i) yo[i] += bv;
        }
    }

  Shape out_shape = batched ? Shape{g.batch, g.c_out, g.out_h, g.out_w}
                            : Shape{g.c_out, g.out_h, g.out_w};
  ImplPtr xi = input.impl(), wi = weight.impl(), bi = bias.impl();
  return make_result(
      std::move(out_shape), std::move(out), {input, weight, bias}, "conv2d",
      [=](TensorImpl& o) {
        std::vector<Real> cols(ckk * chunk * g.out_w), dcols(ckk * chunk * g.out_w);
        for (std::size_t b = 0; b < g.batch; ++b)
          for (std::size_t grp = 0; grp < g.groups; ++grp) {
            const std::size_t x_off = (b * g.c_in + grp * g.cg_in) * g.height * g.width;
            const Real* x = xi->data.data() + x_off;
            const Real* gy = o.grad.data() + (b * g.c_out + grp * g.cg_out) * plane_out;
            CMapM w(wi->data.data() + grp * g.cg_out * ckk, g.cg_out, ckk);
            if (wants_grad(bi)) {
              Real* gb = bi->grad_buffer();
              for (std::size_t oc = 0; oc < g.cg_out; ++oc) {
                Real acc = 0;
                for (std::size_t i = 0; i < plane_out; ++i) acc += gy[oc * plane_out + i];
                gb[grp * g.cg_out + oc] += acc;
              }
            }
            for (std::size_t r0 = 0; r0 < g.out_h; r0 += chunk) {
              const std::size_t r1 = std::min(g.out_h, r0 + chunk);
              const std::size_t n = (r1 - r0) * g.out_w;
              CStridedMap gyb(gy + r0 * g.out_w, g.cg_out, n, Eigen::OuterStride<>(plane_out));
              if (wants_grad(wi)) {
                im2col_2d(x, g, r0, r1, cols.data());
                MapM(wi->grad_buffer() + grp * g.cg_out * ckk, g.cg_out, ckk).noalias() +=
                    gyb * CMapM(cols.data(), ckk, n).transpose();
              }
              if (wants_grad(xi)) {
                MapM(dcols.data(), ckk, n).noalias() = w.transpose() * gyb;
                col2im_2d(dcols.data(), g, r0, r1, xi->grad_buffer() + x_off);
              }
            }
          }
      });
}

Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  require(weight.ndim() == 2, "linear: weight must be [D_out, D_in]");
  const std::size_t d_out = weight.dim(0), d_in = weight.dim(1);
  require(input.shape().back() == d_in, "linear: input last dimension " +
                                            std::to_string(input.shape().back()) +
                                            " does not match D_in " + std::to_string(d_in));
  require(!bias.defined() || bias.numel() == d_out, "linear: bias length mismatch");
  const std::size_t rows = input.numel() / d_in;
  std::vector<Real> out(rows * d_out);
  MapM y(out.data(), rows, d_out);
  y.noalias() = CMapM(input.data().data(), rows, d_in) *
                CMapM(weight.data().data(), d_out, d_in).transpose();
  if (bias.defined()) {
    Eigen::Map<const Eigen::Matrix<Real, 1, Eigen::Dynamic>> bv(bias.data().data(), d_out);
    y.rowwise() += bv;
  }
  Shape out_shape = input.shape();
  out_shape.back() = d_out;
  ImplPtr xi = input.impl(), wi = weight.impl(), bi = bias.impl();
  return make_result(std::move(out_shape), std::move(out), {input, weight, bias}, "linear",
                     [=](TensorImpl& o) {
                       CMapM gy(o.grad.data(), rows, d_out);
                       if (wants_grad(xi))
                         MapM(xi->grad_buffer(), rows, d_in).noalias() +=
                             gy * CMapM(wi->data.data(), d_out, d_in);
                       if (wants_grad(wi))
                         MapM(wi->grad_buffer(), d_out, d_in).noalias() +=
                             gy.transpose() * CMapM(xi->data.data(), rows, d_in);
                       if (wants_grad(bi)) {
                         Real* gb = bi->grad_buffer();
                         for (std::size_t c = 0; c < d_out; ++c) gb[c] += gy.col(c).sum();
                       }
                     });
}

// ---------------------------------------------------------------------------
// Normalisation

Tensor batch_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                  Tensor& running_mean, Tensor& running_var, const BatchNormOptions& opt) {
  if (!(opt.eps > 0)) throw ConfigError("batch_norm: eps must be positive");
  require(opt.channel_axis < input.ndim(), "batch_norm: channel axis out of range");
  const auto s = split_at(input.shape(), opt.channel_axis);
  const std::size_t channels = s.size;
  require(gamma.numel() == channels && beta.numel() == channels &&
              running_mean.numel() == channels && running_var.numel() == channels,
          "batch_norm: parameter length does not match " + std::to_string(channels) + " channels");
  const bool masked = !opt.valid.empty();
  require(!masked || opt.valid.size() == s.outer * s.inner, "batch_norm: mask length mismatch");
  std::vector<std::uint8_t> valid(opt.valid.begin(), opt.valid.end());
  auto is_valid = [&valid, masked, s](std::size_t o, std::size_t i) {
    return !masked || valid[o * s.inner + i] != 0;
  };

  const auto x = input.data();
  std::vector<Real> out(input.numel(), Real(0));
  std::vector<Real> xhat(opt.training ? input.numel() : 0, Real(0));
  std::vector<Real> inv_std(channels);
  std::size_t count = 0;
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t i = 0; i < s.inner; ++i) count += is_valid(o, i);

  for (std::size_t c = 0; c < channels; ++c) {
    double m, v;
    if (opt.training) {
      if (count == 0) throw UsageError("batch_norm: no valid positions in training batch");
      double acc = 0.0;
      for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t i = 0; i < s.inner; ++i)
          if (is_valid(o, i)) acc += x[(o * channels + c) * s.inner + i];
      m = acc / static_cast<double>(count);
      double sq = 0.0;
      for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t i = 0; i < s.inner; ++i)
          if (is_valid(o, i)) {
            const double d = x[(o * channels + c) * s.inner + i] - m;
            sq += d * d;
          }
      v = sq / static_cast<double>(count);
      const double unbiased = count > 1 ? sq / static_cast<double>(count - 1) : v;
      Real& rm = running_mean.data()[c];
      Real& rv = running_var.data()[c];
      rm = static_cast<Real>((1.0 - opt.momentum) * rm + opt.momentum * m);
      rv = static_cast<Real>((1.0 - opt.momentum) * rv + opt.momentum * unbiased);
    } else {
      m = running_mean.data()[c];
      v = running_var.data()[c];
    }
    const double is = 1.0 / std::sqrt(v + opt.eps);
    inv_std[c] = static_cast<Real>(is);
    const Real gm = gamma.data()[c], bt = beta.data()[c];
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t i = 0; i < s.inner; ++i) {
        if (!is_valid(o, i)) continue;
        const std::size_t f = (o * channels + c) * s.inner + i;
        const Real xh = static_cast<Real>((x[f] - m) * is);
        if (opt.training) xhat[f] = xh;
        out[f] = gm * xh + bt;
      }
  }

  ImplPtr xi = input.impl(), gi = gamma.impl(), bi = beta.impl();
  ImplPtr rmi = running_mean.impl(), rvi = running_var.impl();
  const bool training = opt.training;
  return make_result(
      input.shape(), std::move(out), {input, gamma, beta}, "batch_norm",
      [=, valid = std::move(valid), xhat = std::move(xhat),
       inv_std = std::move(inv_std)](TensorImpl& o) {
        auto ok = [&](std::size_t a, std::size_t i) { return !masked || valid[a * s.inner + i] != 0; };
        const Real* gy = o.grad.data();
        for (std::size_t c = 0; c < channels; ++c) {
          double sum_dy = 0.0, sum_dy_xh = 0.0;
          for (std::size_t a = 0; a < s.outer; ++a)
            for (std::size_t i = 0; i < s.inner; ++i) {
              if (!ok(a, i)) continue;
              const std::size_t f = (a * channels + c) * s.inner + i;
              const double xh = training ? xhat[f]
                                         : (xi->data[f] - rmi->data[c]) * static_cast<double>(inv_std[c]);
              sum_dy += gy[f];
              sum_dy_xh += gy[f] * xh;
            }
          if (wants_grad(gi)) gi->grad_buffer()[c] += static_cast<Real>(sum_dy_xh);
          if (wants_grad(bi)) bi->grad_buffer()[c] += static_cast<Real>(sum_dy);
          if (!wants_grad(xi)) continue;
          Real* gx = xi->grad_buffer();
          const double gm = gi->data[c];
          const double is = inv_std[c];
          for (std::size_t a = 0; a < s.outer; ++a)
            for (std::size_t i = 0; i < s.inner; ++i) {
              if (!ok(a, i)) continue;
              const std::size_t f = (a * channels + c) * s.inner + i;
              if (training) {
                const double n = static_cast<double>(count);
                gx[f] += static_cast<Real>(gm * is / n *
                                           (n * gy[f] - sum_dy - xhat[f] * sum_dy_xh));
              } else {
                gx[f] += static_cast<Real>(gy[f] * gm * is);
              }
            }
        }
      });
}

Tensor layer_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta, Real eps) {
  require(input.ndim() >= 1, "layer_norm: scalar input");
  const std::size_t d = input.shape().back();
  require(d > 0, "layer_norm: empty feature axis");
  require(gamma.numel() == d && beta.numel() == d, "layer_norm: parameter length mismatch");
  const std::size_t rows = input.numel() / d;
  const auto x = input.data();
  std::vector<Real> out(input.numel()), xhat(input.numel()), inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* xr = x.data() + r * d;
    double m = 0.0;
    for (std::size_t j = 0; j < d; ++j) m += xr[j];
    m /= static_cast<double>(d);
    double v = 0.0;
    for (std::size_t j = 0; j < d; ++j) v += (xr[j] - m) * (xr[j] - m);
    v /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(v + eps);
    inv_std[r] = static_cast<Real>(is);
    for (std::size_t j = 0; j < d; ++j) {
      const Real xh = static_cast<Real>((xr[j] - m) * is);
      xhat[r * d + j] = xh;
      out[r * d + j] = gamma.data()[j] * xh + beta.data()[j];
    }
  }
  ImplPtr xi = input.impl(), gi = gamma.impl(), bi = beta.impl();
  return make_result(input.shape(), std::move(out), {input, gamma, beta}, "layer_norm",
                     [=, xhat = std::move(xhat), inv_std = std::move(inv_std)](TensorImpl& o) {
                       const Real* gy = o.grad.data();
                       for (std::size_t r = 0; r < rows; ++r) {
                         double sum_g = 0.0, sum_g_xh = 0.0;
                         for (std::size_t j = 0; j < d; ++j) {
                           const double gj = static_cast<double>(gy[r * d + j]) * gi->data[j];
                           sum_g += gj;
                           sum_g_xh += gj * xhat[r * d + j];
                         }
                         if (wants_grad(xi)) {
                           Real* gx = xi->grad_buffer() + r * d;
                           const double n = static_cast<double>(d);
                           for (std::size_t j = 0; j < d; ++j) {
                             const double gj = static_cast<double>(gy[r * d + j]) * gi->data[j];
                             gx[j] += static_cast<Real>(inv_std[r] / n *
                                                        (n * gj - sum_g - xhat[r * d + j] * sum_g_xh));
                           }
                         }
                       }
                       if (wants_grad(gi)) {
                         Real* gg = gi->grad_buffer();
                         for (std::size_t r = 0; r < rows; ++r)
                           for (std::size_t j = 0; j < d; ++j) gg[j] += gy[r * d + j] * xhat[r * d + j];
                       }
                       if (wants_grad(bi)) {
                         Real* gb = bi->grad_buffer();
                         for (std::size_t r = 0; r < rows; ++r)
                           for (std::size_t j = 0; j < d; ++j) gb[j] += gy[r * d + j];
                       }
                     });
}

// ---------------------------------------------------------------------------
// Activations

namespace {

// Elementwise op whose derivative is expressed through input x and output y.
template <typename Fwd, typename Deriv>
Tensor pointwise(const Tensor& x, const char* name, Fwd fwd, Deriv deriv) {
  const std::size_t n = x.numel();
  std::vector<Real> out(n);
  const auto in = x.data();
  for (std::size_t i = 0; i < n; ++i) out[i] = fwd(in[i]);
  ImplPtr xi = x.impl();
  return make_result(x.shape(), std::move(out), {x}, name, [xi, n, deriv](TensorImpl& o) {
    Real* g = xi->grad_buffer();
    for (std::size_t i = 0; i < n; ++i) g[i] += o.grad[i] * deriv(xi->data[i], o.data[i]);
  });
}

}  // namespace

Tensor relu(const Tensor& x) {
  return pointwise(
      x, "relu", [](Real v) { return v > 0 ? v : Real(0); },
      [](Real v, Real) { return v > 0 ? Real(1) : Real(0); });
}

Tensor leaky_relu(const Tensor& x, Real slope) {
  return pointwise(
      x, "leaky_relu", [slope](Real v) { return v > 0 ? v : slope * v; },
      [slope](Real v, Real) { return v > 0 ? Real(1) : slope; });
}

Tensor sigmoid(const Tensor& x) {
  return pointwise(
      x, "sigmoid",
      [](Real v) {
        // Split by sign so exp never overflows.
        if (v >= 0) return Real(1) / (Real(1) + std::exp(-v));
        const Real e = std::exp(v);
        return e / (Real(1) + e);
      },
      [](Real, Real y) { return y * (Real(1) - y); });
}

Tensor tanh(const Tensor& x) {
  return pointwise(
      x, "tanh", [](Real v) { return std::tanh(v); }, [](Real, Real y) { return Real(1) - y * y; });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  require(axis < x.ndim(), "softmax: axis out of range");
  const auto s = split_at(x.shape(), axis);
  const auto in = x.data();
  std::vector<Real> out(x.numel());
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t base = o * s.size * s.inner + i;
      Real mx = in[base];
      for (std::size_t k = 1; k < s.size; ++k) mx = std::max(mx, in[base + k * s.inner]);
      double z = 0.0;
      for (std::size_t k = 0; k < s.size; ++k) {
        const Real e = std::exp(in[base + k * s.inner] - mx);
        out[base + k * s.inner] = e;
        z += e;
      }
      for (std::size_t k = 0; k < s.size; ++k)
        out[base + k * s.inner] = static_cast<Real>(out[base + k * s.inner] / z);
    }
  ImplPtr xi = x.impl();
  return make_result(x.shape(), std::move(out), {x}, "softmax", [xi, s](TensorImpl& o) {
    Real* g = xi->grad_buffer();
    for (std::size_t a = 0; a < s.outer; ++a)
      for (std::size_t i = 0; i < s.inner; ++i) {
        const std::size_t base = a * s.size * s.inner + i;
        double dot = 0.0;
        for (std::size_t k = 0; k < s.size; ++k)
          dot += static_cast<double>(o.grad[base + k * s.inner]) * o.data[base + k * s.inner];
        for (std::size_t k = 0; k < s.size; ++k) {
          const std::size_t f = base + k * s.inner;
          g[f] += static_cast<Real>(o.data[f] * (o.grad[f] - dot));
        }
      }
  });
}

Tensor dropout(const Tensor& x, Real p, bool training, Rng& rng) {
  if (!(p >= 0 && p < 1)) throw ConfigError("dropout: probability must lie in [0, 1)");
  if (!training || p == 0) return x;
  const std::size_t n = x.numel();
  const Real keep_scale = Real(1) / (Real(1) - p);
  std::vector<Real> factor(n);
  for (std::size_t i = 0; i < n; ++i) factor[i] = rng.uniform() < p ? Real(0) : keep_scale;
  std::vector<Real> out(n);
  const auto in = x.data();
  for (std::size_t i = 0; i < n; ++i) out[i] = in[i] * factor[i];
  ImplPtr xi = x.impl();
  return make_result(x.shape(), std::move(out), {x}, "dropout",
                     [xi, factor = std::move(factor)](TensorImpl& o) {
                       Real* g = xi->grad_buffer();
                       for (std::size_t i = 0; i < factor.size(); ++i) g[i] += o.grad[i] * factor[i];
                     });
}

Tensor max_pool_freq(const Tensor& input, std::size_t pool) {
  require(input.ndim() >= 1, "max_pool_freq: scalar input");
  if (pool == 0) throw ConfigError("max_pool_freq: pool must be >= 1");
  const std::size_t f = input.shape().back();
  require(f % pool == 0, "max_pool_freq: feature size " + std::to_string(f) +
                             " not divisible by pool " + std::to_string(pool));
  const std::size_t rows = input.numel() / f, f_out = f / pool;
  const auto in = input.data();
  std::vector<Real> out(rows * f_out);
  std::vector<std::size_t> argmax(rows * f_out);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t w = 0; w < f_out; ++w) {
      std::size_t best = r * f + w * pool;
      for (std::size_t k = 1; k < pool; ++k)
        if (in[r * f + w * pool + k] > in[best]) best = r * f + w * pool + k;
      out[r * f_out + w] = in[best];
      argmax[r * f_out + w] = best;
    }
  Shape out_shape = input.shape();
  out_shape.back() = f_out;
  ImplPtr xi = input.impl();
  return make_result(std::move(out_shape), std::move(out), {input}, "max_pool_freq",
                     [xi, argmax = std::move(argmax)](TensorImpl& o) {
                       Real* g = xi->grad_buffer();
                       for (std::size_t i = 0; i < argmax.size(); ++i) g[argmax[i]] += o.grad[i];
                     });
}

Tensor embedding(const Tensor& weight, std::span<const std::int32_t> indices,
                 const Shape& index_shape) {
  require(weight.ndim() == 2, "embedding: weight must be [W, D]");
  require(numel(index_shape) == indices.size(), "embedding: index shape mismatch");
  const std::size_t vocab = weight.dim(0), d = weight.dim(1);
  std::vector<Real> out(indices.size() * d);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0 || static_cast<std::size_t>(indices[i]) >= vocab)
      throw UsageError("embedding: token index " + std::to_string(indices[i]) +
                       " outside vocabulary of size " + std::to_string(vocab));
    std::copy_n(weight.data().begin() + indices[i] * d, d, out.begin() + i * d);
  }
  Shape out_shape = index_shape;
  out_shape.push_back(d);
  ImplPtr wi = weight.impl();
  std::vector<std::int32_t> idx(indices.begin(), indices.end());
  return make_result(std::move(out_shape), std::move(out), {weight}, "embedding",
                     [wi, d, idx = std::move(idx)](TensorImpl& o) {
                       Real* g = wi->grad_buffer();
                       for (std::size_t i = 0; i < idx.size(); ++i)
                         for (std::size_t j = 0; j < d; ++j) g[idx[i] * d + j] += o.grad[i * d + j];
                     });
}

AttentionMask AttentionMask::causal(std::size_t length) {
  AttentionMask m{1, length, length, std::vector<std::uint8_t>(length * length, 0)};
  for (std::size_t q = 0; q < length; ++q)
    for (std::size_t k = 0; k <= q; ++k) m.allowed[q * length + k] = 1;
  return m;
}

AttentionMask AttentionMask::key_lengths(const std::vector<std::size_t>& lengths,
                                         std::size_t queries, std::size_t keys) {
  AttentionMask m{lengths.size(), queries, keys,
                  std::vector<std::uint8_t>(lengths.size() * queries * keys, 0)};
  for (std::size_t b = 0; b < lengths.size(); ++b)
    for (std::size_t q = 0; q < queries; ++q)
      for (std::size_t k = 0; k < std::min(lengths[b], keys); ++k)
        m.allowed[(b * queries + q) * keys + k] = 1;
  return m;
}

Tensor masked_softmax(const Tensor& scores, const AttentionMask& mask) {
  require(scores.ndim() == 4, "masked_softmax: scores must be [B, H, Lq, Lk]");
  const std::size_t batch = scores.dim(0), heads = scores.dim(1), lq = scores.dim(2),
                    lk = scores.dim(3);
  if (mask.empty()) return softmax(scores, 3);
  require(mask.queries == lq && mask.keys == lk && (mask.batch == 1 || mask.batch == batch),
          "masked_softmax: mask geometry does not match scores " + to_string(scores.shape()));
  const auto in = scores.data();
  std::vector<Real> out(scores.numel(), Real(0));
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t q = 0; q < lq; ++q) {
        const std::size_t base = ((b * heads + h) * lq + q) * lk;
        Real mx = -std::numeric_limits<Real>::infinity();
        for (std::size_t k = 0; k < lk; ++k)
          if (mask.at(b, q, k)) mx = std::max(mx, in[base + k]);
        if (mx == -std::numeric_limits<Real>::infinity())
          throw UsageError("masked_softmax: attention row with every key masked");
        double z = 0.0;
        for (std::size_t k = 0; k < lk; ++k)
          if (mask.at(b, q, k)) {
            const Real e = std::exp(in[base + k] - mx);
            out[base + k] = e;
            z += e;
          }
        for (std::size_t k = 0; k < lk; ++k) out[base + k] = static_cast<Real>(out[base + k] / z);
      }
  ImplPtr xi = scores.impl();
  const std::size_t rows = batch * heads * lq;
  return make_result(scores.shape(), std::move(out), {scores}, "masked_softmax",
                     [xi, rows, lk](TensorImpl& o) {
                       Real* g = xi->grad_buffer();
                       for (std::size_t r = 0; r < rows; ++r) {
                         const std::size_t base = r * lk;
                         double dot = 0.0;
                         for (std::size_t k = 0; k < lk; ++k)
                           dot += static_cast<double>(o.grad[base + k]) * o.data[base + k];
                         for (std::size_t k = 0; k < lk; ++k)
                           g[base + k] +=
                               static_cast<Real>(o.data[base + k] * (o.grad[base + k] - dot));
                       }
                     });
}

Tensor cross_entropy(const Tensor& logits, std::span<const std::int32_t> targets,
                     std::int32_t pad_index) {
  require(logits.ndim() >= 1, "cross_entropy: scalar logits");
  const std::size_t w = logits.shape().back();
  const std::size_t rows = logits.numel() / w;
  require(targets.size() == rows, "cross_entropy: " + std::to_string(targets.size()) +
                                      " targets for " + std::to_string(rows) + " positions");
  const auto in = logits.data();
  std::vector<Real> probs(rows * w);
  std::size_t count = 0;
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (targets[r] == pad_index) continue;
    if (targets[r] < 0 || static_cast<std::size_t>(targets[r]) >= w)
      throw UsageError("cross_entropy: target " + std::to_string(targets[r]) + " out of range");
    const Real* x = in.data() + r * w;
    const Real mx = *std::max_element(x, x + w);
    double z = 0.0;
    for (std::size_t k = 0; k < w; ++k) z += std::exp(static_cast<double>(x[k] - mx));
    const double log_z = std::log(z) + mx;
    total += log_z - x[targets[r]];
    for (std::size_t k = 0; k < w; ++k)
      probs[r * w + k] = static_cast<Real>(std::exp(static_cast<double>(x[k]) - log_z));
    ++count;
  }
  if (count == 0) throw UsageError("cross_entropy: every target position is padding");
  ImplPtr xi = logits.impl();
  std::vector<std::int32_t> tgt(targets.begin(), targets.end());
  return make_result({1}, {static_cast<Real>(total / static_cast<double>(count))}, {logits},
                     "cross_entropy",
                     [xi, w, rows, count, pad_index, tgt = std::move(tgt),
                      probs = std::move(probs)](TensorImpl& o) {
                       Real* g = xi->grad_buffer();
                       const Real scale = o.grad[0] / static_cast<Real>(count);
                       for (std::size_t r = 0; r < rows; ++r) {
                         if (tgt[r] == pad_index) continue;
                         for (std::size_t k = 0; k < w; ++k) g[r * w + k] += probs[r * w + k] * scale;
                         g[r * w + tgt[r]] -= scale;
                       }
                     });
}

}  // namespace WAVECAP_ABI
}  // namespace wavecap
