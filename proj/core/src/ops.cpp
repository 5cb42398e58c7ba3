// Copyright 2026 The crpslam Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "crpslam/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>

namespace crpslam {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using VecMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>;
template <typename T>
using ConstVecMap = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>;

template <typename T>
using NodePtr = std::shared_ptr<TapeNode<T>>;

template <typename T>
void require_same_shape(const BasicTensor<T>& a, const BasicTensor<T>& b,
                        const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

template <typename T>
void require_rank(const BasicTensor<T>& a, std::size_t rank, const char* op,
                  const char* what) {
  if (!a.defined() || a.rank() != rank) {
    throw DimensionError(std::string(op) + ": " + what + " must have rank " +
                         std::to_string(rank) + ", got " +
                         (a.defined() ? shape_string(a.shape()) : "undefined"));
  }
}

template <typename T>
void accumulate(TapeNode<T>& target, std::span<const T> delta) {
  auto& g = target.grad_buffer();
  for (std::size_t i = 0; i < delta.size(); ++i) g[i] += delta[i];
}

template <typename T>
void im2col(const T* in, std::size_t channels, std::size_t height,
            std::size_t width, std::size_t k, std::size_t stride,
            std::size_t pad, std::size_t out_h, std::size_t out_w, T* col) {
  const std::size_t plane = out_h * out_w;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj) {
        T* dst = col + ((c * k + ki) * k + kj) * plane;
        for (std::size_t oy = 0; oy < out_h; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * stride + ki) -
                          static_cast<std::ptrdiff_t>(pad);
          T* row = dst + oy * out_w;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(height)) {
            std::fill(row, row + out_w, T{0});
            continue;
          }
          const T* src = in + (c * height + static_cast<std::size_t>(iy)) * width;
          for (std::size_t ox = 0; ox < out_w; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * stride + kj) -
                            static_cast<std::ptrdiff_t>(pad);
            row[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(width))
                          ? T{0}
                          : src[ix];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* col, std::size_t channels, std::size_t height,
            std::size_t width, std::size_t k, std::size_t stride,
            std::size_t pad, std::size_t out_h, std::size_t out_w, T* in) {
  const std::size_t plane = out_h * out_w;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj) {
        const T* src = col + ((c * k + ki) * k + kj) * plane;
        for (std::size_t oy = 0; oy < out_h; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * stride + ki) -
                          static_cast<std::ptrdiff_t>(pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(height)) continue;
          T* dst = in + (c * height + static_cast<std::size_t>(iy)) * width;
          const T* row = src + oy * out_w;
          for (std::size_t ox = 0; ox < out_w; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * stride + kj) -
                            static_cast<std::ptrdiff_t>(pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(width)) continue;
            dst[ix] += row[ox];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape(a, b, "add");
  std::vector<T> out(a.numel());
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return BasicTensor<T>::from_op(
      "add", a.shape(), std::move(out), {a.node(), b.node()},
      [](TapeNode<T>& self) {
        for (auto& in : self.inputs) {
          if (in->requires_grad) accumulate<T>(*in, self.grad);
        }
      });
}

template <typename T>
BasicTensor<T> subtract(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape(a, b, "subtract");
  std::vector<T> out(a.numel());
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  return BasicTensor<T>::from_op(
      "subtract", a.shape(), std::move(out), {a.node(), b.node()},
      [](TapeNode<T>& self) {
        if (self.inputs[0]->requires_grad) accumulate<T>(*self.inputs[0], self.grad);
        if (self.inputs[1]->requires_grad) {
          auto& g = self.inputs[1]->grad_buffer();
          for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
        }
      });
}

template <typename T>
BasicTensor<T> multiply(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape(a, b, "multiply");
  std::vector<T> out(a.numel());
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return BasicTensor<T>::from_op(
      "multiply", a.shape(), std::move(out), {a.node(), b.node()},
      [](TapeNode<T>& self) {
        auto& a_node = *self.inputs[0];
        auto& b_node = *self.inputs[1];
        if (a_node.requires_grad) {
          auto& g = a_node.grad_buffer();
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * b_node.value[i];
        }
        if (b_node.requires_grad) {
          auto& g = b_node.grad_buffer();
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * a_node.value[i];
        }
      });
}

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& a, T factor) {
  std::vector<T> out(a.numel());
  const auto av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * factor;
  return BasicTensor<T>::from_op(
      "scale", a.shape(), std::move(out), {a.node()},
      [factor](TapeNode<T>& self) {
        auto& g = self.inputs[0]->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * factor;
      });
}

template <typename T>
BasicTensor<T> abs_subtract(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape(a, b, "abs_subtract");
  std::vector<T> out(a.numel());
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::abs(av[i] - bv[i]);
  return BasicTensor<T>::from_op(
      "abs_subtract", a.shape(), std::move(out), {a.node(), b.node()},
      [](TapeNode<T>& self) {
        auto& a_node = *self.inputs[0];
        auto& b_node = *self.inputs[1];
        const std::size_t n = self.grad.size();
        auto sign = [&](std::size_t i) -> T {
          const T d = a_node.value[i] - b_node.value[i];
          return d > T{0} ? T{1} : (d < T{0} ? T{-1} : T{0});
        };
        if (a_node.requires_grad) {
          auto& g = a_node.grad_buffer();
          for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[i] * sign(i);
        }
        if (b_node.requires_grad) {
          auto& g = b_node.grad_buffer();
          for (std::size_t i = 0; i < n; ++i) g[i] -= self.grad[i] * sign(i);
        }
      });
}

template <typename T>
BasicTensor<T> silu(const BasicTensor<T>& x) {
  const auto xv = x.values();
  std::vector<T> out(xv.size());
  std::vector<T> sig(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    sig[i] = T{1} / (T{1} + std::exp(-xv[i]));
    out[i] = xv[i] * sig[i];
  }
  return BasicTensor<T>::from_op(
      "silu", x.shape(), std::move(out), {x.node()},
      [sig = std::move(sig)](TapeNode<T>& self) {
        auto& in = *self.inputs[0];
        auto& g = in.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) {
          const T s = sig[i];
          g[i] += self.grad[i] * s * (T{1} + in.value[i] * (T{1} - s));
        }
      });
}

template <typename T>
BasicTensor<T> sum_over_axes(const BasicTensor<T>& x,
                             const std::vector<std::size_t>& axes) {
  const Shape& in_shape = x.shape();
  std::vector<bool> reduced(in_shape.size(), false);
  for (auto a : axes) {
    if (a >= in_shape.size()) {
      throw DimensionError("sum_over_axes: axis " + std::to_string(a) +
                           " out of range for " + shape_string(in_shape));
    }
    reduced[a] = true;
  }
  Shape out_shape;
  for (std::size_t i = 0; i < in_shape.size(); ++i) {
    if (!reduced[i]) out_shape.push_back(in_shape[i]);
  }
  if (out_shape.empty()) out_shape.push_back(1);

  // Output stride contributed by each input axis (0 for reduced axes).
  std::vector<std::size_t> out_stride(in_shape.size(), 0);
  std::size_t stride = 1;
  for (std::size_t i = in_shape.size(); i-- > 0;) {
    if (!reduced[i]) {
      out_stride[i] = stride;
      stride *= in_shape[i];
    }
  }
  std::vector<std::size_t> index_map(x.numel());
  {
    std::vector<std::size_t> idx(in_shape.size(), 0);
    for (std::size_t flat = 0; flat < index_map.size(); ++flat) {
      std::size_t o = 0;
      for (std::size_t i = 0; i < idx.size(); ++i) o += idx[i] * out_stride[i];
      index_map[flat] = o;
      for (std::size_t i = idx.size(); i-- > 0;) {
        if (++idx[i] < in_shape[i]) break;
        idx[i] = 0;
      }
    }
  }
  std::vector<double> acc(shape_numel(out_shape), 0.0);
  const auto xv = x.values();
  for (std::size_t flat = 0; flat < xv.size(); ++flat) acc[index_map[flat]] += xv[flat];
  std::vector<T> out(acc.begin(), acc.end());
  return BasicTensor<T>::from_op(
      "sum_over_axes", std::move(out_shape), std::move(out), {x.node()},
      [index_map = std::move(index_map)](TapeNode<T>& self) {
        auto& g = self.inputs[0]->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[index_map[i]];
      });
}

template <typename T>
BasicTensor<T> mean_over_axes(const BasicTensor<T>& x,
                              const std::vector<std::size_t>& axes) {
  std::size_t count = 1;
  for (auto a : axes) count *= x.shape().at(a);
  return scale(sum_over_axes(x, axes), T{1} / static_cast<T>(count));
}

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& x) {
  std::vector<std::size_t> axes(x.rank());
  std::iota(axes.begin(), axes.end(), std::size_t{0});
  return sum_over_axes(x, axes);
}

template <typename T>
BasicTensor<T> mean(const BasicTensor<T>& x) {
  return scale(sum(x), T{1} / static_cast<T>(x.numel()));
}

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& kernel,
                      const BasicTensor<T>& bias, Padding padding,
                      std::size_t stride) {
  require_rank(input, 3, "conv2d", "input");
  require_rank(kernel, 4, "conv2d", "kernel");
  require_rank(bias, 1, "conv2d", "bias");
  const std::size_t c_in = input.dim(0), height = input.dim(1), width = input.dim(2);
  const std::size_t c_out = kernel.dim(0), k = kernel.dim(2);
  if (kernel.dim(1) != c_in || kernel.dim(3) != k || bias.dim(0) != c_out) {
    throw DimensionError("conv2d: kernel " + shape_string(kernel.shape()) +
                         " / bias " + shape_string(bias.shape()) +
                         " incompatible with input " + shape_string(input.shape()));
  }
  if (k % 2 == 0) throw DimensionError("conv2d: kernel size must be odd");
  if (stride != 1 && stride != 2) throw DimensionError("conv2d: stride must be 1 or 2");
  const std::size_t pad = padding == Padding::kSame ? k / 2 : 0;
  if (padding == Padding::kValid && (height < k || width < k)) {
    throw DimensionError("conv2d: valid padding needs H,W >= k");
  }
  const std::size_t out_h = (height + 2 * pad - k) / stride + 1;
  const std::size_t out_w = (width + 2 * pad - k) / stride + 1;
  const std::size_t plane = out_h * out_w;
  const std::size_t depth = c_in * k * k;

  const bool direct = (k == 1 && stride == 1);
  std::vector<T> col;
  const T* col_ptr = input.values().data();
  if (!direct) {
    col.resize(depth * plane);
    im2col(input.values().data(), c_in, height, width, k, stride, pad, out_h,
           out_w, col.data());
    col_ptr = col.data();
  }

  std::vector<T> out(c_out * plane);
  {
    ConstMatMap<T> w(kernel.values().data(), c_out, depth);
    ConstMatMap<T> cm(col_ptr, depth, plane);
    MatMap<T> o(out.data(), c_out, plane);
    o.noalias() = w * cm;
    const auto bv = bias.values();
    for (std::size_t c = 0; c < c_out; ++c) o.row(c).array() += bv[c];
  }

  return BasicTensor<T>::from_op(
      "conv2d", {c_out, out_h, out_w}, std::move(out),
      {input.node(), kernel.node(), bias.node()},
      [col = std::move(col), direct, c_in, height, width, k, stride, pad, out_h,
       out_w, c_out, depth, plane](TapeNode<T>& self) {
        auto& in_node = *self.inputs[0];
        auto& k_node = *self.inputs[1];
        auto& b_node = *self.inputs[2];
        const T* cols = direct ? in_node.value.data() : col.data();
        ConstMatMap<T> dout(self.grad.data(), c_out, plane);
        if (k_node.requires_grad) {
          MatMap<T> dw(k_node.grad_buffer().data(), c_out, depth);
          ConstMatMap<T> cm(cols, depth, plane);
          dw.noalias() += dout * cm.transpose();
        }
        if (b_node.requires_grad) {
          auto& g = b_node.grad_buffer();
          // Plain loop: Eigen's vectorized sum rounds differently with buffer alignment.
          for (std::size_t c = 0; c < c_out; ++c) {
            const T* row = self.grad.data() + c * plane;
            T acc{0};
            for (std::size_t i = 0; i < plane; ++i) acc += row[i];
            g[c] += acc;
          }
        }
        if (in_node.requires_grad) {
          ConstMatMap<T> w(k_node.value.data(), c_out, depth);
          auto& g = in_node.grad_buffer();
          if (direct) {
            MatMap<T> dx(g.data(), depth, plane);
            dx.noalias() += w.transpose() * dout;
          } else {
            std::vector<T> dcol(depth * plane);
            MatMap<T> dc(dcol.data(), depth, plane);
            dc.noalias() = w.transpose() * dout;
            col2im(dcol.data(), c_in, height, width, k, stride, pad, out_h,
                   out_w, g.data());
          }
        }
      });
}

template <typename T>
BasicTensor<T> linear(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                      const BasicTensor<T>& bias) {
  require_rank(input, 1, "linear", "input");
  require_rank(weight, 2, "linear", "weight");
  require_rank(bias, 1, "linear", "bias");
  const std::size_t d_in = input.dim(0), d_out = weight.dim(0);
  if (weight.dim(1) != d_in || bias.dim(0) != d_out) {
    throw DimensionError("linear: weight " + shape_string(weight.shape()) +
                         " / bias " + shape_string(bias.shape()) +
                         " incompatible with input " + shape_string(input.shape()));
  }
  std::vector<T> out(d_out);
  {
    ConstMatMap<T> w(weight.values().data(), d_out, d_in);
    ConstVecMap<T> x(input.values().data(), d_in);
    VecMap<T> y(out.data(), d_out);
    y.noalias() = w * x;
    const auto bv = bias.values();
    for (std::size_t i = 0; i < d_out; ++i) out[i] += bv[i];
  }
  return BasicTensor<T>::from_op(
      "linear", {d_out}, std::move(out),
      {input.node(), weight.node(), bias.node()},
      [d_in, d_out](TapeNode<T>& self) {
        auto& x_node = *self.inputs[0];
        auto& w_node = *self.inputs[1];
        auto& b_node = *self.inputs[2];
        ConstVecMap<T> dy(self.grad.data(), d_out);
        if (w_node.requires_grad) {
          MatMap<T> dw(w_node.grad_buffer().data(), d_out, d_in);
          ConstVecMap<T> x(x_node.value.data(), d_in);
          dw.noalias() += dy * x.transpose();
        }
        if (b_node.requires_grad) accumulate<T>(b_node, self.grad);
        if (x_node.requires_grad) {
          ConstMatMap<T> w(w_node.value.data(), d_out, d_in);
          VecMap<T> dx(x_node.grad_buffer().data(), d_in);
          dx.noalias() += w.transpose() * dy;
        }
      });
}

template <typename T>
BasicTensor<T> cond_layer_norm(const BasicTensor<T>& input,
                               const BasicTensor<T>& scale_t,
                               const BasicTensor<T>& shift_t, T epsilon) {
  require_rank(input, 3, "cond_layer_norm", "input");
  const std::size_t channels = input.dim(0);
  const std::size_t positions = input.dim(1) * input.dim(2);
  if (scale_t.numel() != channels || shift_t.numel() != channels) {
    throw DimensionError("cond_layer_norm: scale/shift length must equal C=" +
                         std::to_string(channels));
  }
  if (!(epsilon > T{0})) throw ConfigError("cond_layer_norm: epsilon must be > 0");

  const auto x = input.values();
  const auto sc = scale_t.values();
  const auto sh = shift_t.values();
  std::vector<T> mean_p(positions, T{0});
  std::vector<T> inv_std(positions, T{0});
  for (std::size_t c = 0; c < channels; ++c) {
    const T* row = x.data() + c * positions;
    for (std::size_t p = 0; p < positions; ++p) mean_p[p] += row[p];
  }
  const T inv_c = T{1} / static_cast<T>(channels);
  for (auto& m : mean_p) m *= inv_c;
  for (std::size_t c = 0; c < channels; ++c) {
    const T* row = x.data() + c * positions;
    for (std::size_t p = 0; p < positions; ++p) {
      const T d = row[p] - mean_p[p];
      inv_std[p] += d * d;
    }
  }
  for (auto& v : inv_std) v = T{1} / std::sqrt(v * inv_c + epsilon);

  std::vector<T> normalized(x.size());
  std::vector<T> out(x.size());
  for (std::size_t c = 0; c < channels; ++c) {
    const T gain = T{1} + sc[c];
    const T* row = x.data() + c * positions;
    T* nrow = normalized.data() + c * positions;
    T* orow = out.data() + c * positions;
    for (std::size_t p = 0; p < positions; ++p) {
      nrow[p] = (row[p] - mean_p[p]) * inv_std[p];
      orow[p] = nrow[p] * gain + sh[c];
    }
  }

  return BasicTensor<T>::from_op(
      "cond_layer_norm", input.shape(), std::move(out),
      {input.node(), scale_t.node(), shift_t.node()},
      [normalized = std::move(normalized), inv_std = std::move(inv_std),
       channels, positions](TapeNode<T>& self) {
        auto& x_node = *self.inputs[0];
        auto& s_node = *self.inputs[1];
        auto& b_node = *self.inputs[2];
        const T* dy = self.grad.data();
        if (s_node.requires_grad || b_node.requires_grad) {
          for (std::size_t c = 0; c < channels; ++c) {
            T ds = 0, db = 0;
            const T* drow = dy + c * positions;
            const T* nrow = normalized.data() + c * positions;
            for (std::size_t p = 0; p < positions; ++p) {
              ds += drow[p] * nrow[p];
              db += drow[p];
            }
            if (s_node.requires_grad) s_node.grad_buffer()[c] += ds;
            if (b_node.requires_grad) b_node.grad_buffer()[c] += db;
          }
        }
        if (!x_node.requires_grad) return;
        std::vector<T> mean_dn(positions, T{0});
        std::vector<T> mean_dn_n(positions, T{0});
        for (std::size_t c = 0; c < channels; ++c) {
          const T gain = T{1} + s_node.value[c];
          const T* drow = dy + c * positions;
          const T* nrow = normalized.data() + c * positions;
          for (std::size_t p = 0; p < positions; ++p) {
            const T dn = drow[p] * gain;
            mean_dn[p] += dn;
            mean_dn_n[p] += dn * nrow[p];
          }
        }
        const T inv_c = T{1} / static_cast<T>(channels);
        auto& g = x_node.grad_buffer();
        for (std::size_t c = 0; c < channels; ++c) {
          const T gain = T{1} + s_node.value[c];
          const T* drow = dy + c * positions;
          const T* nrow = normalized.data() + c * positions;
          T* grow = g.data() + c * positions;
          for (std::size_t p = 0; p < positions; ++p) {
            const T dn = drow[p] * gain;
            grow[p] += inv_std[p] *
                       (dn - mean_dn[p] * inv_c - nrow[p] * mean_dn_n[p] * inv_c);
          }
        }
      });
}

template <typename T>
BasicTensor<T> concat_channels(const std::vector<BasicTensor<T>>& parts) {
  if (parts.empty()) throw DimensionError("concat_channels: no inputs");
  for (const auto& p : parts) require_rank(p, 3, "concat_channels", "part");
  const std::size_t height = parts[0].dim(1), width = parts[0].dim(2);
  std::size_t channels = 0;
  std::vector<std::shared_ptr<TapeNode<T>>> nodes;
  for (const auto& p : parts) {
    if (p.dim(1) != height || p.dim(2) != width) {
      throw DimensionError("concat_channels: spatial mismatch " +
                           shape_string(p.shape()) + " vs " +
                           shape_string(parts[0].shape()));
    }
    channels += p.dim(0);
    nodes.push_back(p.node());
  }
  std::vector<T> out;
  out.reserve(channels * height * width);
  for (const auto& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
  return BasicTensor<T>::from_op(
      "concat_channels", {channels, height, width}, std::move(out),
      std::move(nodes), [](TapeNode<T>& self) {
        std::size_t offset = 0;
        for (auto& in : self.inputs) {
          const std::size_t n = in->value.size();
          if (in->requires_grad) {
            accumulate<T>(*in, std::span<const T>(self.grad).subspan(offset, n));
          }
          offset += n;
        }
      });
}

template <typename T>
BasicTensor<T> nearest_upsample2x(const BasicTensor<T>& x) {
  require_rank(x, 3, "nearest_upsample2x", "input");
  const std::size_t channels = x.dim(0), height = x.dim(1), width = x.dim(2);
  const std::size_t oh = 2 * height, ow = 2 * width;
  std::vector<T> out(channels * oh * ow);
  const auto xv = x.values();
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t i = 0; i < oh; ++i) {
      const T* src = xv.data() + (c * height + i / 2) * width;
      T* dst = out.data() + (c * oh + i) * ow;
      for (std::size_t j = 0; j < ow; ++j) dst[j] = src[j / 2];
    }
  }
  return BasicTensor<T>::from_op(
      "nearest_upsample2x", {channels, oh, ow}, std::move(out), {x.node()},
      [channels, height, width, oh, ow](TapeNode<T>& self) {
        auto& g = self.inputs[0]->grad_buffer();
        for (std::size_t c = 0; c < channels; ++c) {
          for (std::size_t i = 0; i < oh; ++i) {
            T* dst = g.data() + (c * height + i / 2) * width;
            const T* src = self.grad.data() + (c * oh + i) * ow;
            for (std::size_t j = 0; j < ow; ++j) dst[j / 2] += src[j];
          }
        }
      });
}

template <typename T>
BasicTensor<T> average_pool2x(const BasicTensor<T>& x) {
  require_rank(x, 3, "average_pool2x", "input");
  const std::size_t channels = x.dim(0), height = x.dim(1), width = x.dim(2);
  if (height % 2 || width % 2) {
    throw DimensionError("average_pool2x: H and W must be even, got " +
                         shape_string(x.shape()));
  }
  const std::size_t oh = height / 2, ow = width / 2;
  std::vector<T> out(channels * oh * ow, T{0});
  const auto xv = x.values();
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t i = 0; i < height; ++i) {
      const T* src = xv.data() + (c * height + i) * width;
      T* dst = out.data() + (c * oh + i / 2) * ow;
      for (std::size_t j = 0; j < width; ++j) dst[j / 2] += src[j] * T(0.25);
    }
  }
  return BasicTensor<T>::from_op(
      "average_pool2x", {channels, oh, ow}, std::move(out), {x.node()},
      [channels, height, width, oh, ow](TapeNode<T>& self) {
        auto& g = self.inputs[0]->grad_buffer();
        for (std::size_t c = 0; c < channels; ++c) {
          for (std::size_t i = 0; i < height; ++i) {
            T* dst = g.data() + (c * height + i) * width;
            const T* src = self.grad.data() + (c * oh + i / 2) * ow;
            for (std::size_t j = 0; j < width; ++j) dst[j] += src[j / 2] * T(0.25);
          }
        }
      });
}

template <typename T>
BasicTensor<T> crop2d(const BasicTensor<T>& x, std::size_t top, std::size_t left,
                      std::size_t h, std::size_t w) {
  require_rank(x, 3, "crop2d", "input");
  const std::size_t channels = x.dim(0), height = x.dim(1), width = x.dim(2);
  if (top + h > height || left + w > width) {
    throw DimensionError("crop2d: window exceeds " + shape_string(x.shape()));
  }
  std::vector<T> out(channels * h * w);
  const auto xv = x.values();
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t i = 0; i < h; ++i) {
      const T* src = xv.data() + (c * height + top + i) * width + left;
      std::copy(src, src + w, out.data() + (c * h + i) * w);
    }
  }
  return BasicTensor<T>::from_op(
      "crop2d", {channels, h, w}, std::move(out), {x.node()},
      [=](TapeNode<T>& self) {
        auto& g = self.inputs[0]->grad_buffer();
        for (std::size_t c = 0; c < channels; ++c) {
          for (std::size_t i = 0; i < h; ++i) {
            T* dst = g.data() + (c * height + top + i) * width + left;
            const T* src = self.grad.data() + (c * h + i) * w;
            for (std::size_t j = 0; j < w; ++j) dst[j] += src[j];
          }
        }
      });
}

template <typename T>
BasicTensor<T> pad2d(const BasicTensor<T>& x, std::size_t top, std::size_t left,
                     std::size_t height, std::size_t width) {
  require_rank(x, 3, "pad2d", "input");
  const std::size_t channels = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (top + h > height || left + w > width) {
    throw DimensionError("pad2d: " + shape_string(x.shape()) +
                         " does not fit the target frame");
  }
  std::vector<T> out(channels * height * width, T{0});
  const auto xv = x.values();
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t i = 0; i < h; ++i) {
      const T* src = xv.data() + (c * h + i) * w;
      std::copy(src, src + w, out.data() + (c * height + top + i) * width + left);
    }
  }
  return BasicTensor<T>::from_op(
      "pad2d", {channels, height, width}, std::move(out), {x.node()},
      [=](TapeNode<T>& self) {
        auto& g = self.inputs[0]->grad_buffer();
        for (std::size_t c = 0; c < channels; ++c) {
          for (std::size_t i = 0; i < h; ++i) {
            const T* src = self.grad.data() + (c * height + top + i) * width + left;
            T* dst = g.data() + (c * h + i) * w;
            for (std::size_t j = 0; j < w; ++j) dst[j] += src[j];
          }
        }
      });
}

template <typename T>
BasicTensor<T> slice(const BasicTensor<T>& x, std::size_t offset,
                     std::size_t length) {
  require_rank(x, 1, "slice", "input");
  if (offset + length > x.numel() || length == 0) {
    throw DimensionError("slice: range exceeds " + shape_string(x.shape()));
  }
  std::vector<T> out(x.values().begin() + offset,
                     x.values().begin() + offset + length);
  return BasicTensor<T>::from_op(
      "slice", {length}, std::move(out), {x.node()},
      [offset, length](TapeNode<T>& self) {
        auto& g = self.inputs[0]->grad_buffer();
        for (std::size_t i = 0; i < length; ++i) g[offset + i] += self.grad[i];
      });
}

template <typename T>
BasicTensor<T> reshape(const BasicTensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: " + shape_string(x.shape()) + " -> " +
                         shape_string(shape));
  }
  std::vector<T> out(x.values().begin(), x.values().end());
  return BasicTensor<T>::from_op(
      "reshape", std::move(shape), std::move(out), {x.node()},
      [](TapeNode<T>& self) { accumulate<T>(*self.inputs[0], self.grad); });
}

template <typename T>
BasicTensor<T> gaussian_sample(Shape shape, Rng& rng) {
  std::vector<T> out(shape_numel(shape));
  for (auto& v : out) v = static_cast<T>(rng.normal());
  return BasicTensor<T>(std::move(shape), std::move(out));
}

#define CRPSLAM_INSTANTIATE_OPS(T)                                              \
  template BasicTensor<T> add(const BasicTensor<T>&, const BasicTensor<T>&);    \
  template BasicTensor<T> subtract(const BasicTensor<T>&, const BasicTensor<T>&); \
  template BasicTensor<T> multiply(const BasicTensor<T>&, const BasicTensor<T>&); \
  template BasicTensor<T> scale(const BasicTensor<T>&, T);                      \
  template BasicTensor<T> abs_subtract(const BasicTensor<T>&, const BasicTensor<T>&); \
  template BasicTensor<T> silu(const BasicTensor<T>&);                          \
  template BasicTensor<T> sum(const BasicTensor<T>&);                           \
  template BasicTensor<T> mean(const BasicTensor<T>&);                          \
  template BasicTensor<T> sum_over_axes(const BasicTensor<T>&,                  \
                                        const std::vector<std::size_t>&);       \
  template BasicTensor<T> mean_over_axes(const BasicTensor<T>&,                 \
                                         const std::vector<std::size_t>&);      \
  template BasicTensor<T> conv2d(const BasicTensor<T>&, const BasicTensor<T>&,  \
                                 const BasicTensor<T>&, Padding, std::size_t);  \
  template BasicTensor<T> linear(const BasicTensor<T>&, const BasicTensor<T>&,  \
                                 const BasicTensor<T>&);                        \
  template BasicTensor<T> cond_layer_norm(const BasicTensor<T>&,                \
                                          const BasicTensor<T>&,                \
                                          const BasicTensor<T>&, T);            \
  template BasicTensor<T> concat_channels(const std::vector<BasicTensor<T>>&);  \
  template BasicTensor<T> nearest_upsample2x(const BasicTensor<T>&);            \
  template BasicTensor<T> average_pool2x(const BasicTensor<T>&);                \
  template BasicTensor<T> crop2d(const BasicTensor<T>&, std::size_t,           \
                                 std::size_t, std::size_t, std::size_t);        \
  template BasicTensor<T> pad2d(const BasicTensor<T>&, std::size_t,            \
                                std::size_t, std::size_t, std::size_t);         \
  template BasicTensor<T> slice(const BasicTensor<T>&, std::size_t, std::size_t); \
  template BasicTensor<T> reshape(const BasicTensor<T>&, Shape);                \
  template BasicTensor<T> gaussian_sample(Shape, Rng&);

CRPSLAM_INSTANTIATE_OPS(float)
CRPSLAM_INSTANTIATE_OPS(double)

#undef CRPSLAM_INSTANTIATE_OPS

}  // namespace crpslam
