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

#pragma once

#include <vector>

#include "crpslam/rng.hpp"
#include "crpslam/tensor.hpp"

namespace crpslam {

enum class Padding { kSame, kValid };

// Elementwise family. Operands must have identical shapes; there is no
// broadcasting.
template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> subtract(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> multiply(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& a, T factor);

/// |a - b| elementwise. The subgradient at a tie is 0.
template <typename T>
BasicTensor<T> abs_subtract(const BasicTensor<T>& a, const BasicTensor<T>& b);

/// x * sigmoid(x).
template <typename T>
BasicTensor<T> silu(const BasicTensor<T>& x);

// Reductions. Axes may be given in any order; the reduced axes are removed
// from the output shape (a full reduction yields shape [1]).
template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& x);
template <typename T>
BasicTensor<T> mean(const BasicTensor<T>& x);
template <typename T>
BasicTensor<T> sum_over_axes(const BasicTensor<T>& x,
                             const std::vector<std::size_t>& axes);
template <typename T>
BasicTensor<T> mean_over_axes(const BasicTensor<T>& x,
                              const std::vector<std::size_t>& axes);

/// input [C_in,H,W], kernel [C_out,C_in,k,k], bias [C_out]. k must be odd.
/// Same padding zero-pads k/2 cells; stride 2 halves (rounding up).
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& kernel,
                      const BasicTensor<T>& bias, Padding padding = Padding::kSame,
                      std::size_t stride = 1);

/// input [D_in], weight [D_out,D_in], bias [D_out].
template <typename T>
BasicTensor<T> linear(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                      const BasicTensor<T>& bias);

/// Layer norm over the channel vector at every spatial position of a
/// [C,H,W] input, followed by out = n * (1 + scale[c]) + shift[c].
/// scale and shift come from the conditioning path, so the op has no affine
/// parameters of its own.
template <typename T>
BasicTensor<T> cond_layer_norm(const BasicTensor<T>& input,
                               const BasicTensor<T>& scale,
                               const BasicTensor<T>& shift, T epsilon = T(1e-5));

/// Stacks [C_i,H,W] tensors along the channel axis.
template <typename T>
BasicTensor<T> concat_channels(const std::vector<BasicTensor<T>>& parts);

template <typename T>
BasicTensor<T> nearest_upsample2x(const BasicTensor<T>& x);

/// 2x2 mean pooling; H and W must be even.
template <typename T>
BasicTensor<T> average_pool2x(const BasicTensor<T>& x);

/// Window [top, top+h) x [left, left+w) of every channel of a [C,H,W] input.
template <typename T>
BasicTensor<T> crop2d(const BasicTensor<T>& x, std::size_t top, std::size_t left,
                      std::size_t h, std::size_t w);

/// Inverse placement of crop2d: embeds [C,h,w] into a zero [C,H,W] frame.
template <typename T>
BasicTensor<T> pad2d(const BasicTensor<T>& x, std::size_t top, std::size_t left,
                     std::size_t height, std::size_t width);

/// Contiguous slice [offset, offset+length) of a 1-D tensor.
template <typename T>
BasicTensor<T> slice(const BasicTensor<T>& x, std::size_t offset,
                     std::size_t length);

template <typename T>
BasicTensor<T> reshape(const BasicTensor<T>& x, Shape shape);

/// I.i.d. standard normal values drawn from `rng` in row-major order.
template <typename T>
BasicTensor<T> gaussian_sample(Shape shape, Rng& rng);

}  // namespace crpslam
