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

#include <cstddef>
#include <cstdint>
#include <vector>

#include "crpslam/tensor.hpp"

namespace crpslam {

/// Limited-area grid: a rectangular frame whose outer `boundary` cells on
/// every side are prescribed, the rest (the interior) is predicted.
struct DomainSpec {
  std::size_t height = 24;
  std::size_t width = 24;
  std::size_t boundary = 4;
  std::size_t state_vars = 2;    // d_x
  std::size_t forcing_vars = 2;  // d_f
  std::size_t static_vars = 1;   // d_s, excluding the interior mask
  double step_hours = 3.0;

  std::size_t interior_height() const { return height - 2 * boundary; }
  std::size_t interior_width() const { return width - 2 * boundary; }
  std::size_t interior_cells() const { return interior_height() * interior_width(); }
  bool is_interior(std::size_t row, std::size_t col) const {
    return row >= boundary && row < height - boundary && col >= boundary &&
           col < width - boundary;
  }
  /// Channels of the stacked network input.
  std::size_t input_channels() const {
    return 5 * state_vars + 3 * forcing_vars + static_vars + 1;
  }

  /// Throws ConfigError unless boundary >= 1 and the interior is >= 8x8.
  void validate() const;

  bool operator==(const DomainSpec&) const = default;
};

/// [1,H,W] indicator of interior cells.
template <typename T>
BasicTensor<T> interior_mask(const DomainSpec& domain);
/// [1,H,W] indicator of boundary cells.
template <typename T>
BasicTensor<T> boundary_mask(const DomainSpec& domain);

/// Ground-truth episode X^0..X^T on the limited-area frame.
struct Trajectory {
  std::vector<FieldTensor> states;    // each [d_x, H, W]
  std::vector<FieldTensor> forcings;  // each [d_f, H, W]
  FieldTensor statics;                // [d_s, H, W]
  double start_hour = 0.0;
  std::uint64_t seed = 0;

  std::size_t steps() const { return states.empty() ? 0 : states.size() - 1; }
};

/// Network inputs for one step t -> t+1.
///
/// The interior part carries X^{t-1}, X^t with boundary cells zeroed; the
/// boundary part carries X^{t-1}, X^t, X^{t+1} with interior cells zeroed.
/// `target` is the full X^{t+1} frame; losses read its interior only.
template <typename T>
struct BasicWindow {
  BasicTensor<T> interior_states;   // [2 d_x, H, W]
  BasicTensor<T> boundary_states;   // [3 d_x, H, W]
  BasicTensor<T> forcings;          // [3 d_f, H, W]
  BasicTensor<T> statics;           // [d_s + 1, H, W], last channel = mask
  BasicTensor<T> current_interior;  // X_I^t, [d_x, H_I, W_I]
  BasicTensor<T> target;            // X^{t+1}, [d_x, H, W]
  std::size_t t = 0;

  /// All channels in network order.
  BasicTensor<T> stacked() const;
};

using ModelInputWindow = BasicWindow<float>;

/// Assembles a window from full-frame tensors. Differentiable with respect
/// to `previous` and `current`, which is how autoregressive training feeds
/// predictions back in.
template <typename T>
BasicWindow<T> assemble_window(const DomainSpec& domain,
                               const BasicTensor<T>& previous,
                               const BasicTensor<T>& current,
                               const BasicTensor<T>& next_truth,
                               const BasicTensor<T>& forcing_prev,
                               const BasicTensor<T>& forcing_cur,
                               const BasicTensor<T>& forcing_next,
                               const BasicTensor<T>& statics, std::size_t t);

/// Window for step t of a stored trajectory; requires 1 <= t <= T-1.
template <typename T = float>
BasicWindow<T> build_window(const DomainSpec& domain, const Trajectory& trajectory,
                            std::size_t t);

/// Interior crop [d, H_I, W_I] of a full frame.
template <typename T>
BasicTensor<T> crop_interior(const DomainSpec& domain, const BasicTensor<T>& full);

/// Full frame with interior from `predicted_interior` and boundary frame
/// from `true_full`.
template <typename T>
BasicTensor<T> reassemble_full_state(const DomainSpec& domain,
                                     const BasicTensor<T>& predicted_interior,
                                     const BasicTensor<T>& true_full);

/// Per-variable normalization statistics from the training split.
struct NormStats {
  std::vector<float> mean;
  std::vector<float> stddev;
};

/// Population mean and std per variable over all cells and times. Throws
/// DataError for a constant variable.
NormStats compute_stats(const std::vector<Trajectory>& trajectories);

FieldTensor normalize(const FieldTensor& state, const NormStats& stats);
FieldTensor denormalize(const FieldTensor& state, const NormStats& stats);
Trajectory normalize(const Trajectory& trajectory, const NormStats& stats);

}  // namespace crpslam
