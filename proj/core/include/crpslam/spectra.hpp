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

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace crpslam::spectra {

/// Radially binned spectral energy of a 2-D field.
///
/// Bin k collects the Fourier modes whose radius sqrt(kx^2 + ky^2) rounds
/// to k. Bins run from 1 up to the corner radius so that every non-mean
/// mode is counted; `resolved_max` = floor(min(H, W) / 2) marks the last
/// bin sampled isotropically.
struct EnergySpectrum {
  std::vector<double> wavenumber;
  std::vector<double> energy;
  std::vector<std::size_t> count;
  std::size_t resolved_max = 0;

  /// sum(count * energy); equals the field variance (Parseval).
  double total_energy() const;
};

using Complex = std::complex<double>;

/// In-place radix-2 FFT (forward, unnormalized). Size must be a power of 2.
void fft_inplace(std::span<Complex> data);

/// 2-D forward DFT of a real H x W field (row-major). Uses the radix-2 FFT
/// along axes whose length is a power of two, the direct sum otherwise.
std::vector<Complex> dft2d(std::span<const double> field, std::size_t height,
                           std::size_t width);

/// Direct O((HW)^2) 2-D DFT; reference implementation.
std::vector<Complex> dft2d_direct(std::span<const double> field,
                                  std::size_t height, std::size_t width);

/// Mean-removed, radially averaged energy |F|^2 / (H W)^2 per bin.
/// Requires H, W >= 8 and finite values.
EnergySpectrum radial_spectrum(std::span<const double> field, std::size_t height,
                               std::size_t width);
EnergySpectrum radial_spectrum(std::span<const float> field, std::size_t height,
                               std::size_t width);

/// Arithmetic mean of per-member spectra. Every field must be H x W.
EnergySpectrum ensemble_mean_spectrum(const std::vector<std::span<const float>>& members,
                                      std::size_t height, std::size_t width);

/// Mean of spectra that share a binning.
EnergySpectrum average_spectra(const std::vector<EnergySpectrum>& spectra);

}  // namespace crpslam::spectra
