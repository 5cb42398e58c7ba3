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

#include "crpslam/spectra.hpp"

#include <bit>
#include <cmath>
#include <numbers>

#include "crpslam/errors.hpp"

namespace crpslam::spectra {

namespace {

bool is_power_of_two(std::size_t n) { return n != 0 && std::has_single_bit(n); }

void dft_direct_1d(std::span<Complex> data) {
  const std::size_t n = data.size();
  std::vector<Complex> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    Complex acc{0.0, 0.0};
    for (std::size_t j = 0; j < n; ++j) {
      const double angle = -2.0 * std::numbers::pi * static_cast<double>((k * j) % n) /
                           static_cast<double>(n);
      acc += data[j] * Complex(std::cos(angle), std::sin(angle));
    }
    out[k] = acc;
  }
  std::copy(out.begin(), out.end(), data.begin());
}

void transform_1d(std::span<Complex> data) {
  if (is_power_of_two(data.size())) {
    fft_inplace(data);
  } else {
    dft_direct_1d(data);
  }
}

}  // namespace

double EnergySpectrum::total_energy() const {
  double total = 0.0;
  for (std::size_t i = 0; i < energy.size(); ++i) {
    total += energy[i] * static_cast<double>(count[i]);
  }
  return total;
}

void fft_inplace(std::span<Complex> data) {
  const std::size_t n = data.size();
  if (!is_power_of_two(n)) throw DimensionError("fft_inplace: size must be a power of two");
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(data[i], data[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double angle = -2.0 * std::numbers::pi / static_cast<double>(len);
    for (std::size_t start = 0; start < n; start += len) {
      for (std::size_t k = 0; k < len / 2; ++k) {
        const double a = angle * static_cast<double>(k);
        const Complex w(std::cos(a), std::sin(a));
        const Complex u = data[start + k];
        const Complex v = data[start + k + len / 2] * w;
        data[start + k] = u + v;
        data[start + k + len / 2] = u - v;
      }
    }
  }
}

std::vector<Complex> dft2d(std::span<const double> field, std::size_t height,
                           std::size_t width) {
  if (field.size() != height * width) throw DimensionError("dft2d: size mismatch");
  std::vector<Complex> grid(field.begin(), field.end());
  for (std::size_t i = 0; i < height; ++i) {
    transform_1d(std::span<Complex>(grid).subspan(i * width, width));
  }
  std::vector<Complex> column(height);
  for (std::size_t j = 0; j < width; ++j) {
    for (std::size_t i = 0; i < height; ++i) column[i] = grid[i * width + j];
    transform_1d(column);
    for (std::size_t i = 0; i < height; ++i) grid[i * width + j] = column[i];
  }
  return grid;
}

std::vector<Complex> dft2d_direct(std::span<const double> field,
                                  std::size_t height, std::size_t width) {
  if (field.size() != height * width) throw DimensionError("dft2d_direct: size mismatch");
  std::vector<Complex> out(height * width);
  for (std::size_t ky = 0; ky < height; ++ky) {
    for (std::size_t kx = 0; kx < width; ++kx) {
      Complex acc{0.0, 0.0};
      for (std::size_t y = 0; y < height; ++y) {
        for (std::size_t x = 0; x < width; ++x) {
          const double phase =
              -2.0 * std::numbers::pi *
              (static_cast<double>((ky * y) % height) / static_cast<double>(height) +
               static_cast<double>((kx * x) % width) / static_cast<double>(width));
          acc += field[y * width + x] * Complex(std::cos(phase), std::sin(phase));
        }
      }
      out[ky * width + kx] = acc;
    }
  }
  return out;
}

EnergySpectrum radial_spectrum(std::span<const double> field, std::size_t height,
                               std::size_t width) {
  if (height < 8 || width < 8) {
    throw DimensionError("radial_spectrum: field must be at least 8x8");
  }
  if (field.size() != height * width) throw DimensionError("radial_spectrum: size mismatch");
  double mean = 0.0;
  for (double v : field) {
    if (!std::isfinite(v)) throw NumericError("radial_spectrum: non-finite field value");
    mean += v;
  }
  mean /= static_cast<double>(field.size());
  std::vector<double> centered(field.begin(), field.end());
  for (auto& v : centered) v -= mean;

  const auto coeffs = dft2d(centered, height, width);
  const auto signed_freq = [](std::size_t k, std::size_t n) {
    return k <= n / 2 ? static_cast<double>(k) : static_cast<double>(k) - static_cast<double>(n);
  };
  const double hy = static_cast<double>(height / 2), hx = static_cast<double>(width / 2);
  const auto max_bin = static_cast<std::size_t>(std::lround(std::sqrt(hy * hy + hx * hx)));
  const double norm = static_cast<double>(height * width) * static_cast<double>(height * width);

  EnergySpectrum spec;
  spec.resolved_max = std::min(height, width) / 2;
  spec.wavenumber.resize(max_bin);
  spec.energy.assign(max_bin, 0.0);
  spec.count.assign(max_bin, 0);
  for (std::size_t b = 0; b < max_bin; ++b) spec.wavenumber[b] = static_cast<double>(b + 1);

  for (std::size_t ky = 0; ky < height; ++ky) {
    for (std::size_t kx = 0; kx < width; ++kx) {
      const double fy = signed_freq(ky, height), fx = signed_freq(kx, width);
      const auto bin = static_cast<std::size_t>(std::lround(std::sqrt(fy * fy + fx * fx)));
      if (bin == 0) continue;
      spec.energy[bin - 1] += std::norm(coeffs[ky * width + kx]) / norm;
      spec.count[bin - 1] += 1;
    }
  }
  for (std::size_t b = 0; b < max_bin; ++b) {
    if (spec.count[b]) spec.energy[b] /= static_cast<double>(spec.count[b]);
  }
  return spec;
}

EnergySpectrum radial_spectrum(std::span<const float> field, std::size_t height,
                               std::size_t width) {
  std::vector<double> wide(field.begin(), field.end());
  return radial_spectrum(std::span<const double>(wide), height, width);
}

EnergySpectrum average_spectra(const std::vector<EnergySpectrum>& spectra) {
  if (spectra.empty()) throw DimensionError("average_spectra: no spectra");
  EnergySpectrum out = spectra.front();
  for (std::size_t i = 1; i < spectra.size(); ++i) {
    if (spectra[i].energy.size() != out.energy.size()) {
      throw DimensionError("average_spectra: binning mismatch");
    }
    for (std::size_t b = 0; b < out.energy.size(); ++b) out.energy[b] += spectra[i].energy[b];
  }
  for (auto& e : out.energy) e /= static_cast<double>(spectra.size());
  return out;
}

EnergySpectrum ensemble_mean_spectrum(const std::vector<std::span<const float>>& members,
                                      std::size_t height, std::size_t width) {
  if (members.empty()) throw DimensionError("ensemble_mean_spectrum: no members");
  std::vector<EnergySpectrum> all;
  all.reserve(members.size());
  for (const auto& m : members) all.push_back(radial_spectrum(m, height, width));
  return average_spectra(all);
}

}  // namespace crpslam::spectra
