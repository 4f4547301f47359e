// Copyright 2026 The twpa-corr Authors
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

#include <cmath>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "twpa/errors.hpp"

namespace twpa {

enum class WindowShape { kRectangular, kGaussian };

/// Floor beta that pins the Gaussian envelope to zero at both edges:
/// (1 + beta) e^{-2} - beta = 0.
inline const double kGaussianFloor = std::exp(-2.0) / (1.0 - std::exp(-2.0));

inline std::string_view to_string(WindowShape shape) {
    return shape == WindowShape::kRectangular ? "rectangular" : "gaussian";
}

inline WindowShape window_shape_from_string(std::string_view name) {
    if (name == "rectangular" || name == "rect") return WindowShape::kRectangular;
    if (name == "gaussian" || name == "gauss") return WindowShape::kGaussian;
    throw InvalidParameter("unknown window shape '" + std::string(name) + "'");
}

/// Acquisition window of duration tau.
///
/// Gaussian: E(t) = (1 + beta) exp(-2 (2t/tau - 1)^2) - beta on [0, tau],
/// so E(0) = E(tau) = 0 and E(tau/2) = 1.
struct WindowSpec {
    WindowShape shape = WindowShape::kRectangular;
    double tau = 6e-6;
    double gaussian_floor = kGaussianFloor;

    void validate() const {
        if (!(tau > 0.0) || !std::isfinite(tau)) {
            throw InvalidParameter("window.tau must be a positive duration in seconds");
        }
        if (shape == WindowShape::kGaussian && std::abs(envelope(0.0)) > 1e-12) {
            throw InvalidParameter("window.gaussian_floor must zero the envelope at t = 0");
        }
    }

    double envelope(double t) const {
        if (shape == WindowShape::kRectangular) return 1.0;
        const double u = 2.0 * t / tau - 1.0;
        return (1.0 + gaussian_floor) * std::exp(-2.0 * u * u) - gaussian_floor;
    }
};

/// The window evaluated on a midpoint grid of n samples, t_k = (k + 1/2) tau / n.
struct SampledWindow {
    std::vector<double> weights;  // E(t_k)
    double dt = 0.0;
    double tau = 0.0;
    double norm = 0.0;  // sum E dt, so a unit constant trace demodulates to 1

    std::size_t size() const { return weights.size(); }
    double time(std::size_t k) const { return (static_cast<double>(k) + 0.5) * dt; }

    /// Noise-equivalent bandwidth sum(E^2) dt / norm^2 in Hz; 1/tau for the
    /// rectangular window.
    double noise_bandwidth() const {
        double acc = 0.0;
        for (double w : weights) acc += w * w;
        return acc * dt / (norm * norm);
    }
};

inline std::size_t samples_per_window(double sample_rate, double tau) {
    return static_cast<std::size_t>(std::llround(sample_rate * tau));
}

inline SampledWindow sample_window(const WindowSpec &window, std::size_t n_samples) {
    window.validate();
    if (n_samples == 0) throw InvalidParameter("sample_window: need at least one sample");
    SampledWindow out;
    out.tau = window.tau;
    out.dt = window.tau / static_cast<double>(n_samples);
    out.weights.resize(n_samples);
    double sum = 0.0;
    for (std::size_t k = 0; k < n_samples; ++k) {
        out.weights[k] = window.envelope(out.time(k));
        sum += out.weights[k];
    }
    out.norm = sum * out.dt;
    return out;
}

}  // namespace twpa
