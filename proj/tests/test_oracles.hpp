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

// Independent reference computations for the test suites. Nothing in here
// calls into the library's numerical routines.

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "twpa/gaussian_core.hpp"

namespace test_oracles {

/// Sample covariance (divisor n) of the amplifier output obtained by drawing
/// the four vacuum input quadratures (variance 1/4) and applying
///   X_s = sqrt(Gs) X_s0 + sqrt(Gi-1) (X_i0 cos t + P_i0 sin t)
///   P_s = sqrt(Gs) P_s0 + sqrt(Gi-1) (X_i0 sin t - P_i0 cos t)
///   X_i = sqrt(Gi) X_i0 + sqrt(Gs-1) (X_s0 cos t + P_s0 sin t)
///   P_i = sqrt(Gi) P_i0 + sqrt(Gs-1) (X_s0 sin t - P_s0 cos t)
inline Eigen::Matrix4d monte_carlo_amplifier_covariance(double gs, double gi, double theta, long n,
                                                        uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> vac(0.0, 0.5);
    const double c = std::cos(theta), s = std::sin(theta);
    const double a = std::sqrt(gs), b = std::sqrt(gi - 1.0), d = std::sqrt(gi), e = std::sqrt(gs - 1.0);
    Eigen::Matrix4d acc = Eigen::Matrix4d::Zero();
    Eigen::Vector4d sum = Eigen::Vector4d::Zero();
    for (long k = 0; k < n; ++k) {
        const double xs0 = vac(gen), ps0 = vac(gen), xi0 = vac(gen), pi0 = vac(gen);
        Eigen::Vector4d out;
        out[0] = a * xs0 + b * (xi0 * c + pi0 * s);
        out[1] = a * ps0 + b * (xi0 * s - pi0 * c);
        out[2] = d * xi0 + e * (xs0 * c + ps0 * s);
        out[3] = d * pi0 + e * (xs0 * s - ps0 * c);
        sum += out;
        acc += out * out.transpose();
    }
    const Eigen::Vector4d mean = sum / static_cast<double>(n);
    return acc / static_cast<double>(n) - mean * mean.transpose();
}

/// Plain two-pass sample covariance (divisor n).
inline Eigen::Matrix4d empirical_covariance(std::span<const twpa::QuadratureSet> shots) {
    Eigen::Vector4d mean = Eigen::Vector4d::Zero();
    for (const auto &q : shots) mean += Eigen::Vector4d(q.x_signal, q.p_signal, q.x_idler, q.p_idler);
    mean /= static_cast<double>(shots.size());
    Eigen::Matrix4d acc = Eigen::Matrix4d::Zero();
    for (const auto &q : shots) {
        const Eigen::Vector4d d = Eigen::Vector4d(q.x_signal, q.p_signal, q.x_idler, q.p_idler) - mean;
        acc += d * d.transpose();
    }
    return acc / static_cast<double>(shots.size());
}

/// Continuous window envelope on [0, tau], written out independently.
inline double envelope(bool gaussian, double t, double tau) {
    if (!gaussian) return 1.0;
    const double beta = std::exp(-2.0) / (1.0 - std::exp(-2.0));
    const double u = 2.0 * t / tau - 1.0;
    return (1.0 + beta) * std::exp(-2.0 * u * u) - beta;
}

/// |int_0^tau E(t)^2 e^{i 2 pi df (t - tau/2)} dt| / int_0^tau E(t)^2 dt by
/// composite Simpson quadrature on `intervals` panels.
inline double normalized_overlap_kernel(bool gaussian, double tau, double df, int intervals = 4000) {
    const double h = tau / intervals;
    std::complex<double> num(0.0, 0.0);
    double den = 0.0;
    for (int k = 0; k <= intervals; ++k) {
        const double t = k * h;
        const double w = (k == 0 || k == intervals) ? 1.0 : (k % 2 == 1 ? 4.0 : 2.0);
        const double e2 = envelope(gaussian, t, tau) * envelope(gaussian, t, tau);
        num += w * e2 * std::polar(1.0, 2.0 * std::numbers::pi * df * (t - 0.5 * tau));
        den += w * e2;
    }
    return std::abs(num) / den;
}

/// Unnormalized sin(x)/x.
inline double sinc(double x) { return x == 0.0 ? 1.0 : std::sin(x) / x; }

}  // namespace test_oracles
