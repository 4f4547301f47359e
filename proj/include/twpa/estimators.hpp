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

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "twpa/errors.hpp"
#include "twpa/gaussian_core.hpp"

namespace twpa {

struct CovarianceEstimate {
    CovMatrix4 matrix;
    std::size_t n_shots = 0;
    Eigen::Matrix4d standard_errors = Eigen::Matrix4d::Zero();
};

/// Unbiased (n - 1) sample covariance with Gaussian-theory standard errors
/// SE(s_ij) = sqrt((s_ii s_jj + s_ij^2) / (n - 1)).
inline CovarianceEstimate estimate_covariance(std::span<const QuadratureSet> shots) {
    const std::size_t n = shots.size();
    if (n < 2) throw InvalidParameter("estimate_covariance: need at least 2 shots");
    Eigen::Vector4d mean = Eigen::Vector4d::Zero();
    for (const auto &q : shots) mean += q.as_vector();
    mean /= static_cast<double>(n);
    Eigen::Matrix4d acc = Eigen::Matrix4d::Zero();
    for (const auto &q : shots) {
        const Eigen::Vector4d d = q.as_vector() - mean;
        acc.selfadjointView<Eigen::Lower>().rankUpdate(d);
    }
    Eigen::Matrix4d cov = acc.selfadjointView<Eigen::Lower>();
    const double dof = static_cast<double>(n - 1);
    cov /= dof;

    CovarianceEstimate out;
    out.matrix = CovMatrix4(cov);
    out.n_shots = n;
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) {
            out.standard_errors(i, j) = std::sqrt((cov(i, i) * cov(j, j) + cov(i, j) * cov(i, j)) / dof);
        }
    }
    return out;
}

namespace detail {

inline Eigen::Matrix4d chain_normalization(double chain_gain_signal, double chain_gain_idler) {
    if (!(chain_gain_signal > 0.0) || !(chain_gain_idler > 0.0)) {
        throw InvalidParameter("infer_tmsvs: chain gains must be > 0");
    }
    const double ds = 1.0 / std::sqrt(chain_gain_signal);
    const double di = 1.0 / std::sqrt(chain_gain_idler);
    return Eigen::Vector4d(ds, ds, di, di).asDiagonal();
}

}  // namespace detail

/// Background-subtracted two-mode covariance:
/// N sigma_on N - N sigma_off N + I/4, with N the chain-gain normalization
/// (signal rows/cols over G_chain,s, idler over G_chain,i, cross blocks over
/// their geometric mean). No PSD projection is applied.
inline CovMatrix4 infer_tmsvs(const CovMatrix4 &on, const CovMatrix4 &off, double chain_gain_signal,
                              double chain_gain_idler) {
    const Eigen::Matrix4d d = detail::chain_normalization(chain_gain_signal, chain_gain_idler);
    return CovMatrix4(d * (on.matrix() - off.matrix()) * d +
                      kVacuumVariance * Eigen::Matrix4d::Identity());
}

inline CovMatrix4 infer_tmsvs(const CovarianceEstimate &on, const CovarianceEstimate &off,
                              double chain_gain_signal, double chain_gain_idler) {
    return infer_tmsvs(on.matrix, off.matrix, chain_gain_signal, chain_gain_idler);
}

struct PearsonEstimate {
    double value = 0.0;
    double standard_error = 0.0;
};

/// Pearson coefficient of the inferred matrix with a delta-method standard
/// error built from the Gaussian-theory covariance of the sample moments
/// cov(s_ab, s_cd) = (s_ac s_bd + s_ad s_bc) / (n - 1) of each stage.
inline PearsonEstimate inferred_pearson(const CovarianceEstimate &on, const CovarianceEstimate &off,
                                        double chain_gain_signal, double chain_gain_idler) {
    const CovMatrix4 inferred = infer_tmsvs(on, off, chain_gain_signal, chain_gain_idler);
    const double vs = inferred(kXs, kXs);
    const double vi = inferred(kXi, kXi);
    const double rho = pearson_xx(inferred);

    // d rho / d (s_XsXs, s_XiXi, s_XsXi) of the inferred matrix.
    const std::array<double, 3> grad = {-0.5 * rho / vs, -0.5 * rho / vi, 1.0 / std::sqrt(vs * vi)};
    const std::array<double, 3> scale = {1.0 / chain_gain_signal, 1.0 / chain_gain_idler,
                                         1.0 / std::sqrt(chain_gain_signal * chain_gain_idler)};
    constexpr std::array<std::array<int, 2>, 3> entries = {{{kXs, kXs}, {kXi, kXi}, {kXs, kXi}}};

    auto stage_variance = [&](const CovarianceEstimate &est) {
        const Eigen::Matrix4d &s = est.matrix.matrix();
        const double dof = static_cast<double>(est.n_shots - 1);
        double var = 0.0;
        for (int u = 0; u < 3; ++u) {
            for (int v = 0; v < 3; ++v) {
                const auto [a, b] = entries[u];
                const auto [c, d] = entries[v];
                const double moment_cov = (s(a, c) * s(b, d) + s(a, d) * s(b, c)) / dof;
                var += grad[u] * scale[u] * moment_cov * grad[v] * scale[v];
            }
        }
        return var;
    };
    return {rho, std::sqrt(stage_variance(on) + stage_variance(off))};
}

/// Rotates the idler pair of every shot by `alpha`.
inline std::vector<QuadratureSet> rotate_idler(std::span<const QuadratureSet> shots, double alpha) {
    std::vector<QuadratureSet> out;
    out.reserve(shots.size());
    for (const auto &q : shots) out.push_back(rotate_quadrature(q, Mode::kIdler, alpha));
    return out;
}

/// Inferred Pearson coefficient after rotating the idler of both stages by alpha.
inline PearsonEstimate pearson_at_phase(std::span<const QuadratureSet> shots_on,
                                        std::span<const QuadratureSet> shots_off, double chain_gain_signal,
                                        double chain_gain_idler, double alpha) {
    const auto on = estimate_covariance(rotate_idler(shots_on, alpha));
    const auto off = estimate_covariance(rotate_idler(shots_off, alpha));
    return inferred_pearson(on, off, chain_gain_signal, chain_gain_idler);
}

struct PhaseSweepResult {
    std::vector<double> alphas;
    std::vector<double> rho_values;
    std::vector<double> rho_errors;
    double alpha_star = 0.0;
    double rho_max = 0.0;
    bool alpha_star_refined = false;  // parabolic vertex rather than a grid point
};

/// `points` evenly spaced angles covering [0, 2 pi] inclusive.
inline std::vector<double> phase_grid(std::size_t points) {
    if (points == 0) throw InvalidParameter("phase grid needs at least one point");
    std::vector<double> grid(points, 0.0);
    if (points == 1) return grid;
    for (std::size_t k = 0; k < points; ++k) {
        grid[k] = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(points - 1);
    }
    return grid;
}

/// Vertex of the parabola through three points.
inline double parabola_vertex(double x0, double y0, double x1, double y1, double x2, double y2) {
    const double num = (x1 - x0) * (x1 - x0) * (y1 - y2) - (x1 - x2) * (x1 - x2) * (y1 - y0);
    const double den = (x1 - x0) * (y1 - y2) - (x1 - x2) * (y1 - y0);
    if (den == 0.0) return x1;
    return x1 - 0.5 * num / den;
}

inline PhaseSweepResult phase_sweep(std::span<const QuadratureSet> shots_on,
                                    std::span<const QuadratureSet> shots_off, double chain_gain_signal,
                                    double chain_gain_idler, std::span<const double> alphas) {
    if (alphas.empty()) throw InvalidParameter("phase_sweep: empty alpha grid");
    PhaseSweepResult out;
    out.alphas.assign(alphas.begin(), alphas.end());
    for (double alpha : alphas) {
        const auto est = pearson_at_phase(shots_on, shots_off, chain_gain_signal, chain_gain_idler, alpha);
        out.rho_values.push_back(est.value);
        out.rho_errors.push_back(est.standard_error);
    }
    const auto best = static_cast<std::size_t>(
        std::max_element(out.rho_values.begin(), out.rho_values.end()) - out.rho_values.begin());
    out.rho_max = out.rho_values[best];
    out.alpha_star = out.alphas[best];
    const std::size_t n = out.alphas.size();
    if (n < 3) return out;
    // A grid whose end points coincide modulo 2 pi wraps around.
    const double period = 2.0 * std::numbers::pi;
    const bool closed = std::abs(out.alphas.back() - out.alphas.front() - period) < 1e-9;
    double x0, y0, x2, y2;
    if (best > 0 && best + 1 < n) {
        x0 = out.alphas[best - 1], y0 = out.rho_values[best - 1];
        x2 = out.alphas[best + 1], y2 = out.rho_values[best + 1];
    } else if (closed && best == 0) {
        x0 = out.alphas[n - 2] - period, y0 = out.rho_values[n - 2];
        x2 = out.alphas[1], y2 = out.rho_values[1];
    } else if (closed) {
        x0 = out.alphas[n - 2], y0 = out.rho_values[n - 2];
        x2 = out.alphas[1] + period, y2 = out.rho_values[1];
    } else {
        return out;
    }
    const double v = parabola_vertex(x0, y0, out.alphas[best], out.rho_values[best], x2, y2);
    if (v >= x0 && v <= x2) {
        out.alpha_star = closed ? std::remainder(v - out.alphas.front(), period) + out.alphas.front() : v;
        if (closed && out.alpha_star < out.alphas.front()) out.alpha_star += period;
        out.alpha_star_refined = true;
    }
    return out;
}

}  // namespace twpa
