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

// Closed-form two-mode Gaussian state algebra.
//
// Quadratures are ordered (X_s, P_s, X_i, P_i) and normalized so that the
// vacuum variance of each quadrature is 1/4 (X = (a + a^dag)/2, [X, P] = i/2).

#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "twpa/errors.hpp"
#include "twpa/rng.hpp"

namespace twpa {

inline constexpr double kVacuumVariance = 0.25;

/// Index of each quadrature in a 4-vector / CovMatrix4.
enum Quadrature : int { kXs = 0, kPs = 1, kXi = 2, kPi = 3 };

inline constexpr std::array<std::string_view, 4> kQuadratureNames{"X_s", "P_s", "X_i", "P_i"};

enum class Mode { kSignal, kIdler };

/// Wraps an angle to (-pi, pi].
inline double wrap_angle(double radians) {
    double r = std::remainder(radians, 2.0 * std::numbers::pi);
    if (r <= -std::numbers::pi) r += 2.0 * std::numbers::pi;
    return r;
}

/// Amplifier parameters: linear power gains at the signal and idler
/// frequencies and the pump/signal/idler phase mismatch.
class TwpaParams {
public:
    TwpaParams() = default;
    TwpaParams(double gain_signal, double gain_idler, double phase_mismatch)
        : gain_signal_(gain_signal), gain_idler_(gain_idler),
          phase_mismatch_(wrap_angle(phase_mismatch)) {
        if (!(gain_signal >= 1.0) || !(gain_idler >= 1.0) || !std::isfinite(gain_signal) ||
            !std::isfinite(gain_idler)) {
            throw InvalidParameter("TwpaParams: gains must be finite and >= 1 (got G_s=" +
                                   std::to_string(gain_signal) +
                                   ", G_i=" + std::to_string(gain_idler) + ")");
        }
        if (!std::isfinite(phase_mismatch)) {
            throw InvalidParameter("TwpaParams: phase mismatch must be finite");
        }
    }

    double gain_signal() const { return gain_signal_; }
    double gain_idler() const { return gain_idler_; }
    double phase_mismatch() const { return phase_mismatch_; }

private:
    double gain_signal_ = 1.0;
    double gain_idler_ = 1.0;
    double phase_mismatch_ = 0.0;
};

/// 4x4 real symmetric quadrature covariance over (X_s, P_s, X_i, P_i).
class CovMatrix4 {
public:
    CovMatrix4() : m_(Eigen::Matrix4d::Zero()) {}
    explicit CovMatrix4(const Eigen::Matrix4d &m) : m_(m) {}

    static CovMatrix4 vacuum() { return CovMatrix4(kVacuumVariance * Eigen::Matrix4d::Identity()); }

    double operator()(int row, int col) const { return m_(row, col); }
    double &operator()(int row, int col) { return m_(row, col); }
    const Eigen::Matrix4d &matrix() const { return m_; }

    bool is_symmetric(double tol = 1e-12) const {
        return (m_ - m_.transpose()).cwiseAbs().maxCoeff() <= tol;
    }

private:
    Eigen::Matrix4d m_;
};

/// One demodulated IQ point per mode.
struct QuadratureSet {
    double x_signal = 0.0;
    double p_signal = 0.0;
    double x_idler = 0.0;
    double p_idler = 0.0;

    bool finite() const {
        return std::isfinite(x_signal) && std::isfinite(p_signal) && std::isfinite(x_idler) &&
               std::isfinite(p_idler);
    }
    Eigen::Vector4d as_vector() const { return {x_signal, p_signal, x_idler, p_idler}; }
    static QuadratureSet from_vector(const Eigen::Vector4d &v) { return {v[0], v[1], v[2], v[3]}; }
};

/// Output covariance of the vacuum-seeded amplifier.
///
/// Each output mode mixes its own input with the phase-rotated conjugate of
/// the partner input:
///   X_s = sqrt(G_s) X_s0 + sqrt(G_i - 1) (X_i0 cos t + P_i0 sin t)
///   P_s = sqrt(G_s) P_s0 + sqrt(G_i - 1) (X_i0 sin t - P_i0 cos t)
/// and symmetrically for the idler. With k = sqrt(G_s(G_s-1)) + sqrt(G_i(G_i-1))
/// the cross block is (k/4) [[cos t, sin t], [sin t, -cos t]].
inline CovMatrix4 tmsvs_covariance(const TwpaParams &params) {
    const double gs = params.gain_signal();
    const double gi = params.gain_idler();
    const double c = std::cos(params.phase_mismatch());
    const double s = std::sin(params.phase_mismatch());
    const double diag = (gs + gi - 1.0) * kVacuumVariance;
    const double k = (std::sqrt(gs * (gs - 1.0)) + std::sqrt(gi * (gi - 1.0))) * kVacuumVariance;

    Eigen::Matrix4d m = Eigen::Matrix4d::Zero();
    m.diagonal().setConstant(diag);
    m(kXs, kXi) = k * c;
    m(kXs, kPi) = k * s;
    m(kPs, kXi) = k * s;
    m(kPs, kPi) = -k * c;
    m.block<2, 2>(2, 0) = m.block<2, 2>(0, 2).transpose();
    return CovMatrix4(m);
}

/// Rotates one mode's (X, P) pair by `angle`:
/// (X', P') = (X cos a + P sin a, -X sin a + P cos a).
inline QuadratureSet rotate_quadrature(const QuadratureSet &q, Mode mode, double angle) {
    const double c = std::cos(angle);
    const double s = std::sin(angle);
    QuadratureSet out = q;
    if (mode == Mode::kSignal) {
        out.x_signal = q.x_signal * c + q.p_signal * s;
        out.p_signal = -q.x_signal * s + q.p_signal * c;
    } else {
        out.x_idler = q.x_idler * c + q.p_idler * s;
        out.p_idler = -q.x_idler * s + q.p_idler * c;
    }
    return out;
}

/// Same rotation applied to a covariance matrix: sigma' = R sigma R^T.
inline CovMatrix4 rotate_covariance(const CovMatrix4 &cov, Mode mode, double angle) {
    const double c = std::cos(angle);
    const double s = std::sin(angle);
    Eigen::Matrix4d r = Eigen::Matrix4d::Identity();
    const int o = mode == Mode::kSignal ? 0 : 2;
    r(o, o) = c;
    r(o, o + 1) = s;
    r(o + 1, o) = -s;
    r(o + 1, o + 1) = c;
    return CovMatrix4(r * cov.matrix() * r.transpose());
}

/// Pearson coefficient of (X_s, X_i).
inline double pearson_xx(const CovMatrix4 &cov) {
    const double vs = cov(kXs, kXs);
    const double vi = cov(kXi, kXi);
    if (!(vs > 0.0) || !(vi > 0.0)) {
        throw NumericalError("pearson_xx: X quadrature variances must be strictly positive");
    }
    return cov(kXs, kXi) / std::sqrt(vs * vi);
}

/// Variance of the collective quadrature X_s - X_i.
inline double collective_variance(const CovMatrix4 &cov) {
    return cov(kXs, kXs) + cov(kXi, kXi) - 2.0 * cov(kXs, kXi);
}

/// Squeezing of X_s - X_i relative to the two-mode vacuum level 1/2, in dB.
inline double squeezing_db(const CovMatrix4 &cov) {
    return 10.0 * std::log10(collective_variance(cov) / (2.0 * kVacuumVariance));
}

/// Standard symplectic form over (X_s, P_s, X_i, P_i).
inline Eigen::Matrix4d symplectic_form() {
    Eigen::Matrix4d omega = Eigen::Matrix4d::Zero();
    omega(0, 1) = 1.0;
    omega(1, 0) = -1.0;
    omega(2, 3) = 1.0;
    omega(3, 2) = -1.0;
    return omega;
}

/// Minimum eigenvalue of the Hermitian matrix sigma + (i/4) Omega.
///
/// With [X, P] = i/2 the uncertainty relation reads sigma + (i/4) Omega >= 0;
/// pure states (including vacuum) sit exactly on the boundary.
inline double uncertainty_min_eigenvalue(const CovMatrix4 &cov) {
    const std::complex<double> half_commutator(0.0, kVacuumVariance);
    const Eigen::Matrix4cd h = cov.matrix().cast<std::complex<double>>() +
                               half_commutator * symplectic_form().cast<std::complex<double>>();
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix4cd> solver(h, Eigen::EigenvaluesOnly);
    return solver.eigenvalues().minCoeff();
}

inline bool is_physical(const CovMatrix4 &cov, double tol = 1e-9) {
    return uncertainty_min_eigenvalue(cov) >= -tol;
}

/// Lower-triangular factor L with L L^T = cov, for drawing correlated shots.
///
/// Semidefinite inputs get one diagonal jitter of 1e-12 * trace / 4 before
/// the factorization is declared failed.
class GaussianSampler {
public:
    explicit GaussianSampler(const CovMatrix4 &cov) {
        if (!cov.is_symmetric(1e-12)) {
            throw NumericalError("GaussianSampler: covariance is not symmetric");
        }
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> eig(cov.matrix(), Eigen::EigenvaluesOnly);
        const double min_eig = eig.eigenvalues().minCoeff();
        if (min_eig < -1e-9) {
            throw NumericalError("GaussianSampler: covariance is not positive semidefinite "
                                 "(min eigenvalue " + std::to_string(min_eig) + ")");
        }
        Eigen::LLT<Eigen::Matrix4d> llt(cov.matrix());
        if (llt.info() != Eigen::Success) {
            const double jitter = 1e-12 * cov.matrix().trace() / 4.0;
            llt.compute(cov.matrix() + jitter * Eigen::Matrix4d::Identity());
            if (llt.info() != Eigen::Success) {
                throw NumericalError("GaussianSampler: Cholesky factorization failed after jitter");
            }
        }
        factor_ = llt.matrixL();
    }

    const Eigen::Matrix4d &factor() const { return factor_; }

    /// Correlated sample from four standard normals.
    QuadratureSet transform(const std::array<double, 4> &z) const {
        const Eigen::Vector4d v = factor_ * Eigen::Vector4d(z[0], z[1], z[2], z[3]);
        return QuadratureSet::from_vector(v);
    }

    QuadratureSet draw(NormalStream &stream) const { return transform(stream.next4()); }

private:
    Eigen::Matrix4d factor_;
};

/// n independent zero-mean samples with covariance `cov`. Sample i consumes
/// block 0 of stream i, so the result is reproducible for a fixed seed.
inline std::vector<QuadratureSet> sample_shots(const CovMatrix4 &cov, std::size_t n, uint64_t seed) {
    if (n < 1) throw InvalidParameter("sample_shots: n must be >= 1");
    const GaussianSampler sampler(cov);
    std::vector<QuadratureSet> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        NormalStream stream(seed, i, 0x5A3Du);
        out.push_back(sampler.draw(stream));
    }
    return out;
}

}  // namespace twpa
