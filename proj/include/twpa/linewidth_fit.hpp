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

// Detuning sweeps and linewidth fits.
//
// Models, with sinc(y) = sin(y)/y and xi in seconds multiplying the detuning
// in Hz:
//   abs_sinc:  m = |A sinc(xi df)|,          FWHM = 2 * 1.895494267 / xi
//   gaussian:  m = A exp(-(xi df)^2 / 2),    FWHM = 2 * sqrt(2 ln 2) / xi

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "twpa/acquisition.hpp"
#include "twpa/errors.hpp"
#include "twpa/estimators.hpp"
#include "twpa/rng.hpp"

namespace twpa {

/// Root of sin(y)/y = 1/2.
inline constexpr double kSincHalfMaxArg = 1.895494267033981;
/// Root of exp(-y^2/2) = 1/2.
inline const double kGaussHalfMaxArg = std::sqrt(2.0 * std::numbers::ln2);

enum class FitModel { kAbsSinc, kGaussian };

inline std::string_view to_string(FitModel model) {
    return model == FitModel::kAbsSinc ? "abs_sinc" : "gaussian";
}

/// The model matching a window family.
inline FitModel natural_model(WindowShape shape) {
    return shape == WindowShape::kRectangular ? FitModel::kAbsSinc : FitModel::kGaussian;
}

struct DetuningSweep {
    std::vector<double> detunings;   // Hz, strictly increasing
    std::vector<double> rho_values;  // signed Pearson coefficient at the fixed phase
    std::vector<double> rho_errors;
    WindowSpec window;
    double alpha_star = 0.0;       // phase fixed at matching
    double rho_max_at_phase = 0.0;  // phase-sweep maximum at zero detuning

    void validate() const {
        if (detunings.size() < 5) throw InvalidParameter("DetuningSweep: need at least 5 points");
        if (rho_values.size() != detunings.size() ||
            (!rho_errors.empty() && rho_errors.size() != detunings.size())) {
            throw InvalidParameter("DetuningSweep: detunings, rho values and errors must have equal length");
        }
        for (std::size_t k = 1; k < detunings.size(); ++k) {
            if (!(detunings[k] > detunings[k - 1])) {
                throw InvalidParameter("DetuningSweep: detunings must be strictly increasing");
            }
        }
    }
};

struct LinewidthFit {
    FitModel model = FitModel::kAbsSinc;
    double amplitude_A = 0.0;
    double scale_xi = 0.0;  // seconds
    double fwhm = 0.0;      // Hz
    double snr = 0.0;
    double residual_rms = 0.0;
    double objective = 0.0;  // weighted sum of squares at the solution
    bool converged = false;
    int n_iterations = 0;
};

// ---------------------------------------------------------------------------
// Models

namespace detail {

inline double sinc(double y) {
    if (std::abs(y) < 1e-4) {
        const double y2 = y * y;
        return 1.0 - y2 / 6.0 + y2 * y2 / 120.0;
    }
    return std::sin(y) / y;
}

inline double sinc_derivative(double y) {
    if (std::abs(y) < 1e-4) return -y / 3.0 + y * y * y / 30.0;
    return (y * std::cos(y) - std::sin(y)) / (y * y);
}

}  // namespace detail

inline double model_value(FitModel model, double amplitude, double xi, double detuning) {
    const double y = xi * detuning;
    if (model == FitModel::kAbsSinc) return std::abs(amplitude * detail::sinc(y));
    return amplitude * std::exp(-0.5 * y * y);
}

/// (dm/dA, dm/dxi) of the model. The sinc model uses the one-sided sign of
/// A sinc at its zeros.
inline std::array<double, 2> model_gradient(FitModel model, double amplitude, double xi, double detuning) {
    const double y = xi * detuning;
    if (model == FitModel::kAbsSinc) {
        const double s = detail::sinc(y);
        const double sign = amplitude * s >= 0.0 ? 1.0 : -1.0;
        return {sign * s, sign * amplitude * detail::sinc_derivative(y) * detuning};
    }
    const double g = std::exp(-0.5 * y * y);
    return {g, -amplitude * g * y * detuning};
}

inline double model_fwhm(FitModel model, double xi) {
    const double arg = model == FitModel::kAbsSinc ? kSincHalfMaxArg : kGaussHalfMaxArg;
    return 2.0 * arg / std::abs(xi);
}

namespace detail {

inline bool use_weights(const DetuningSweep &sweep) {
    if (sweep.rho_errors.size() != sweep.detunings.size()) return false;
    return std::all_of(sweep.rho_errors.begin(), sweep.rho_errors.end(),
                       [](double e) { return e > 0.0 && std::isfinite(e); });
}

}  // namespace detail

/// Weighted objective sum(((|rho_k| - m_k) / SE_k)^2); unweighted when
/// errors are missing or non-positive.
inline double fit_objective(const DetuningSweep &sweep, FitModel model, double amplitude, double xi) {
    const bool weighted = detail::use_weights(sweep);
    double acc = 0.0;
    for (std::size_t k = 0; k < sweep.detunings.size(); ++k) {
        const double w = weighted ? 1.0 / sweep.rho_errors[k] : 1.0;
        const double r = w * (std::abs(sweep.rho_values[k]) - model_value(model, amplitude, xi, sweep.detunings[k]));
        acc += r * r;
    }
    return acc;
}

/// Analytic gradient of fit_objective with respect to (A, xi).
inline std::array<double, 2> fit_objective_gradient(const DetuningSweep &sweep, FitModel model,
                                                    double amplitude, double xi) {
    const bool weighted = detail::use_weights(sweep);
    std::array<double, 2> g{0.0, 0.0};
    for (std::size_t k = 0; k < sweep.detunings.size(); ++k) {
        const double w = weighted ? 1.0 / sweep.rho_errors[k] : 1.0;
        const double df = sweep.detunings[k];
        const double r = w * (std::abs(sweep.rho_values[k]) - model_value(model, amplitude, xi, df));
        const auto dm = model_gradient(model, amplitude, xi, df);
        g[0] += -2.0 * w * r * dm[0];
        g[1] += -2.0 * w * r * dm[1];
    }
    return g;
}

/// Initial (A, xi) from the raw curve: A0 = max|rho|, xi0 from the
/// interpolated half-maximum crossing.
inline std::array<double, 2> initial_guess(const DetuningSweep &sweep, FitModel model) {
    const auto &x = sweep.detunings;
    std::vector<double> y(sweep.rho_values.size());
    std::transform(sweep.rho_values.begin(), sweep.rho_values.end(), y.begin(),
                   [](double v) { return std::abs(v); });
    const auto peak = static_cast<std::size_t>(std::max_element(y.begin(), y.end()) - y.begin());
    const double a0 = y[peak];
    const double half = 0.5 * a0;

    std::vector<double> crossings;
    for (std::size_t k = peak; k + 1 < y.size(); ++k) {
        if (y[k + 1] < half) {
            const double t = (y[k] - half) / (y[k] - y[k + 1]);
            crossings.push_back(std::abs(x[k] + t * (x[k + 1] - x[k])));
            break;
        }
    }
    for (std::size_t k = peak; k > 0; --k) {
        if (y[k - 1] < half) {
            const double t = (y[k] - half) / (y[k] - y[k - 1]);
            crossings.push_back(std::abs(x[k] + t * (x[k - 1] - x[k])));
            break;
        }
    }
    double half_width = std::max(std::abs(x.front()), std::abs(x.back()));
    if (!crossings.empty()) {
        double sum = 0.0;
        for (double c : crossings) sum += c;
        half_width = sum / static_cast<double>(crossings.size());
    }
    if (!(half_width > 0.0)) half_width = std::max(std::abs(x.front()), std::abs(x.back()));
    const double arg = model == FitModel::kAbsSinc ? kSincHalfMaxArg : kGaussHalfMaxArg;
    return {a0, arg / half_width};
}

struct FitOptions {
    int max_iterations = 200;
    double relative_tolerance = 1e-9;
};

/// Levenberg-Marquardt fit of |rho(df)|.
///
/// Internally xi is rescaled by the sweep half-span so both parameters are
/// O(1). `converged` is set once an accepted step decreases the objective by
/// less than relative_tolerance or no step can decrease it further; the
/// iteration then keeps polishing until no improvement is possible or the
/// iteration cap is hit.
inline LinewidthFit fit_model(const DetuningSweep &sweep, FitModel model,
                              std::optional<std::array<double, 2>> start = std::nullopt,
                              const FitOptions &options = {}) {
    sweep.validate();
    {
        double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
        for (double v : sweep.rho_values) {
            lo = std::min(lo, std::abs(v));
            hi = std::max(hi, std::abs(v));
        }
        if (!(hi > 0.0) || hi - lo <= 1e-12 * hi) {
            throw NumericalError("fit_model: degenerate flat data");
        }
    }
    const double span = std::max(std::abs(sweep.detunings.front()), std::abs(sweep.detunings.back()));
    const bool weighted = detail::use_weights(sweep);
    const std::size_t n = sweep.detunings.size();

    const auto guess = start.value_or(initial_guess(sweep, model));
    Eigen::Vector2d p(guess[0], guess[1] * span);  // (A, u = xi * span)

    Eigen::VectorXd r(n);
    Eigen::MatrixXd jac(n, 2);
    auto evaluate = [&](const Eigen::Vector2d &q, bool with_jacobian) {
        double obj = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            const double w = weighted ? 1.0 / sweep.rho_errors[k] : 1.0;
            const double x = sweep.detunings[k] / span;
            r[k] = w * (std::abs(sweep.rho_values[k]) - model_value(model, q[0], q[1], x));
            obj += r[k] * r[k];
            if (with_jacobian) {
                const auto dm = model_gradient(model, q[0], q[1], x);
                jac(k, 0) = -w * dm[0];
                jac(k, 1) = -w * dm[1];
            }
        }
        return obj;
    };

    LinewidthFit fit;
    fit.model = model;
    double objective = evaluate(p, true);
    double lambda = 1e-3;
    bool converged = false;
    int iter = 0;
    for (; iter < options.max_iterations; ++iter) {
        if (objective <= std::numeric_limits<double>::min()) {
            converged = true;
            break;
        }
        const Eigen::Matrix2d h = jac.transpose() * jac;
        const Eigen::Vector2d g = jac.transpose() * r;
        const Eigen::Vector2d diag = h.diagonal().cwiseMax(1e-12 * h.diagonal().maxCoeff());
        bool accepted = false;
        while (lambda < 1e16) {
            Eigen::Matrix2d damped = h;
            damped.diagonal() += lambda * diag;
            const Eigen::Vector2d step = damped.ldlt().solve(-g);
            const Eigen::Vector2d trial = p + step;
            const double trial_obj = evaluate(trial, false);
            if (std::isfinite(trial_obj) && trial_obj < objective) {
                const double rel = (objective - trial_obj) / objective;
                p = trial;
                objective = evaluate(p, true);
                lambda = std::max(lambda / 10.0, 1e-12);
                accepted = true;
                if (rel < options.relative_tolerance) converged = true;
                break;
            }
            lambda *= 10.0;
        }
        if (!accepted) {
            converged = true;  // no descent direction left
            break;
        }
    }
    // Re-evaluate so r holds the residuals of the final parameters.
    objective = evaluate(p, false);

    fit.amplitude_A = std::abs(p[0]);
    fit.scale_xi = std::abs(p[1]) / span;
    fit.fwhm = model_fwhm(model, fit.scale_xi);
    fit.objective = objective;
    fit.converged = converged;
    fit.n_iterations = iter;
    double ss = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double e = std::abs(sweep.rho_values[k]) -
                         model_value(model, fit.amplitude_A, fit.scale_xi, sweep.detunings[k]);
        ss += e * e;
    }
    fit.residual_rms = std::sqrt(ss / static_cast<double>(n));
    fit.snr = fit.residual_rms > 0.0 ? fit.amplitude_A / fit.residual_rms
                                     : std::numeric_limits<double>::infinity();
    return fit;
}

// ---------------------------------------------------------------------------
// Sweeps

/// `points` evenly spaced detunings covering [-span/2, +span/2].
inline std::vector<double> detuning_grid(std::size_t points, double span) {
    if (points < 2 || !(span > 0.0)) throw InvalidParameter("detuning grid needs >= 2 points and span > 0");
    std::vector<double> grid(points);
    for (std::size_t k = 0; k < points; ++k) {
        grid[k] = -0.5 * span + span * static_cast<double>(k) / static_cast<double>(points - 1);
    }
    return grid;
}

struct SweepSetup {
    double f_pump = 6.331e9;
    double f_idler_demod = 6.481e9;
    EmissionBandModel band;
    AcquisitionConfig acq;
    std::vector<double> detunings;
    std::size_t phase_points = 73;
    RunOptions run;
};

/// Seeds used by sweep_detuning: phase calibration, then one per point.
inline uint64_t phase_calibration_seed(uint64_t seed) { return derive_seed(seed, {0x9A5Eull}); }
inline uint64_t sweep_point_seed(uint64_t seed, std::size_t index) {
    return derive_seed(seed, {0xDE70ull, static_cast<uint64_t>(index)});
}

/// Calibrates the idler phase at zero detuning, then measures rho at that
/// fixed phase for every detuning. Each point is an independent experiment.
inline DetuningSweep sweep_detuning(const SweepSetup &setup) {
    DetuningSweep sweep;
    sweep.window = setup.acq.window;
    sweep.detunings = setup.detunings;
    for (double df : setup.detunings) {
        if (std::abs(df) > setup.band.band_halfwidth) {
            throw InvalidParameter("detuning " + std::to_string(df) + " Hz lies outside the emission band");
        }
    }

    AcquisitionConfig acq = setup.acq;
    acq.seed = phase_calibration_seed(setup.acq.seed);
    {
        const auto plan = FrequencyPlan::at_detuning(setup.f_pump, setup.f_idler_demod, 0.0);
        const auto shots = run_experiment(plan, setup.band, acq, setup.run);
        const auto on = stage_quadratures(shots, Stage::kPumpOn);
        const auto off = stage_quadratures(shots, Stage::kPumpOff);
        const auto grid = phase_grid(setup.phase_points);
        const auto phase = phase_sweep(on, off, acq.chain_gain_signal, acq.chain_gain_idler, grid);
        sweep.alpha_star = phase.alpha_star;
        sweep.rho_max_at_phase = phase.rho_max;
    }

    for (std::size_t k = 0; k < setup.detunings.size(); ++k) {
        acq.seed = sweep_point_seed(setup.acq.seed, k);
        const auto plan = FrequencyPlan::at_detuning(setup.f_pump, setup.f_idler_demod, setup.detunings[k]);
        const auto shots = run_experiment(plan, setup.band, acq, setup.run);
        const auto est = pearson_at_phase(stage_quadratures(shots, Stage::kPumpOn),
                                          stage_quadratures(shots, Stage::kPumpOff), acq.chain_gain_signal,
                                          acq.chain_gain_idler, sweep.alpha_star);
        sweep.rho_values.push_back(est.value);
        sweep.rho_errors.push_back(est.standard_error);
    }
    return sweep;
}

// ---------------------------------------------------------------------------
// Window comparison

struct SidelobeMeasure {
    double level = std::numeric_limits<double>::quiet_NaN();  // max |rho| in the lobe region
    double standard_error = std::numeric_limits<double>::quiet_NaN();
    double detuning = std::numeric_limits<double>::quiet_NaN();
    double boundary = 0.0;  // |df| beyond which the region starts
    bool region_empty = true;
};

/// Largest |rho| away from the main peak.
///
/// Rectangular window: beyond the first minimum past the peak, which is the
/// fitted sinc's first zero pi/xi (or the first local minimum of the data
/// when the fit is not a sinc). Gaussian window: beyond 1.5 FWHM.
inline SidelobeMeasure sidelobe_level(const LinewidthFit &fit, const DetuningSweep &sweep) {
    SidelobeMeasure out;
    if (sweep.window.shape == WindowShape::kGaussian) {
        out.boundary = 1.5 * fit.fwhm;
    } else if (fit.model == FitModel::kAbsSinc) {
        out.boundary = std::numbers::pi / fit.scale_xi;
    } else {
        const auto peak = static_cast<std::size_t>(
            std::max_element(sweep.rho_values.begin(), sweep.rho_values.end(),
                             [](double a, double b) { return std::abs(a) < std::abs(b); }) -
            sweep.rho_values.begin());
        std::size_t k = peak;
        while (k + 1 < sweep.rho_values.size() &&
               std::abs(sweep.rho_values[k + 1]) < std::abs(sweep.rho_values[k])) {
            ++k;
        }
        out.boundary = std::abs(sweep.detunings[k]);
    }
    for (std::size_t k = 0; k < sweep.detunings.size(); ++k) {
        if (std::abs(sweep.detunings[k]) <= out.boundary) continue;
        const double v = std::abs(sweep.rho_values[k]);
        if (out.region_empty || v > out.level) {
            out.level = v;
            out.detuning = sweep.detunings[k];
            out.standard_error = k < sweep.rho_errors.size() ? sweep.rho_errors[k] : 0.0;
            out.region_empty = false;
        }
    }
    return out;
}

struct WindowComparisonRow {
    WindowShape shape = WindowShape::kRectangular;
    double tau = 0.0;
    FitModel model = FitModel::kAbsSinc;
    double amplitude_A = 0.0;
    double fwhm = 0.0;
    double snr = 0.0;
    SidelobeMeasure sidelobe;
    double fwhm_tau = 0.0;
};

/// Per-(window, tau) linewidth summary. fits[k] must belong to sweeps[k].
inline std::vector<WindowComparisonRow> compare_windows(std::span<const LinewidthFit> fits,
                                                        std::span<const DetuningSweep> sweeps) {
    if (fits.size() != sweeps.size()) {
        throw InvalidParameter("compare_windows: need one fit per sweep");
    }
    const auto has = [&](WindowShape s) {
        return std::any_of(sweeps.begin(), sweeps.end(), [s](const DetuningSweep &w) { return w.window.shape == s; });
    };
    if (!has(WindowShape::kRectangular) || !has(WindowShape::kGaussian)) {
        throw InvalidParameter("compare_windows: need at least one rectangular and one gaussian case");
    }
    std::vector<WindowComparisonRow> rows;
    for (std::size_t k = 0; k < fits.size(); ++k) {
        WindowComparisonRow row;
        row.shape = sweeps[k].window.shape;
        row.tau = sweeps[k].window.tau;
        row.model = fits[k].model;
        row.amplitude_A = fits[k].amplitude_A;
        row.fwhm = fits[k].fwhm;
        row.snr = fits[k].snr;
        row.sidelobe = sidelobe_level(fits[k], sweeps[k]);
        row.fwhm_tau = fits[k].fwhm * row.tau;
        rows.push_back(row);
    }
    return rows;
}

}  // namespace twpa
