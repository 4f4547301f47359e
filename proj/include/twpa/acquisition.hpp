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

// Time-domain acquisition model.
//
// The broadband emission is a comb of bin pairs symmetric about the pump: the
// idler-side bin at f_p + d pairs with the signal-side bin at f_p - d, and each
// pair carries one two-mode squeezed sample. Each channel trace is the sum of
// its mode amplitudes a = X + iP rotating at their offset from the channel's
// demodulation frequency. Phases are referenced to the window centre.

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "twpa/errors.hpp"
#include "twpa/gaussian_core.hpp"
#include "twpa/parallel.hpp"
#include "twpa/rng.hpp"
#include "twpa/window.hpp"

namespace twpa {

using Complex = std::complex<double>;
using Trace = std::vector<Complex>;

inline constexpr double kMaxSupportedDetuning = 10e6;

/// Pump and demodulation frequencies in Hz. The detuning
/// 2 f_p - f_s - f_i is always derived, never stored.
class FrequencyPlan {
public:
    FrequencyPlan(double f_pump, double f_idler_demod, double f_signal_demod)
        : f_pump_(f_pump), f_idler_demod_(f_idler_demod), f_signal_demod_(f_signal_demod) {
        if (!(f_pump > 0.0) || !(f_idler_demod > 0.0) || !(f_signal_demod > 0.0)) {
            throw InvalidParameter("FrequencyPlan: frequencies must be positive");
        }
        if (f_signal_demod == f_idler_demod) {
            throw InvalidParameter("FrequencyPlan: signal and idler demodulation frequencies must differ");
        }
        if (std::abs(detuning()) > kMaxSupportedDetuning) {
            throw InvalidParameter("FrequencyPlan: |detuning| " + std::to_string(detuning()) +
                                   " Hz exceeds the supported 10 MHz");
        }
    }

    /// Plan with the signal demodulation frequency placed at the given detuning.
    static FrequencyPlan at_detuning(double f_pump, double f_idler_demod, double detuning) {
        return FrequencyPlan(f_pump, f_idler_demod, 2.0 * f_pump - f_idler_demod - detuning);
    }

    double f_pump() const { return f_pump_; }
    double f_idler_demod() const { return f_idler_demod_; }
    double f_signal_demod() const { return f_signal_demod_; }
    double detuning() const { return 2.0 * f_pump_ - f_signal_demod_ - f_idler_demod_; }

private:
    double f_pump_;
    double f_idler_demod_;
    double f_signal_demod_;
};

/// Discretized emission band: bins spaced `bin_spacing` apart covering
/// +-band_halfwidth around each demodulation frequency, all with the same
/// amplifier parameters.
struct EmissionBandModel {
    double band_halfwidth = 5e6;
    double bin_spacing = 25e3;
    TwpaParams per_bin_params{2.0, 2.0, 0.0};

    void validate(double tau_min, double tau_max) const {
        if (!(bin_spacing > 0.0) || !(band_halfwidth > 0.0)) {
            throw InvalidParameter("band: halfwidth and bin_spacing must be positive");
        }
        if (bin_spacing > 1.0 / (2.0 * tau_max) * (1.0 + 1e-12)) {
            throw InvalidParameter("band.bin_spacing " + std::to_string(bin_spacing) +
                                   " Hz exceeds 1/(2 tau_max) = " + std::to_string(0.5 / tau_max) + " Hz");
        }
        if (band_halfwidth < 10.0 / tau_min * (1.0 - 1e-12)) {
            throw InvalidParameter("band.halfwidth " + std::to_string(band_halfwidth) +
                                   " Hz is below 10/tau_min = " + std::to_string(10.0 / tau_min) + " Hz");
        }
    }
};

struct AcquisitionConfig {
    WindowSpec window;
    std::size_t n_shots = 100000;
    double lo_phase_signal = 0.0;
    double lo_phase_idler = 0.0;
    double chain_gain_signal = 1e6;
    double chain_gain_idler = 1e6;
    double added_noise_quanta = 10.0;
    double sample_rate = 100.0 / 6e-6;
    uint64_t seed = 1;

    void validate() const {
        window.validate();
        if (n_shots < 2) throw InvalidParameter("acquisition.n_shots must be >= 2");
        if (sample_rate * window.tau < 50.0 * (1.0 - 1e-12)) {
            throw InvalidParameter("acquisition.sample_rate must give at least 50 samples per window");
        }
        if (!(added_noise_quanta >= 0.0)) {
            throw InvalidParameter("acquisition.added_noise_quanta must be >= 0");
        }
        if (!(chain_gain_signal > 0.0) || !(chain_gain_idler > 0.0)) {
            throw InvalidParameter("acquisition chain gains must be > 0");
        }
    }
};

enum class Stage : uint32_t { kPumpOn = 0, kPumpOff = 1 };

struct ShotRecord {
    Stage stage = Stage::kPumpOn;
    QuadratureSet quadratures;
    std::size_t shot_index = 0;
};

struct ShotPair {
    ShotRecord on;
    ShotRecord off;
};

struct BasebandPair {
    Trace signal;
    Trace idler;
};

/// How run_experiment turns bin draws into IQ points. kTrace builds the full
/// sampled traces and demodulates them; kBinResponse uses the precomputed
/// demodulator response of every bin, which is the same linear map evaluated
/// without materializing the trace.
enum class SynthesisPath { kBinResponse, kTrace };

struct RunOptions {
    SynthesisPath path = SynthesisPath::kBinResponse;
    unsigned jobs = 1;
};

namespace detail {

// Stream tags within one shot: low byte is the purpose, bit 8 the stage.
inline constexpr uint32_t kTagBins = 0x01;
inline constexpr uint32_t kTagNoise = 0x02;

inline uint32_t stream_tag(Stage stage, uint32_t purpose) {
    return (static_cast<uint32_t>(stage) << 8) | purpose;
}

}  // namespace detail

/// Complex envelope-weighted integral of a baseband trace.
/// z = sum trace(t) E(t) e^{-i lo_phase} dt / sum E dt.
inline Complex demodulate_complex(std::span<const Complex> trace, const SampledWindow &window,
                                  double lo_phase) {
    if (trace.empty()) throw InvalidParameter("demodulate: empty trace");
    if (trace.size() != window.size()) {
        throw InvalidParameter("demodulate: trace length " + std::to_string(trace.size()) +
                               " does not match window length " + std::to_string(window.size()));
    }
    Complex acc(0.0, 0.0);
    for (std::size_t k = 0; k < trace.size(); ++k) acc += trace[k] * window.weights[k];
    return acc * window.dt / window.norm * std::polar(1.0, -lo_phase);
}

/// Demodulates one channel into its (X, P) pair.
inline std::pair<double, double> demodulate(std::span<const Complex> trace, const WindowSpec &window,
                                            double lo_phase) {
    if (trace.empty()) throw InvalidParameter("demodulate: empty trace");
    const Complex z = demodulate_complex(trace, sample_window(window, trace.size()), lo_phase);
    return {z.real(), z.imag()};
}

/// Precomputed geometry of one experiment: bin frequencies per channel,
/// sampled window, amplitude scaling and per-bin demodulator responses.
class AcquisitionModel {
public:
    AcquisitionModel(const FrequencyPlan &plan, const EmissionBandModel &band, const WindowSpec &window,
                     double sample_rate)
        : plan_(plan), band_(band), window_(window), sampler_(tmsvs_covariance(band.per_bin_params)) {
        window.validate();
        band.validate(window.tau, window.tau);
        const std::size_t n = samples_per_window(sample_rate, window.tau);
        if (n < 2) throw InvalidParameter("acquisition.sample_rate too low for window");
        sampled_ = sample_window(window, n);

        const double idler_offset = plan.f_idler_demod() - plan.f_pump();
        const double signal_offset = plan.f_signal_demod() - plan.f_pump();
        // Bins live on the idler side (f_p + d); their partners sit at f_p - d.
        const double centre = std::abs(idler_offset);
        const double side = idler_offset > 0.0 ? 1.0 : -1.0;
        if (centre - band.band_halfwidth <= 0.0) {
            throw InvalidParameter("band: idler demodulation offset " + std::to_string(idler_offset) +
                                   " Hz must exceed band.halfwidth so signal and idler bands do not overlap");
        }
        const double signal_low = -side * centre - band.band_halfwidth;
        const double signal_high = -side * centre + band.band_halfwidth;
        if (signal_offset < signal_low - 1e-6 || signal_offset > signal_high + 1e-6) {
            throw InvalidParameter("signal demodulation frequency " + std::to_string(plan.f_signal_demod()) +
                                   " Hz lies outside the emission band [" +
                                   std::to_string(plan.f_pump() + signal_low) + ", " +
                                   std::to_string(plan.f_pump() + signal_high) + "] Hz");
        }

        const auto half_bins = static_cast<long>(std::floor(band.band_halfwidth / band.bin_spacing + 1e-9));
        const double effective_rate = static_cast<double>(n) / window.tau;
        for (long j = -half_bins; j <= half_bins; ++j) {
            const double idler_mode = side * (centre + static_cast<double>(j) * band.bin_spacing);
            const double signal_mode = -idler_mode;
            idler_freqs_.push_back(idler_mode - idler_offset);
            signal_freqs_.push_back(signal_mode - signal_offset);
        }
        for (const auto *freqs : {&idler_freqs_, &signal_freqs_}) {
            for (double f : *freqs) {
                if (std::abs(f) >= 0.5 * effective_rate) {
                    throw InvalidParameter("baseband component at " + std::to_string(f) +
                                           " Hz exceeds the Nyquist limit of sample_rate " +
                                           std::to_string(effective_rate) + " Hz");
                }
            }
        }
        // Each channel is calibrated so vacuum in every bin demodulates to
        // exactly 1/4 per quadrature: sum_k |response_k|^2 = 1. In the
        // continuum limit this is sqrt(bin_spacing / ENBW); the discrete sum
        // also absorbs the window response lost beyond the band edges.
        signal_response_ = responses(signal_freqs_, signal_scale_);
        idler_response_ = responses(idler_freqs_, idler_scale_);
    }

    const FrequencyPlan &plan() const { return plan_; }
    const EmissionBandModel &band() const { return band_; }
    const WindowSpec &window() const { return window_; }
    const SampledWindow &sampled_window() const { return sampled_; }
    std::size_t n_bins() const { return signal_freqs_.size(); }
    std::size_t n_samples() const { return sampled_.size(); }
    double signal_amplitude_scale() const { return signal_scale_; }
    double idler_amplitude_scale() const { return idler_scale_; }
    const std::vector<double> &signal_baseband_freqs() const { return signal_freqs_; }
    const std::vector<double> &idler_baseband_freqs() const { return idler_freqs_; }

    /// Mode amplitudes (a_s, a_i) of one bin pair, before amplitude scaling.
    std::pair<Complex, Complex> draw_bin(Stage stage, NormalStream &stream) const {
        const auto z = stream.next4();
        if (stage == Stage::kPumpOff) {
            return {Complex(0.5 * z[0], 0.5 * z[1]), Complex(0.5 * z[2], 0.5 * z[3])};
        }
        const QuadratureSet q = sampler_.transform(z);
        return {Complex(q.x_signal, q.p_signal), Complex(q.x_idler, q.p_idler)};
    }

    BasebandPair synthesize(Stage stage, NormalStream &stream) const {
        const std::size_t n = n_samples();
        BasebandPair out{Trace(n), Trace(n)};
        for (std::size_t b = 0; b < n_bins(); ++b) {
            const auto [as, ai] = draw_bin(stage, stream);
            accumulate_tone(out.signal, as * signal_scale_, signal_freqs_[b]);
            accumulate_tone(out.idler, ai * idler_scale_, idler_freqs_[b]);
        }
        return out;
    }

    /// Demodulated (z_s, z_i) of the field alone, via per-bin responses.
    /// Consumes the bin stream exactly like synthesize().
    std::pair<Complex, Complex> demodulate_field(Stage stage, NormalStream &stream) const {
        // Hot loop: spelled-out real arithmetic, same values as draw_bin().
        const Eigen::Matrix4d &l = sampler_.factor();
        const bool on = stage == Stage::kPumpOn;
        double zs_re = 0.0, zs_im = 0.0, zi_re = 0.0, zi_im = 0.0;
        for (std::size_t b = 0; b < n_bins(); ++b) {
            const auto z = stream.next4();
            double xs, ps, xi, pi;
            if (on) {
                xs = l(0, 0) * z[0];
                ps = l(1, 0) * z[0] + l(1, 1) * z[1];
                xi = l(2, 0) * z[0] + l(2, 1) * z[1] + l(2, 2) * z[2];
                pi = l(3, 0) * z[0] + l(3, 1) * z[1] + l(3, 2) * z[2] + l(3, 3) * z[3];
            } else {
                xs = 0.5 * z[0];
                ps = 0.5 * z[1];
                xi = 0.5 * z[2];
                pi = 0.5 * z[3];
            }
            const double rs_re = signal_response_[b].real(), rs_im = signal_response_[b].imag();
            const double ri_re = idler_response_[b].real(), ri_im = idler_response_[b].imag();
            zs_re += xs * rs_re - ps * rs_im;
            zs_im += xs * rs_im + ps * rs_re;
            zi_re += xi * ri_re - pi * ri_im;
            zi_im += xi * ri_im + pi * ri_re;
        }
        return {Complex(zs_re, zs_im), Complex(zi_re, zi_im)};
    }

    /// Exact covariance of the demodulated field (LO phases zero, ideal
    /// chain) implied by the bin responses: sum_k M_k sigma_bin M_k^T.
    CovMatrix4 expected_covariance(Stage stage) const {
        const Eigen::Matrix4d bin = stage == Stage::kPumpOff
                                        ? CovMatrix4::vacuum().matrix()
                                        : tmsvs_covariance(band_.per_bin_params).matrix();
        Eigen::Matrix4d acc = Eigen::Matrix4d::Zero();
        for (std::size_t b = 0; b < n_bins(); ++b) {
            Eigen::Matrix4d m = Eigen::Matrix4d::Zero();
            const Complex rs = signal_response_[b];
            const Complex ri = idler_response_[b];
            m.block<2, 2>(0, 0) << rs.real(), -rs.imag(), rs.imag(), rs.real();
            m.block<2, 2>(2, 2) << ri.real(), -ri.imag(), ri.imag(), ri.real();
            acc += m * bin * m.transpose();
        }
        return CovMatrix4(0.5 * (acc + acc.transpose()));
    }

private:
    double phase_time(std::size_t k) const { return sampled_.time(k) - 0.5 * sampled_.tau; }

    void accumulate_tone(Trace &trace, Complex amplitude, double freq) const {
        const double w = 2.0 * std::numbers::pi * freq;
        for (std::size_t k = 0; k < trace.size(); ++k) {
            trace[k] += amplitude * std::polar(1.0, w * phase_time(k));
        }
    }

    // Demodulator output for a tone at each frequency (LO phase 0), scaled to
    // unit total power; the scale is returned through `scale`.
    std::vector<Complex> responses(const std::vector<double> &freqs, double &scale) const {
        std::vector<Complex> out;
        out.reserve(freqs.size());
        Trace tone(n_samples());
        double power = 0.0;
        for (double f : freqs) {
            std::fill(tone.begin(), tone.end(), Complex(0.0, 0.0));
            accumulate_tone(tone, Complex(1.0, 0.0), f);
            out.push_back(demodulate_complex(tone, sampled_, 0.0));
            power += std::norm(out.back());
        }
        scale = 1.0 / std::sqrt(power);
        for (auto &r : out) r *= scale;
        return out;
    }

    FrequencyPlan plan_;
    EmissionBandModel band_;
    WindowSpec window_;
    GaussianSampler sampler_;
    SampledWindow sampled_;
    std::vector<double> signal_freqs_;
    std::vector<double> idler_freqs_;
    std::vector<Complex> signal_response_;
    std::vector<Complex> idler_response_;
    double signal_scale_ = 1.0;
    double idler_scale_ = 1.0;
};

/// Signal and idler baseband traces for one stage. Pump-off bins are
/// independent vacuum; pump-on bins are two-mode squeezed pairs.
inline BasebandPair synthesize_baseband_pair(const EmissionBandModel &band, const FrequencyPlan &plan,
                                             const WindowSpec &window, double sample_rate, Stage stage,
                                             NormalStream &stream) {
    return AcquisitionModel(plan, band, window, sample_rate).synthesize(stage, stream);
}

/// Runs n_shots ON/OFF acquisitions. Shot i stage s draws from the
/// substreams (seed, i, tag(s, purpose)), so any scheduling of shots yields
/// identical records.
///
/// The detection chain multiplies each channel by sqrt(chain_gain) after
/// adding white noise of added_noise_quanta vacuum units referred to input.
inline std::vector<ShotPair> run_experiment(const FrequencyPlan &plan, const EmissionBandModel &band,
                                            const AcquisitionConfig &acq, const RunOptions &options = {}) {
    acq.validate();
    const AcquisitionModel model(plan, band, acq.window, acq.sample_rate);
    const SampledWindow &sw = model.sampled_window();
    const Complex lo_s = std::polar(1.0, -acq.lo_phase_signal);
    const Complex lo_i = std::polar(1.0, -acq.lo_phase_idler);
    const double amp_s = std::sqrt(acq.chain_gain_signal);
    const double amp_i = std::sqrt(acq.chain_gain_idler);
    // Per-quadrature noise std after demodulation, and per trace sample.
    const double noise_demod = std::sqrt(acq.added_noise_quanta * kVacuumVariance);
    const double noise_sample = std::sqrt(acq.added_noise_quanta * kVacuumVariance /
                                          (sw.dt * sw.noise_bandwidth()));

    auto acquire = [&](std::size_t shot, Stage stage) {
        NormalStream bins(acq.seed, shot, detail::stream_tag(stage, detail::kTagBins));
        NormalStream noise(acq.seed, shot, detail::stream_tag(stage, detail::kTagNoise));
        Complex zs, zi;
        if (options.path == SynthesisPath::kBinResponse) {
            std::tie(zs, zi) = model.demodulate_field(stage, bins);
            zs *= lo_s;
            zi *= lo_i;
            if (acq.added_noise_quanta > 0.0) {
                const auto n = noise.next4();
                zs += noise_demod * Complex(n[0], n[1]) * lo_s;
                zi += noise_demod * Complex(n[2], n[3]) * lo_i;
            }
        } else {
            BasebandPair traces = model.synthesize(stage, bins);
            if (acq.added_noise_quanta > 0.0) {
                for (std::size_t k = 0; k < traces.signal.size(); ++k) {
                    const auto n = noise.next4();
                    traces.signal[k] += noise_sample * Complex(n[0], n[1]);
                    traces.idler[k] += noise_sample * Complex(n[2], n[3]);
                }
            }
            zs = demodulate_complex(traces.signal, sw, acq.lo_phase_signal);
            zi = demodulate_complex(traces.idler, sw, acq.lo_phase_idler);
        }
        zs *= amp_s;
        zi *= amp_i;
        return ShotRecord{stage, QuadratureSet{zs.real(), zs.imag(), zi.real(), zi.imag()}, shot};
    };

    std::vector<ShotPair> out(acq.n_shots);
    parallel_for(acq.n_shots, options.jobs, [&](std::size_t i) {
        out[i].on = acquire(i, Stage::kPumpOn);
        out[i].off = acquire(i, Stage::kPumpOff);
    });
    return out;
}

/// Quadratures of one stage, in shot order.
inline std::vector<QuadratureSet> stage_quadratures(std::span<const ShotPair> shots, Stage stage) {
    std::vector<QuadratureSet> out;
    out.reserve(shots.size());
    for (const auto &pair : shots) {
        out.push_back(stage == Stage::kPumpOn ? pair.on.quadratures : pair.off.quadratures);
    }
    return out;
}

}  // namespace twpa
