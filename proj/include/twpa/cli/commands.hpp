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

// The four subcommands of twpa_corr. Each takes a validated config plus
// command-line overrides, writes its artifacts and returns an exit code.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "twpa/acquisition.hpp"
#include "twpa/cli/config.hpp"
#include "twpa/cli/output.hpp"
#include "twpa/estimators.hpp"
#include "twpa/gaussian_core.hpp"
#include "twpa/linewidth_fit.hpp"
#include "twpa/parallel.hpp"

namespace twpa::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumerical = 3;

inline double to_deg(double rad) { return rad * 180.0 / std::numbers::pi; }

struct CommandOptions {
    std::optional<std::string> out_dir;
    std::optional<uint64_t> seed;
    std::optional<std::size_t> points;
    std::optional<double> span;
    unsigned jobs = 1;
    bool strict = false;
    bool histograms = false;
    std::size_t dump_traces = 0;
};

enum class Command { kSimulate, kPhaseSweep, kLinewidth, kCompareWindows };

/// Folds command-line overrides into the config. --points means phase
/// points for phase-sweep and detuning points for the linewidth commands.
inline void apply_overrides(ExperimentConfig &cfg, const CommandOptions &opt, Command cmd) {
    if (opt.out_dir) cfg.output_dir = *opt.out_dir;
    if (opt.seed) cfg.seed = *opt.seed;
    if (opt.points) {
        if (cmd == Command::kPhaseSweep) {
            if (*opt.points < 1) throw ConfigError("--points: phase sweep needs at least 1 point");
            cfg.phase.points = *opt.points;
        } else {
            if (*opt.points < 5) throw ConfigError("--points: detuning sweep needs at least 5 points");
            cfg.linewidth.points = *opt.points;
        }
    }
    if (opt.span) {
        if (!(*opt.span > 0.0)) throw ConfigError("--span: must be > 0");
        cfg.linewidth.span = *opt.span;
    }
    if (opt.histograms) cfg.phase.histograms = true;
    if (opt.jobs < 1) throw ConfigError("--jobs: must be >= 1");
}

namespace detail {

inline std::filesystem::path prepare_dir(const std::string &dir) {
    std::filesystem::path p(dir);
    std::filesystem::create_directories(p);
    return p;
}

inline std::vector<std::string> matrix_row(const std::string &name, const Eigen::Matrix4d &m, int r) {
    return {name, std::string(kQuadratureNames[r]), fmt9(m(r, 0)), fmt9(m(r, 1)), fmt9(m(r, 2)), fmt9(m(r, 3))};
}

inline nlohmann::json matrix_json(const Eigen::Matrix4d &m) {
    nlohmann::json rows = nlohmann::json::array();
    for (int r = 0; r < 4; ++r) rows.push_back({m(r, 0), m(r, 1), m(r, 2), m(r, 3)});
    return rows;
}

inline std::string tau_label(double tau) { return fmt9(tau * 1e6); }

struct Experiment {
    FrequencyPlan plan;
    AcquisitionConfig acq;
    std::vector<QuadratureSet> on, off;
};

inline Experiment run_configured(const ExperimentConfig &cfg, unsigned jobs) {
    Experiment e{FrequencyPlan::at_detuning(cfg.f_pump, cfg.f_idler_demod, cfg.detuning),
                 cfg.acquisition_for(cfg.window), {}, {}};
    const auto shots = run_experiment(e.plan, cfg.band, e.acq, RunOptions{cfg.synthesis, jobs});
    e.on = stage_quadratures(shots, Stage::kPumpOn);
    e.off = stage_quadratures(shots, Stage::kPumpOff);
    return e;
}

}  // namespace detail

inline int cmd_simulate(const ExperimentConfig &cfg, const CommandOptions &opt, std::ostream &log) {
    const RunStamp stamp = make_stamp(canonical_json(cfg), cfg.seed);
    const auto dir = detail::prepare_dir(cfg.output_dir);
    const auto e = detail::run_configured(cfg, opt.jobs);
    const double gs = e.acq.chain_gain_signal, gi = e.acq.chain_gain_idler;

    const auto on = estimate_covariance(e.on);
    const auto off = estimate_covariance(e.off);
    const CovMatrix4 inferred = infer_tmsvs(on, off, gs, gi);
    const CovMatrix4 analytic = tmsvs_covariance(cfg.twpa);
    const auto rho = inferred_pearson(on, off, gs, gi);

    {
        CsvWriter csv(dir / "simulate_covariance.csv", stamp, {"matrix", "row", "X_s", "P_s", "X_i", "P_i"});
        const std::pair<const char *, Eigen::Matrix4d> mats[] = {
            {"on", on.matrix.matrix()},           {"on_se", on.standard_errors},
            {"off", off.matrix.matrix()},         {"off_se", off.standard_errors},
            {"inferred", inferred.matrix()},      {"analytic", analytic.matrix()}};
        for (const auto &[name, m] : mats) {
            for (int r = 0; r < 4; ++r) csv.row(detail::matrix_row(name, m, r));
        }
    }
    {
        CsvWriter csv(dir / "simulate_shots.csv", stamp, {"stage", "quadrature", "mean", "variance"});
        for (const auto &[name, shots, est] : {std::tuple{"on", &e.on, &on}, std::tuple{"off", &e.off, &off}}) {
            Eigen::Vector4d mean = Eigen::Vector4d::Zero();
            for (const auto &q : *shots) mean += q.as_vector();
            mean /= static_cast<double>(shots->size());
            for (int r = 0; r < 4; ++r) {
                csv.row({name, std::string(kQuadratureNames[r]), fmt9(mean[r]), fmt9(est->matrix(r, r))});
            }
        }
    }
    const double min_eig = uncertainty_min_eigenvalue(inferred);
    write_json(dir / "simulate_summary.json", stamp,
               {{"command", "simulate"},
                {"n_shots", e.acq.n_shots},
                {"detuning_hz", e.plan.detuning()},
                {"f_signal_demod_hz", e.plan.f_signal_demod()},
                {"rho", rho.value},
                {"rho_se", rho.standard_error},
                {"rho_analytic", pearson_xx(analytic)},
                {"squeezing_db", squeezing_db(inferred)},
                {"squeezing_db_analytic", squeezing_db(analytic)},
                {"uncertainty_min_eigenvalue", min_eig},
                {"physical", min_eig >= -1e-9},
                {"inferred_covariance", detail::matrix_json(inferred.matrix())}});

    if (opt.dump_traces > 0) {
        // Field only: no chain gain, noise or LO rotation.
        const AcquisitionModel model(e.plan, cfg.band, e.acq.window, e.acq.sample_rate);
        CsvWriter csv(dir / "traces.csv", stamp, {"shot", "stage", "channel", "k", "t_s", "re", "im"});
        const std::size_t n = std::min(opt.dump_traces, e.acq.n_shots);
        for (std::size_t i = 0; i < n; ++i) {
            for (Stage stage : {Stage::kPumpOn, Stage::kPumpOff}) {
                NormalStream bins(e.acq.seed, i, twpa::detail::stream_tag(stage, twpa::detail::kTagBins));
                const auto traces = model.synthesize(stage, bins);
                const char *sname = stage == Stage::kPumpOn ? "on" : "off";
                for (const auto &[cname, tr] : {std::pair{"signal", &traces.signal}, std::pair{"idler", &traces.idler}}) {
                    for (std::size_t k = 0; k < tr->size(); ++k) {
                        csv.row({std::to_string(i), sname, cname, std::to_string(k),
                                 fmt9(model.sampled_window().time(k)), fmt9((*tr)[k].real()), fmt9((*tr)[k].imag())});
                    }
                }
            }
        }
    }
    log << "simulate: rho = " << fmt9(rho.value) << " +/- " << fmt9(rho.standard_error) << " (analytic "
        << fmt9(pearson_xx(analytic)) << "), outputs in " << dir.string() << "\n";
    return kExitOk;
}

namespace detail {

/// 2D histogram of chain-normalized ON-stage (X_s, X_i) with the idler
/// rotated by alpha, on a fixed square range.
inline void write_histogram(const std::filesystem::path &path, const RunStamp &stamp,
                            std::span<const QuadratureSet> on, double gs, double gi, double alpha,
                            std::size_t bins, double half_range) {
    std::vector<long> counts(bins * bins, 0);
    const double ns = 1.0 / std::sqrt(gs), ni = 1.0 / std::sqrt(gi);
    const double width = 2.0 * half_range / static_cast<double>(bins);
    for (const auto &q : on) {
        const auto r = rotate_quadrature(q, Mode::kIdler, alpha);
        const double xs = r.x_signal * ns, xi = r.x_idler * ni;
        const double us = std::floor((xs + half_range) / width), ui = std::floor((xi + half_range) / width);
        if (us < 0 || ui < 0 || us >= static_cast<double>(bins) || ui >= static_cast<double>(bins)) continue;
        ++counts[static_cast<std::size_t>(us) * bins + static_cast<std::size_t>(ui)];
    }
    CsvWriter csv(path, stamp, {"x_s", "x_i", "count"});
    for (std::size_t a = 0; a < bins; ++a) {
        for (std::size_t b = 0; b < bins; ++b) {
            csv.row({fmt9(-half_range + (a + 0.5) * width), fmt9(-half_range + (b + 0.5) * width),
                     std::to_string(counts[a * bins + b])});
        }
    }
}

}  // namespace detail

inline int cmd_phase_sweep(const ExperimentConfig &cfg, const CommandOptions &opt, std::ostream &log) {
    const RunStamp stamp = make_stamp(canonical_json(cfg), cfg.seed);
    const auto dir = detail::prepare_dir(cfg.output_dir);
    const auto e = detail::run_configured(cfg, opt.jobs);
    const double gs = e.acq.chain_gain_signal, gi = e.acq.chain_gain_idler;
    const auto grid = phase_grid(cfg.phase.points);
    const auto res = phase_sweep(e.on, e.off, gs, gi, grid);

    {
        CsvWriter csv(dir / "phase_sweep.csv", stamp, {"alpha_deg", "rho", "rho_se"});
        for (std::size_t k = 0; k < res.alphas.size(); ++k) {
            csv.row({fmt9(to_deg(res.alphas[k])), fmt9(res.rho_values[k]), fmt9(res.rho_errors[k])});
        }
    }
    const auto minimum = std::min_element(res.rho_values.begin(), res.rho_values.end()) - res.rho_values.begin();
    write_json(dir / "phase_sweep_summary.json", stamp,
               {{"command", "phase-sweep"},
                {"points", res.alphas.size()},
                {"n_shots", e.acq.n_shots},
                {"detuning_hz", e.plan.detuning()},
                {"alpha_star_deg", to_deg(res.alpha_star)},
                {"alpha_star_refined", res.alpha_star_refined},
                {"rho_max", res.rho_max},
                {"alpha_min_deg", to_deg(res.alphas[minimum])},
                {"rho_min", res.rho_values[minimum]}});

    if (cfg.phase.histograms) {
        const auto hist_dir = dir / "histograms";
        std::filesystem::create_directories(hist_dir);
        const auto est = estimate_covariance(e.on);
        const double spread = std::sqrt(std::max(est.matrix(kXs, kXs) / gs, est.matrix(kXi, kXi) / gi));
        for (double alpha : res.alphas) {
            char name[48];
            std::snprintf(name, sizeof name, "hist_alpha_%07.3fdeg.csv", to_deg(alpha));
            detail::write_histogram(hist_dir / name, stamp, e.on, gs, gi, alpha, cfg.phase.histogram_bins,
                                    5.0 * spread);
        }
    }
    log << "phase-sweep: alpha* = " << fmt9(to_deg(res.alpha_star)) << " deg, rho_max = " << fmt9(res.rho_max)
        << ", outputs in " << dir.string() << "\n";
    return kExitOk;
}

struct CaseResult {
    WindowCase window;
    DetuningSweep sweep;
    LinewidthFit fit;
    SidelobeMeasure sidelobe;
};

/// Seed of one (window, tau) case; independent of the case list so a
/// single-case config reproduces that case of the full grid.
inline uint64_t case_seed(uint64_t seed, const WindowCase &c) {
    return derive_seed(seed, {0xCA5Eull, static_cast<uint64_t>(c.shape),
                              static_cast<uint64_t>(std::llround(c.tau * 1e12))});
}

inline std::vector<CaseResult> run_linewidth_cases(const ExperimentConfig &cfg, unsigned jobs) {
    const auto &cases = cfg.linewidth.cases;
    double tau_min = cases.front().tau, tau_max = cases.front().tau;
    for (const auto &c : cases) {
        tau_min = std::min(tau_min, c.tau);
        tau_max = std::max(tau_max, c.tau);
    }
    try {
        cfg.band.validate(tau_min, tau_max);
    } catch (const InvalidParameter &e) {
        throw ConfigError(std::string("emission_band: ") + e.what());
    }
    const auto detunings = detuning_grid(cfg.linewidth.points, cfg.linewidth.span);

    std::vector<CaseResult> out(cases.size());
    // Parallel over cases when there are several, otherwise over shots.
    const unsigned outer = cases.size() > 1 ? jobs : 1;
    const unsigned inner = cases.size() > 1 ? 1 : jobs;
    parallel_for(cases.size(), outer, [&](std::size_t k) {
        SweepSetup setup;
        setup.f_pump = cfg.f_pump;
        setup.f_idler_demod = cfg.f_idler_demod;
        setup.band = cfg.band;
        setup.acq = cfg.acquisition_for({cases[k].shape, cases[k].tau});
        setup.acq.seed = case_seed(cfg.seed, cases[k]);
        setup.detunings = detunings;
        setup.phase_points = cfg.linewidth.phase_points;
        setup.run = {cfg.synthesis, inner};
        out[k].window = cases[k];
        out[k].sweep = sweep_detuning(setup);
        out[k].fit = fit_model(out[k].sweep, natural_model(cases[k].shape));
        out[k].sidelobe = sidelobe_level(out[k].fit, out[k].sweep);
    });
    return out;
}

namespace detail {

inline void write_linewidth_outputs(const std::filesystem::path &dir, const RunStamp &stamp,
                                    const std::vector<CaseResult> &results, const char *command,
                                    nlohmann::json extra = nlohmann::json::object()) {
    nlohmann::json cases = nlohmann::json::array();
    for (const auto &r : results) {
        const std::string name =
            "linewidth_" + std::string(to_string(r.window.shape)) + "_tau" + tau_label(r.window.tau) + "us.csv";
        CsvWriter csv(dir / name, stamp, {"delta_f_hz", "rho_abs", "rho_se"});
        for (std::size_t k = 0; k < r.sweep.detunings.size(); ++k) {
            csv.row({fmt9(r.sweep.detunings[k]), fmt9(std::abs(r.sweep.rho_values[k])), fmt9(r.sweep.rho_errors[k])});
        }
        cases.push_back({{"window", std::string(to_string(r.window.shape))},
                         {"tau_us", r.window.tau * 1e6},
                         {"sweep_file", name},
                         {"model", std::string(to_string(r.fit.model))},
                         {"alpha_star_deg", to_deg(r.sweep.alpha_star)},
                         {"rho_max_at_phase", r.sweep.rho_max_at_phase},
                         {"A", r.fit.amplitude_A},
                         {"xi_s", r.fit.scale_xi},
                         {"fwhm_hz", r.fit.fwhm},
                         {"fwhm_tau", r.fit.fwhm * r.window.tau},
                         {"snr", r.fit.snr},
                         {"residual_rms", r.fit.residual_rms},
                         {"sidelobe", r.sidelobe.level},
                         {"sidelobe_region_empty", r.sidelobe.region_empty},
                         {"converged", r.fit.converged},
                         {"n_iterations", r.fit.n_iterations}});
    }
    CsvWriter fits(dir / "fits.csv", stamp,
                   {"window", "tau_us", "A", "xi_s", "fwhm_hz", "snr", "sidelobe", "residual_rms", "converged",
                    "n_iterations"});
    for (const auto &r : results) {
        fits.row({std::string(to_string(r.window.shape)), fmt9(r.window.tau * 1e6), fmt9(r.fit.amplitude_A),
                  fmt9(r.fit.scale_xi), fmt9(r.fit.fwhm), fmt9(r.fit.snr), fmt9(r.sidelobe.level),
                  fmt9(r.fit.residual_rms), r.fit.converged ? "true" : "false", std::to_string(r.fit.n_iterations)});
    }
    nlohmann::json body{{"command", command}, {"cases", cases}};
    for (auto it = extra.begin(); it != extra.end(); ++it) body[it.key()] = *it;
    write_json(dir / (std::string(command) + "_summary.json"), stamp, body);
}

inline int convergence_status(const std::vector<CaseResult> &results, bool strict, std::ostream &log) {
    int status = kExitOk;
    for (const auto &r : results) {
        if (!r.fit.converged) {
            log << "warning: fit did not converge for " << to_string(r.window.shape) << " tau="
                << tau_label(r.window.tau) << "us\n";
            if (strict) status = kExitNumerical;
        }
    }
    return status;
}

}  // namespace detail

/// `results_out`, when given, receives the per-case sweeps and fits.
inline int cmd_linewidth(const ExperimentConfig &cfg, const CommandOptions &opt, std::ostream &log,
                         std::vector<CaseResult> *results_out = nullptr) {
    const RunStamp stamp = make_stamp(canonical_json(cfg), cfg.seed);
    const auto dir = detail::prepare_dir(cfg.output_dir);
    const auto results = run_linewidth_cases(cfg, opt.jobs);
    detail::write_linewidth_outputs(dir, stamp, results, "linewidth");
    if (results_out) *results_out = results;
    for (const auto &r : results) {
        log << "linewidth: " << to_string(r.window.shape) << " tau=" << detail::tau_label(r.window.tau)
            << "us fwhm=" << fmt9(r.fit.fwhm) << " Hz snr=" << fmt9(r.fit.snr) << "\n";
    }
    return detail::convergence_status(results, opt.strict, log);
}

inline int cmd_compare_windows(const ExperimentConfig &cfg, const CommandOptions &opt, std::ostream &log) {
    const auto &cases = cfg.linewidth.cases;
    const auto has = [&](WindowShape s) {
        return std::any_of(cases.begin(), cases.end(), [s](const WindowCase &c) { return c.shape == s; });
    };
    if (!has(WindowShape::kRectangular) || !has(WindowShape::kGaussian)) {
        throw ConfigError("linewidth.cases: compare-windows needs at least one rectangular and one gaussian case");
    }
    const RunStamp stamp = make_stamp(canonical_json(cfg), cfg.seed);
    const auto dir = detail::prepare_dir(cfg.output_dir);
    const auto results = run_linewidth_cases(cfg, opt.jobs);

    std::vector<LinewidthFit> fits;
    std::vector<DetuningSweep> sweeps;
    for (const auto &r : results) {
        fits.push_back(r.fit);
        sweeps.push_back(r.sweep);
    }
    const auto rows = compare_windows(fits, sweeps);
    {
        CsvWriter csv(dir / "window_comparison.csv", stamp,
                      {"window", "tau_us", "model", "A", "fwhm_hz", "fwhm_tau", "snr", "sidelobe", "sidelobe_se",
                       "sidelobe_rel", "sidelobe_delta_f_hz", "sidelobe_boundary_hz"});
        for (const auto &row : rows) {
            csv.row({std::string(to_string(row.shape)), fmt9(row.tau * 1e6), std::string(to_string(row.model)),
                     fmt9(row.amplitude_A), fmt9(row.fwhm), fmt9(row.fwhm_tau), fmt9(row.snr),
                     fmt9(row.sidelobe.level), fmt9(row.sidelobe.standard_error),
                     fmt9(row.sidelobe.level / row.amplitude_A), fmt9(row.sidelobe.detuning),
                     fmt9(row.sidelobe.boundary)});
        }
    }
    // Per tau with both windows: is the gaussian peak wider?
    nlohmann::json wider = nlohmann::json::array();
    for (const auto &r : rows) {
        if (r.shape != WindowShape::kRectangular) continue;
        for (const auto &g : rows) {
            if (g.shape == WindowShape::kGaussian && std::abs(g.tau - r.tau) < 1e-15) {
                wider.push_back({{"tau_us", r.tau * 1e6}, {"fwhm_ratio", g.fwhm / r.fwhm}, {"gaussian_wider", g.fwhm > r.fwhm}});
            }
        }
    }
    detail::write_linewidth_outputs(dir, stamp, results, "compare_windows", {{"fwhm_comparison", wider}});
    for (const auto &row : rows) {
        log << "compare-windows: " << to_string(row.shape) << " tau=" << detail::tau_label(row.tau)
            << "us fwhm*tau=" << fmt9(row.fwhm_tau) << " sidelobe/A=" << fmt9(row.sidelobe.level / row.amplitude_A)
            << "\n";
    }
    return detail::convergence_status(results, opt.strict, log);
}

}  // namespace twpa::cli
