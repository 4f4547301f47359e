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

#include "twpa/cli/commands.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "gtest/gtest.h"

using namespace twpa;
using namespace twpa::cli;
namespace fs = std::filesystem;

namespace {

const char *kSmall = R"({
  // tiny but valid geometry
  "seed": 3,
  "window": {"shape": "rectangular", "tau": 2e-6},
  "emission_band": {"band_halfwidth": 5e6, "bin_spacing": 0.25e6},
  "acquisition": {"n_shots": 600, "chain_gain_signal": 1, "chain_gain_idler": 1, "added_noise_quanta": 0.5},
  "linewidth": {"points": 9, "span": 2e6, "phase_points": 13,
                "cases": [{"window": "rectangular", "tau": 2e-6}, {"window": "gaussian", "tau": 2e-6}]}
})";

fs::path scratch(const std::string &name) {
    const fs::path p = fs::temp_directory_path() / ("twpa_cli_test_" + name);
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path &p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::map<std::string, std::string> tree(const fs::path &dir) {
    std::map<std::string, std::string> out;
    for (const auto &e : fs::recursive_directory_iterator(dir)) {
        if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = slurp(e.path());
    }
    return out;
}

ExperimentConfig small(const fs::path &out) {
    ExperimentConfig cfg = parse_config(kSmall);
    cfg.output_dir = out.string();
    return cfg;
}

std::string config_error(const std::string &text) {
    try {
        parse_config(text);
    } catch (const ConfigError &e) {
        return e.what();
    }
    return "";
}

int run_tool(const std::string &args) {
    const std::string cmd = std::string(TWPA_CORR_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path write_config(const std::string &name, const std::string &text) {
    const fs::path p = fs::temp_directory_path() / ("twpa_cli_test_" + name + ".json");
    std::ofstream(p) << text;
    return p;
}

std::size_t data_rows(const std::string &csv) {
    std::size_t rows = 0;
    std::istringstream in(csv);
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line[0] != '#') ++rows;
    }
    return rows - 1;  // column header
}

}  // namespace

TEST(Format, nine_significant_digits) {
    EXPECT_EQ(fmt9(0.942809041582063), "0.942809042");
    EXPECT_EQ(fmt9(6.331e9), "6.331e+09");
    EXPECT_EQ(fmt9(-0.0), "-0");
    EXPECT_EQ(fmt9(NAN), "nan");
    EXPECT_EQ(fmt9(-INFINITY), "-inf");
    EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ull);
    EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cull);
}

TEST(Config, missing_tau_names_the_field) {
    EXPECT_NE(config_error(R"({"window": {"shape": "gaussian"}})").find("window.tau"), std::string::npos);
    EXPECT_NE(config_error(R"({"seed": 1})").find("window"), std::string::npos);
    EXPECT_NE(config_error(R"({"window": {"tau": -1e-6}})").find("window.tau"), std::string::npos);
}

TEST(Config, errors_carry_field_paths) {
    EXPECT_NE(config_error(R"({"window": {"tau": 6e-6, "shap": "x"}})").find("window.shap: unknown field"),
              std::string::npos);
    EXPECT_NE(config_error(R"({"window": {"tau": "6us"}})").find("window.tau: expected a number"),
              std::string::npos);
    EXPECT_NE(config_error(R"({"window": {"tau": 6e-6, "shape": "hann"}})").find("window.shape"),
              std::string::npos);
    EXPECT_NE(config_error(R"({"window": {"tau": 6e-6}, "twpa": {"gain_signal": 0.5}})").find("twpa"),
              std::string::npos);
    EXPECT_NE(config_error(R"({"window": {"tau": 6e-6}, "acquisition": {"n_shots": -4}})")
                  .find("acquisition.n_shots"),
              std::string::npos);
    EXPECT_NE(config_error(R"({"window": {"tau": 6e-6}, "linewidth": {"cases": [{"window": "gaussian"}]}})")
                  .find("linewidth.cases[0].tau"),
              std::string::npos);
    EXPECT_NE(config_error(R"({"window": {"tau": 6e-6},)").find("malformed"), std::string::npos);
}

TEST(Config, defaults_reproduce_reference_experiment) {
    const auto cfg = parse_config(R"({"window": {"tau": 6e-6}})");
    EXPECT_EQ(cfg.f_pump, 6.331e9);
    EXPECT_EQ(cfg.f_idler_demod, 6.481e9);
    EXPECT_EQ(cfg.acq.n_shots, 100000u);
    EXPECT_EQ(cfg.phase.points, 73u);
    ASSERT_EQ(cfg.linewidth.cases.size(), 8u);
    EXPECT_EQ(cfg.linewidth.cases[0].shape, WindowShape::kRectangular);
    EXPECT_EQ(cfg.linewidth.cases[7].shape, WindowShape::kGaussian);
    EXPECT_DOUBLE_EQ(cfg.linewidth.cases[7].tau, 6e-6);
    EXPECT_DOUBLE_EQ(cfg.acquisition_for(cfg.window).sample_rate, 100.0 / 6e-6);
}

TEST(Config, shipped_config_parses) {
    const auto cfg = load_config(TWPA_SOURCE_DIR "/configs/reference.json");
    EXPECT_EQ(cfg.window.tau, 6e-6);
    EXPECT_EQ(cfg.linewidth.cases.size(), 8u);
    EXPECT_EQ(cfg.acq.added_noise_quanta, 10.0);
}

TEST(Config, degrees_become_radians) {
    const auto cfg = parse_config(
        R"({"window": {"tau": 6e-6}, "twpa": {"phase_mismatch_deg": 90}, "acquisition": {"lo_phase_idler_deg": 180}})");
    EXPECT_NEAR(cfg.twpa.phase_mismatch(), std::numbers::pi / 2, 1e-15);
    EXPECT_NEAR(cfg.acq.lo_phase_idler, std::numbers::pi, 1e-15);
}

TEST(Config, hash_ignores_output_dir_but_not_seed) {
    auto a = parse_config(kSmall), b = a, c = a;
    b.output_dir = "elsewhere";
    c.seed = 4;
    EXPECT_EQ(make_stamp(canonical_json(a), a.seed).config_hash, make_stamp(canonical_json(b), b.seed).config_hash);
    EXPECT_NE(make_stamp(canonical_json(a), a.seed).config_hash, make_stamp(canonical_json(c), c.seed).config_hash);
}

TEST(Overrides, points_and_span_route_by_command) {
    auto cfg = parse_config(kSmall);
    CommandOptions opt;
    opt.points = 201;
    opt.span = 4e6;
    opt.seed = 99;
    apply_overrides(cfg, opt, Command::kLinewidth);
    EXPECT_EQ(cfg.linewidth.points, 201u);
    EXPECT_EQ(cfg.linewidth.span, 4e6);
    EXPECT_EQ(cfg.seed, 99u);
    opt.points = 1;
    apply_overrides(cfg, opt, Command::kPhaseSweep);
    EXPECT_EQ(cfg.phase.points, 1u);
    EXPECT_THROW(apply_overrides(cfg, opt, Command::kLinewidth), ConfigError);
}

TEST(Simulate, writes_stamped_outputs) {
    const auto dir = scratch("simulate");
    std::ostringstream log;
    EXPECT_EQ(cmd_simulate(small(dir), {}, log), kExitOk);
    for (const char *f : {"simulate_covariance.csv", "simulate_shots.csv"}) {
        const std::string text = slurp(dir / f);
        EXPECT_EQ(text.rfind("# twpa-corr 0.1.0\n# config_hash=", 0), 0u) << f;
        EXPECT_NE(text.find("# seed=3\n"), std::string::npos) << f;
    }
    const auto summary = nlohmann::json::parse(slurp(dir / "simulate_summary.json"));
    EXPECT_EQ(summary["seed"], 3);
    EXPECT_EQ(summary["tool_version"], "twpa-corr 0.1.0");
    EXPECT_EQ(summary["config_hash"].get<std::string>().size(), 16u);
    EXPECT_NEAR(summary["rho"].get<double>(), 0.94, 0.1);
    EXPECT_EQ(data_rows(slurp(dir / "simulate_covariance.csv")), 24u);
}

TEST(Simulate, trace_dump_has_one_row_per_sample) {
    const auto dir = scratch("traces");
    CommandOptions opt;
    opt.dump_traces = 2;
    std::ostringstream log;
    cmd_simulate(small(dir), opt, log);
    // 2 shots x 2 stages x 2 channels x 100 samples.
    EXPECT_EQ(data_rows(slurp(dir / "traces.csv")), 800u);
}

TEST(Simulate, reruns_are_byte_identical_for_any_job_count) {
    const auto a = scratch("rerun_a"), b = scratch("rerun_b");
    std::ostringstream log;
    cmd_simulate(small(a), {}, log);
    CommandOptions opt;
    opt.jobs = 3;
    cmd_simulate(small(b), opt, log);
    EXPECT_EQ(tree(a), tree(b));
}

TEST(PhaseSweep, default_grid_spans_full_turn) {
    const auto dir = scratch("phase");
    auto cfg = small(dir);
    cfg.acq.n_shots = 4000;
    std::ostringstream log;
    cmd_phase_sweep(cfg, {}, log);
    const std::string csv = slurp(dir / "phase_sweep.csv");
    EXPECT_EQ(data_rows(csv), 73u);
    EXPECT_NE(csv.find("\nalpha_deg,rho,rho_se\n0,"), std::string::npos);
    EXPECT_NE(csv.find("\n360,"), std::string::npos);
    const auto s = nlohmann::json::parse(slurp(dir / "phase_sweep_summary.json"));
    const double sep = std::abs(s["alpha_min_deg"].get<double>() - s["alpha_star_deg"].get<double>());
    EXPECT_NEAR(std::min(sep, 360.0 - sep), 180.0, 5.0 + 1e-9);
    EXPECT_LT(s["rho_min"].get<double>(), 0.0);
}

TEST(PhaseSweep, single_point_grid) {
    const auto dir = scratch("phase1");
    auto cfg = small(dir);
    cfg.phase.points = 1;
    std::ostringstream log;
    cmd_phase_sweep(cfg, {}, log);
    EXPECT_EQ(data_rows(slurp(dir / "phase_sweep.csv")), 1u);
    const auto s = nlohmann::json::parse(slurp(dir / "phase_sweep_summary.json"));
    EXPECT_EQ(s["alpha_star_deg"].get<double>(), 0.0);
    EXPECT_EQ(s["points"], 1);
}

TEST(PhaseSweep, histogram_dump_per_angle) {
    const auto dir = scratch("hist");
    auto cfg = small(dir);
    cfg.phase.points = 5;
    cfg.phase.histogram_bins = 8;
    CommandOptions opt;
    opt.histograms = true;
    std::ostringstream log;
    apply_overrides(cfg, opt, Command::kPhaseSweep);
    cmd_phase_sweep(cfg, opt, log);
    std::size_t files = 0;
    for (const auto &e : fs::directory_iterator(dir / "histograms")) {
        ++files;
        const std::string text = slurp(e.path());
        EXPECT_EQ(data_rows(text), 64u);
        long total = 0;
        std::istringstream in(text);
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty() || line[0] == '#' || line[0] == 'x') continue;
            total += std::stol(line.substr(line.rfind(',') + 1));
        }
        EXPECT_LE(total, 600);
        EXPECT_GT(total, 590);
    }
    EXPECT_EQ(files, 5u);
    EXPECT_TRUE(fs::exists(dir / "histograms" / "hist_alpha_090.000deg.csv"));
}

TEST(Linewidth, single_case_gives_one_fit_row) {
    const auto dir = scratch("lw1");
    auto cfg = small(dir);
    cfg.linewidth.cases = {{WindowShape::kGaussian, 2e-6}};
    std::ostringstream log;
    EXPECT_EQ(cmd_linewidth(cfg, {}, log), kExitOk);
    const std::string fits = slurp(dir / "fits.csv");
    EXPECT_EQ(data_rows(fits), 1u);
    EXPECT_NE(fits.find("\nwindow,tau_us,A,xi_s,fwhm_hz,snr,sidelobe,residual_rms,converged,n_iterations\ngaussian,2,"),
              std::string::npos);
    const std::string sweep = slurp(dir / "linewidth_gaussian_tau2us.csv");
    EXPECT_EQ(data_rows(sweep), 9u);
    EXPECT_NE(sweep.find("\ndelta_f_hz,rho_abs,rho_se\n-1000000,"), std::string::npos);
}

TEST(Linewidth, case_results_do_not_depend_on_case_list) {
    const auto a = scratch("lw_a"), b = scratch("lw_b");
    std::ostringstream log;
    auto cfg = small(a);
    cmd_linewidth(cfg, {}, log);
    auto one = small(b);
    one.linewidth.cases = {{WindowShape::kGaussian, 2e-6}};
    cmd_linewidth(one, {}, log);
    const auto strip = [](const std::string &s) { return s.substr(s.find("\ndelta_f_hz")); };
    EXPECT_EQ(strip(slurp(a / "linewidth_gaussian_tau2us.csv")), strip(slurp(b / "linewidth_gaussian_tau2us.csv")));
}

TEST(Linewidth, reruns_and_seeds) {
    const auto a = scratch("lw_rerun_a"), b = scratch("lw_rerun_b"), c = scratch("lw_rerun_c");
    std::ostringstream log;
    cmd_linewidth(small(a), {}, log);
    CommandOptions opt;
    opt.jobs = 2;
    cmd_linewidth(small(b), opt, log);
    EXPECT_EQ(tree(a), tree(b));
    auto other = small(c);
    other.seed = 4;
    cmd_linewidth(other, {}, log);
    EXPECT_NE(slurp(a / "linewidth_rectangular_tau2us.csv"), slurp(c / "linewidth_rectangular_tau2us.csv"));
}

TEST(Linewidth, strict_mode_maps_non_convergence) {
    std::vector<CaseResult> results(1);
    results[0].fit.converged = false;
    std::ostringstream log;
    EXPECT_EQ(twpa::cli::detail::convergence_status(results, true, log), kExitNumerical);
    EXPECT_EQ(twpa::cli::detail::convergence_status(results, false, log), kExitOk);
    results[0].fit.converged = true;
    EXPECT_EQ(twpa::cli::detail::convergence_status(results, true, log), kExitOk);
}

TEST(CompareWindows, report_and_family_check) {
    const auto dir = scratch("cmp");
    std::ostringstream log;
    EXPECT_EQ(cmd_compare_windows(small(dir), {}, log), kExitOk);
    EXPECT_EQ(data_rows(slurp(dir / "window_comparison.csv")), 2u);
    EXPECT_EQ(data_rows(slurp(dir / "fits.csv")), 2u);
    auto cfg = small(dir);
    cfg.linewidth.cases.pop_back();
    EXPECT_THROW(cmd_compare_windows(cfg, {}, log), ConfigError);
}

TEST(Binary, exit_codes) {
    const auto good = write_config("good", kSmall);
    const auto out = scratch("bin");
    EXPECT_EQ(run_tool("simulate --config " + good.string() + " --out " + out.string()), 0);
    EXPECT_TRUE(fs::exists(out / "simulate_summary.json"));
    EXPECT_EQ(run_tool("--version"), 0);
    EXPECT_EQ(run_tool("simulate --config " + write_config("notau", R"({"window": {}})").string()), 2);
    EXPECT_EQ(run_tool("simulate --config /nonexistent.json"), 2);
    EXPECT_EQ(run_tool("simulate"), 2);
    EXPECT_EQ(run_tool("frobnicate --config " + good.string()), 2);
    EXPECT_EQ(run_tool("phase-sweep --config " + good.string() + " --points 0 --out " + out.string()), 2);
}

TEST(Binary, error_message_names_tau) {
    const auto bad = write_config("notau_msg", R"({"window": {"shape": "rectangular"}})");
    const fs::path log = fs::temp_directory_path() / "twpa_cli_test_notau.log";
    const std::string cmd = std::string(TWPA_CORR_PATH) + " simulate --config " + bad.string() + " 2> " + log.string();
    EXPECT_NE(std::system(cmd.c_str()), 0);
    EXPECT_NE(slurp(log).find("window.tau"), std::string::npos);
}
