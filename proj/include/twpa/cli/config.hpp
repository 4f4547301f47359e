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

// Experiment configuration files.
//
// A config is one JSON document (comments allowed) whose sections mirror the
// library types. Angles are in degrees, frequencies in Hz, times in seconds.
// Unknown keys are rejected so typos surface as errors naming the field.

#include <cstdint>
#include <fstream>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "twpa/acquisition.hpp"
#include "twpa/linewidth_fit.hpp"
#include "twpa/window.hpp"

namespace twpa::cli {

using nlohmann::json;

/// Schema or validation failure; `what()` starts with the field path.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct WindowCase {
    WindowShape shape = WindowShape::kRectangular;
    double tau = 0.0;
};

struct PhaseSweepConfig {
    std::size_t points = 73;
    bool histograms = false;
    std::size_t histogram_bins = 64;
};

struct LinewidthConfig {
    std::size_t points = 51;
    double span = 2e6;
    std::size_t phase_points = 73;
    std::vector<WindowCase> cases;
};

struct ExperimentConfig {
    uint64_t seed = 1;
    double f_pump = 6.331e9;
    double f_idler_demod = 6.481e9;
    double detuning = 0.0;
    TwpaParams twpa{2.0, 2.0, 0.0};
    EmissionBandModel band;
    WindowSpec window;
    std::optional<double> sample_rate;  // default: 100 samples per window
    AcquisitionConfig acq;
    SynthesisPath synthesis = SynthesisPath::kBinResponse;
    PhaseSweepConfig phase;
    LinewidthConfig linewidth;
    std::string output_dir = "out";

    double sample_rate_for(double tau) const { return sample_rate.value_or(100.0 / tau); }

    /// Acquisition settings for a given window, with the band's TWPA params.
    AcquisitionConfig acquisition_for(const WindowSpec &w) const {
        AcquisitionConfig a = acq;
        a.window = w;
        a.sample_rate = sample_rate_for(w.tau);
        a.seed = seed;
        return a;
    }
};

inline std::vector<WindowCase> default_linewidth_cases() {
    std::vector<WindowCase> out;
    for (WindowShape s : {WindowShape::kRectangular, WindowShape::kGaussian}) {
        for (double tau : {3e-6, 4e-6, 5e-6, 6e-6}) out.push_back({s, tau});
    }
    return out;
}

namespace detail {

inline constexpr double kDeg = std::numbers::pi / 180.0;

/// One JSON object plus its dotted path, tracking which keys were read.
class Section {
public:
    Section(const json &node, std::string path) : node_(node), path_(std::move(path)) {
        if (!node_.is_object()) throw ConfigError(label() + ": expected an object");
    }

    std::string field(const std::string &key) const { return path_.empty() ? key : path_ + "." + key; }

    /// Present and not null. Marks the key as known.
    bool has(const std::string &key) {
        seen_.insert(key);
        return node_.contains(key) && !node_.at(key).is_null();
    }

    double number(const std::string &key, std::optional<double> fallback = std::nullopt) {
        const json *v = lookup(key, fallback.has_value());
        if (!v) return *fallback;
        if (!v->is_number()) throw ConfigError(field(key) + ": expected a number");
        return v->get<double>();
    }

    uint64_t count(const std::string &key, std::optional<uint64_t> fallback = std::nullopt) {
        const json *v = lookup(key, fallback.has_value());
        if (!v) return *fallback;
        if (v->is_number_unsigned() || (v->is_number_integer() && v->get<int64_t>() >= 0)) {
            return v->get<uint64_t>();
        }
        throw ConfigError(field(key) + ": expected a non-negative integer");
    }

    bool flag(const std::string &key, bool fallback) {
        const json *v = lookup(key, true);
        if (!v) return fallback;
        if (!v->is_boolean()) throw ConfigError(field(key) + ": expected true or false");
        return v->get<bool>();
    }

    std::string text(const std::string &key, std::optional<std::string> fallback = std::nullopt) {
        const json *v = lookup(key, fallback.has_value());
        if (!v) return *fallback;
        if (!v->is_string()) throw ConfigError(field(key) + ": expected a string");
        return v->get<std::string>();
    }

    std::optional<Section> child(const std::string &key, bool required = false) {
        const json *v = lookup(key, !required);
        if (!v) return std::nullopt;
        return Section(*v, field(key));
    }

    const json *array(const std::string &key) {
        const json *v = lookup(key, true);
        if (v && !v->is_array()) throw ConfigError(field(key) + ": expected an array");
        return v;
    }

    /// Rejects keys that were never read.
    void finish() const {
        for (const auto &item : node_.items()) {
            if (!seen_.count(item.key())) throw ConfigError(field(item.key()) + ": unknown field");
        }
    }

private:
    std::string label() const { return path_.empty() ? "config" : path_; }

    const json *lookup(const std::string &key, bool optional) {
        seen_.insert(key);
        if (!has(key)) {
            if (optional) return nullptr;
            throw ConfigError(field(key) + ": required field is missing");
        }
        return &node_.at(key);
    }

    const json &node_;
    std::string path_;
    std::set<std::string> seen_;
};

inline WindowShape parse_shape(const std::string &name, const std::string &path) {
    try {
        return window_shape_from_string(name);
    } catch (const std::exception &) {
        throw ConfigError(path + ": unknown window shape '" + name + "' (use rectangular or gaussian)");
    }
}

template <class F>
void checked(const std::string &path, F &&fn) {
    try {
        fn();
    } catch (const InvalidParameter &e) {
        throw ConfigError(path + ": " + e.what());
    }
}

}  // namespace detail

/// Builds a config from a parsed document; every error names its field.
inline ExperimentConfig config_from_json(const json &doc) {
    using detail::Section;
    ExperimentConfig cfg;
    Section root(doc, "");
    cfg.seed = root.count("seed", 1);

    if (auto s = root.child("frequency_plan")) {
        cfg.f_pump = s->number("f_pump", cfg.f_pump);
        cfg.f_idler_demod = s->number("f_idler_demod", cfg.f_idler_demod);
        cfg.detuning = s->number("detuning", 0.0);
        s->finish();
    }
    detail::checked("frequency_plan", [&] { FrequencyPlan::at_detuning(cfg.f_pump, cfg.f_idler_demod, cfg.detuning); });

    if (auto s = root.child("twpa")) {
        const double gs = s->number("gain_signal", 2.0);
        const double gi = s->number("gain_idler", 2.0);
        const double theta = s->number("phase_mismatch_deg", 0.0) * detail::kDeg;
        detail::checked("twpa", [&] { cfg.twpa = TwpaParams(gs, gi, theta); });
        s->finish();
    }
    cfg.band.per_bin_params = cfg.twpa;

    if (auto s = root.child("emission_band")) {
        cfg.band.band_halfwidth = s->number("band_halfwidth", cfg.band.band_halfwidth);
        cfg.band.bin_spacing = s->number("bin_spacing", cfg.band.bin_spacing);
        s->finish();
    }

    {
        Section w = *root.child("window", true);
        cfg.window.shape = detail::parse_shape(w.text("shape", "rectangular"), w.field("shape"));
        cfg.window.tau = w.number("tau");
        if (!(cfg.window.tau > 0.0)) throw ConfigError("window.tau: must be a positive duration in seconds");
        w.finish();
    }

    if (auto s = root.child("acquisition")) {
        cfg.acq.n_shots = s->count("n_shots", cfg.acq.n_shots);
        cfg.acq.lo_phase_signal = s->number("lo_phase_signal_deg", 0.0) * detail::kDeg;
        cfg.acq.lo_phase_idler = s->number("lo_phase_idler_deg", 0.0) * detail::kDeg;
        cfg.acq.chain_gain_signal = s->number("chain_gain_signal", cfg.acq.chain_gain_signal);
        cfg.acq.chain_gain_idler = s->number("chain_gain_idler", cfg.acq.chain_gain_idler);
        cfg.acq.added_noise_quanta = s->number("added_noise_quanta", cfg.acq.added_noise_quanta);
        if (s->has("sample_rate")) cfg.sample_rate = s->number("sample_rate");
        const std::string path = s->text("synthesis", "bin_response");
        if (path == "bin_response") {
            cfg.synthesis = SynthesisPath::kBinResponse;
        } else if (path == "trace") {
            cfg.synthesis = SynthesisPath::kTrace;
        } else {
            throw ConfigError(s->field("synthesis") + ": expected \"bin_response\" or \"trace\"");
        }
        s->finish();
    }
    detail::checked("acquisition", [&] { cfg.acquisition_for(cfg.window).validate(); });
    detail::checked("emission_band", [&] { cfg.band.validate(cfg.window.tau, cfg.window.tau); });

    if (auto s = root.child("phase_sweep")) {
        cfg.phase.points = s->count("points", cfg.phase.points);
        cfg.phase.histograms = s->flag("histograms", false);
        cfg.phase.histogram_bins = s->count("histogram_bins", cfg.phase.histogram_bins);
        s->finish();
        if (cfg.phase.points < 1) throw ConfigError("phase_sweep.points: must be >= 1");
        if (cfg.phase.histogram_bins < 2) throw ConfigError("phase_sweep.histogram_bins: must be >= 2");
    }

    cfg.linewidth.cases = default_linewidth_cases();
    if (auto s = root.child("linewidth")) {
        cfg.linewidth.points = s->count("points", cfg.linewidth.points);
        cfg.linewidth.span = s->number("span", cfg.linewidth.span);
        cfg.linewidth.phase_points = s->count("phase_points", cfg.linewidth.phase_points);
        if (const json *cases = s->array("cases")) {
            cfg.linewidth.cases.clear();
            for (std::size_t k = 0; k < cases->size(); ++k) {
                Section c((*cases)[k], s->field("cases[" + std::to_string(k) + "]"));
                WindowCase wc;
                wc.shape = detail::parse_shape(c.text("window"), c.field("window"));
                wc.tau = c.number("tau");
                if (!(wc.tau > 0.0)) throw ConfigError(c.field("tau") + ": must be a positive duration in seconds");
                c.finish();
                cfg.linewidth.cases.push_back(wc);
            }
            if (cfg.linewidth.cases.empty()) throw ConfigError(s->field("cases") + ": needs at least one case");
        }
        s->finish();
    }
    if (cfg.linewidth.points < 5) throw ConfigError("linewidth.points: must be >= 5");
    if (!(cfg.linewidth.span > 0.0)) throw ConfigError("linewidth.span: must be > 0");
    if (cfg.linewidth.phase_points < 1) throw ConfigError("linewidth.phase_points: must be >= 1");

    if (auto s = root.child("output")) {
        cfg.output_dir = s->text("dir", cfg.output_dir);
        s->finish();
    }
    root.finish();
    return cfg;
}

inline ExperimentConfig parse_config(const std::string &text) {
    json doc;
    try {
        doc = json::parse(text, nullptr, true, /*ignore_comments=*/true);
    } catch (const json::parse_error &e) {
        throw ConfigError(std::string("config: malformed JSON: ") + e.what());
    }
    return config_from_json(doc);
}

inline ExperimentConfig load_config(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

/// Canonical form of everything that affects results. Output location and
/// scheduling are excluded.
inline json canonical_json(const ExperimentConfig &cfg) {
    json cases = json::array();
    for (const auto &c : cfg.linewidth.cases) {
        cases.push_back({{"window", std::string(to_string(c.shape))}, {"tau", c.tau}});
    }
    return {
        {"seed", cfg.seed},
        {"frequency_plan", {{"f_pump", cfg.f_pump}, {"f_idler_demod", cfg.f_idler_demod}, {"detuning", cfg.detuning}}},
        {"twpa",
         {{"gain_signal", cfg.twpa.gain_signal()},
          {"gain_idler", cfg.twpa.gain_idler()},
          {"phase_mismatch_rad", cfg.twpa.phase_mismatch()}}},
        {"emission_band", {{"band_halfwidth", cfg.band.band_halfwidth}, {"bin_spacing", cfg.band.bin_spacing}}},
        {"window", {{"shape", std::string(to_string(cfg.window.shape))}, {"tau", cfg.window.tau}}},
        {"acquisition",
         {{"n_shots", cfg.acq.n_shots},
          {"lo_phase_signal_rad", cfg.acq.lo_phase_signal},
          {"lo_phase_idler_rad", cfg.acq.lo_phase_idler},
          {"chain_gain_signal", cfg.acq.chain_gain_signal},
          {"chain_gain_idler", cfg.acq.chain_gain_idler},
          {"added_noise_quanta", cfg.acq.added_noise_quanta},
          {"sample_rate", cfg.sample_rate ? json(*cfg.sample_rate) : json(nullptr)},
          {"synthesis", cfg.synthesis == SynthesisPath::kTrace ? "trace" : "bin_response"}}},
        {"phase_sweep",
         {{"points", cfg.phase.points},
          {"histograms", cfg.phase.histograms},
          {"histogram_bins", cfg.phase.histogram_bins}}},
        {"linewidth",
         {{"points", cfg.linewidth.points},
          {"span", cfg.linewidth.span},
          {"phase_points", cfg.linewidth.phase_points},
          {"cases", cases}}},
    };
}

}  // namespace twpa::cli
