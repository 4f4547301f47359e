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

// twpa_corr: simulate, phase-sweep, linewidth, compare-windows.

#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "twpa/cli/commands.hpp"
#include "twpa/version.hpp"

namespace {

using namespace twpa::cli;

struct Flags {
    std::string config;
    CommandOptions opt;
};

CLI::App *add_command(CLI::App &app, const char *name, const char *help, Flags &f, bool sweep) {
    CLI::App *sub = app.add_subcommand(name, help);
    sub->add_option("--config", f.config, "experiment config (JSON, comments allowed)")->required();
    sub->add_option("--out", f.opt.out_dir, "output directory (overrides output.dir)");
    sub->add_option("--seed", f.opt.seed, "master seed (overrides seed)");
    sub->add_option("--jobs", f.opt.jobs, "worker threads")->check(CLI::PositiveNumber);
    sub->add_flag("--strict", f.opt.strict, "exit 3 if any fit fails to converge");
    if (sweep) {
        sub->add_option("--points", f.opt.points, "phase points (phase-sweep) or detuning points");
        sub->add_option("--span", f.opt.span, "full detuning span in Hz");
    }
    return sub;
}

}  // namespace

int main(int argc, char **argv) {
    CLI::App app{"Two-mode correlation simulator and linewidth analysis"};
    app.set_version_flag("--version", std::string(twpa::kToolVersionLine));
    app.require_subcommand(1);

    Flags f;
    CLI::App *simulate = add_command(app, "simulate", "run one ON/OFF experiment and infer the covariance", f, false);
    simulate->add_option("--dump-traces", f.opt.dump_traces, "write field traces of the first N shots");
    CLI::App *phase = add_command(app, "phase-sweep", "Pearson coefficient versus idler phase", f, true);
    phase->add_flag("--histograms", f.opt.histograms, "write per-angle (X_s, X_i) histograms");
    CLI::App *linewidth = add_command(app, "linewidth", "detuning sweeps and linewidth fits", f, true);
    CLI::App *compare = add_command(app, "compare-windows", "rectangular versus gaussian window report", f, true);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp &e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion &e) {
        return app.exit(e);
    } catch (const CLI::ParseError &e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        Command cmd = Command::kSimulate;
        if (phase->parsed()) cmd = Command::kPhaseSweep;
        if (linewidth->parsed()) cmd = Command::kLinewidth;
        if (compare->parsed()) cmd = Command::kCompareWindows;

        ExperimentConfig cfg = load_config(f.config);
        apply_overrides(cfg, f.opt, cmd);
        switch (cmd) {
            case Command::kSimulate: return cmd_simulate(cfg, f.opt, std::cout);
            case Command::kPhaseSweep: return cmd_phase_sweep(cfg, f.opt, std::cout);
            case Command::kLinewidth: return cmd_linewidth(cfg, f.opt, std::cout);
            case Command::kCompareWindows: return cmd_compare_windows(cfg, f.opt, std::cout);
        }
    } catch (const ConfigError &e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const twpa::InvalidParameter &e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const twpa::NumericalError &e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
