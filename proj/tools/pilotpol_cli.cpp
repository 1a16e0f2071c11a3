// SPDX-License-Identifier: Apache-2.0
//
// pilotpol - pilot-tone polarization tracking for CV-QKD receivers
// Copyright (C) 2026 The pilotpol authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ------------------------------------------------------------------------

// pilotpol command line: init-config, run, sweep, plot, calibrate.
// Exit codes: 0 success, 2 configuration error, 3 runtime or numerical error.

#include "pilotpol/pilotpol.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <malloc.h>

using namespace pilotpol;

namespace
{
    ExperimentConfig load_or_default(const std::string &path)
    {
        if (path.empty())
        {
            ExperimentConfig c;
            c.validate();
            return c;
        }
        return load_config(path);
    }

    void ensure_dir(const std::string &dir)
    {
        std::error_code ec;
        std::filesystem::create_directories(dir, ec);
        if (ec || !std::filesystem::is_directory(dir))
            throw RuntimeFailure("cannot create output directory " + dir);
    }

    std::vector<std::string> apply_preset(ExperimentConfig &c, const std::string &preset)
    {
        if (preset.empty())
            return {};
        if (preset == "krad")
        {
            c.channel.mode = ScramblerMode::walk;
            c.sweep_sr = krad_sweep();
            return {"proposed"};
        }
        if (preset == "baselines")
        {
            c.channel.mode = ScramblerMode::walk;
            c.sweep_sr = krad_sweep();
            return {"proposed", "cma", "fir"};
        }
        if (preset == "mrad")
        {
            c.channel.mode = ScramblerMode::rate;
            c.dsp.tracker_window = 1;
            c.sweep_sr = mrad_sweep();
            return {"proposed"};
        }
        throw ConfigError("--preset must be krad, baselines or mrad");
    }
}

int main(int argc, char **argv)
{
    // Frames are a few hundred MB; keep freed blocks in the heap rather than
    // returning them to the kernel between trials.
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, -1);

    CLI::App app{"pilotpol - pilot-tone polarization tracking simulator"};
    app.require_subcommand(1);

    std::string config_path, out_path, csv_path, out_dir, tracker, preset;
    double sr = 0.0;
    std::size_t trial = 0, jobs = 0;

    auto *init = app.add_subcommand("init-config", "Write a config file holding every default");
    init->add_option("--out,-o", out_path, "Output file (stdout if omitted)");

    auto *run = app.add_subcommand("run", "Run one trial and print its CSV row");
    run->add_option("--config,-c", config_path, "Config file");
    run->add_option("--sr", sr, "Scrambling rate, rad/s")->required();
    run->add_option("--trial", trial, "Trial index")->required();
    run->add_option("--tracker", tracker, "proposed|cma|fir");

    auto *sweep_cmd = app.add_subcommand("sweep", "Sweep scrambling rates and write CSV + summary");
    sweep_cmd->add_option("--config,-c", config_path, "Config file");
    sweep_cmd->add_option("--preset", preset, "krad | baselines | mrad");
    sweep_cmd->add_option("--tracker", tracker, "proposed|cma|fir");
    sweep_cmd->add_option("--jobs,-j", jobs, "Worker threads");
    sweep_cmd->add_option("--out-dir", out_dir, "Output directory");

    auto *plot_cmd = app.add_subcommand("plot", "Render SVG charts from a sweep CSV");
    plot_cmd->add_option("--csv", csv_path, "CSV file")->required();
    plot_cmd->add_option("--out,-o", out_path, "Output path prefix (default: CSV path without extension)");

    auto *cal = app.add_subcommand("calibrate", "Measure the shot-noise unit of the receiver");
    cal->add_option("--config,-c", config_path, "Config file");

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::ParseError &e)
    {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try
    {
        if (*init)
        {
            ExperimentConfig c;
            const std::string text = to_json(c).dump(2) + "\n";
            if (out_path.empty())
                std::cout << text;
            else
            {
                std::ofstream f(out_path);
                if (!f || !(f << text))
                    throw RuntimeFailure("cannot write " + out_path);
            }
        }
        else if (*run)
        {
            ExperimentConfig c = load_or_default(config_path);
            if (!tracker.empty())
                c.tracker = tracker;
            c.validate();
            const MetricsReport r = run_experiment(c, sr, trial);
            std::cout << csv_header() << '\n' << csv_row(r) << '\n';
        }
        else if (*sweep_cmd)
        {
            ExperimentConfig c = load_or_default(config_path);
            std::vector<std::string> trackers = apply_preset(c, preset);
            if (!tracker.empty())
                trackers = {tracker};
            if (jobs > 0)
                c.jobs = jobs;
            if (!out_dir.empty())
                c.out_dir = out_dir;
            c.validate();
            ensure_dir(c.out_dir);
            const std::string stem = preset.empty() ? std::string("sweep") : preset;
            const auto rows = sweep(c, trackers, [](const MetricsReport &r)
                                    { std::cerr << "done " << r.tracker << " sr=" << r.sr << " trial=" << r.trial << '\n'; });
            const std::string csv = c.out_dir + "/" + stem + ".csv";
            write_csv(csv, rows);
            std::ofstream s(c.out_dir + "/" + stem + "_summary.txt");
            if (!s || !(s << summarize(rows)))
                throw RuntimeFailure("cannot write summary in " + c.out_dir);
            std::cout << csv << '\n';
        }
        else if (*plot_cmd)
        {
            std::string prefix = out_path;
            if (prefix.empty())
                prefix = (std::filesystem::path(csv_path).parent_path() / std::filesystem::path(csv_path).stem()).string();
            for (const auto &p : plot::emit_plots(csv_path, prefix))
                std::cout << p << '\n';
        }
        else if (*cal)
        {
            const ExperimentConfig c = load_or_default(config_path);
            const SnuCalibration k = calibrate_snu(c);
            std::cout << "shot_plus_ele_var " << format_number(k.shot_plus_ele_var) << '\n'
                      << "ele_var " << format_number(k.ele_var) << '\n'
                      << "scale " << format_number(k.scale) << '\n'
                      << "noise_free " << (k.noise_free ? 1 : 0) << '\n';
        }
    }
    catch (const ConfigError &e)
    {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    }
    catch (const std::exception &e)
    {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
    return 0;
}
