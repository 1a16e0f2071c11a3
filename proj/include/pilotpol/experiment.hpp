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

#pragma once

#include "pilotpol/baselines.hpp"
#include "pilotpol/channel.hpp"
#include "pilotpol/common.hpp"
#include "pilotpol/dsp/bandsplit.hpp"
#include "pilotpol/dsp/equalizer.hpp"
#include "pilotpol/dsp/tracker.hpp"
#include "pilotpol/frontend.hpp"
#include "pilotpol/metrics.hpp"
#include "pilotpol/random.hpp"
#include "pilotpol/txgen.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

namespace pilotpol
{
    struct DspConfig
    {
        BandGuards guards;
        std::size_t tracker_window = 64;
        std::size_t lms_taps = 11;
        double lms_mu = 1e-5;
        double cma_mu = 1e-5;
        bool equalize_bpd = true;         // divide bands by the known detector response
        std::size_t calibration_frames = 4;
        std::size_t lag_search = 8;       // +- symbols

        void validate() const
        {
            if (tracker_window < 1)
                throw ConfigError("dsp: tracker_window must be >= 1");
            if (lms_taps % 2 == 0)
                throw ConfigError("dsp: lms_taps must be odd");
            if (!(lms_mu > 0.0) || !(cma_mu > 0.0))
                throw ConfigError("dsp: step sizes must be positive");
            if (calibration_frames < 1)
                throw ConfigError("dsp: calibration_frames must be >= 1");
        }
    };

    struct ExperimentConfig
    {
        TxConfig tx;
        ChannelConfig channel;
        FrontendConfig frontend;
        DspConfig dsp;
        std::string tracker = "proposed";
        std::vector<double> sweep_sr{0.0, 0.63e3, 1.26e3, 3.14e3, 6.28e3, 12.57e3};
        std::size_t trials_per_point = 20;
        std::string out_dir = "out";
        std::uint64_t master_seed = 1;
        std::size_t jobs = 1;
        double beta = 0.95;
        std::string waveform_dump; // path prefix, empty = off

        void validate() const
        {
            tx.validate();
            channel.validate();
            frontend.validate();
            dsp.validate();
            if (tracker != "proposed" && tracker != "cma" && tracker != "fir")
                throw ConfigError("tracker must be one of proposed|cma|fir");
            if (trials_per_point < 1)
                throw ConfigError("trials_per_point must be >= 1");
            for (double s : sweep_sr)
                if (!(s >= 0.0))
                    throw ConfigError("sweep_sr values must be >= 0");
            if (!(beta > 0.0 && beta <= 1.0))
                throw ConfigError("beta must be in (0, 1]");
            if (jobs < 1)
                throw ConfigError("jobs must be >= 1");
            if (std::abs(frontend.adc_rate - tx.sample_rate) > 0.0)
            {
                const double r = tx.sample_rate / frontend.adc_rate;
                if (std::abs(r - std::round(r)) > 1e-9)
                    throw ConfigError("frontend.adc_rate must divide tx.sample_rate");
            }
            make_band_plan(tx, dsp.guards).validate(frontend.adc_rate);
        }
    };

    // ------------------------------------------------------------------ JSON

    namespace detail
    {
        using nlohmann::json;

        template <typename T>
        void get(const json &j, const char *key, T &v)
        {
            if (j.contains(key))
            {
                try
                {
                    v = j.at(key).get<T>();
                }
                catch (const json::exception &e)
                {
                    throw ConfigError(std::string("config key '") + key + "': " + e.what());
                }
            }
        }

        inline void check_keys(const json &j, const std::set<std::string> &allowed, const std::string &section)
        {
            if (!j.is_object())
                throw ConfigError("config section '" + section + "' must be an object");
            for (auto it = j.begin(); it != j.end(); ++it)
                if (!allowed.count(it.key()))
                    throw ConfigError("unknown config key '" + section + "." + it.key() + "'");
        }
    }

    inline nlohmann::json to_json(const ExperimentConfig &c)
    {
        nlohmann::json j;
        j["tx"] = {{"symbol_rate", c.tx.symbol_rate}, {"sample_rate", c.tx.sample_rate}, {"f_q", c.tx.f_q},
                   {"f_pt1", c.tx.f_pt1}, {"f_pt2", c.tx.f_pt2}, {"v_a", c.tx.v_a},
                   {"pilot_to_signal_db", c.tx.pilot_to_signal_db}, {"pt2_to_pt1_db", c.tx.pt2_to_pt1_db},
                   {"rrc_rolloff", c.tx.rrc_rolloff}, {"n_symbols", c.tx.n_symbols}, {"train_ratio", c.tx.train_ratio}};
        j["channel"] = {{"mode", to_string(c.channel.mode)}, {"alpha0", c.channel.alpha0}, {"phi1_0", c.channel.phi1_0},
                        {"phi2_0", c.channel.phi2_0}, {"random_start", c.channel.random_start}, {"sr", c.channel.sr},
                        {"loss_db", c.channel.loss_db}, {"eta", c.channel.eta}, {"v_ele", c.channel.v_ele},
                        {"xi_ch", c.channel.xi_ch}, {"linewidth_tx", c.channel.linewidth_tx},
                        {"walk_corr_angle", c.channel.walk_corr_angle}, {"walk_block", c.channel.walk_block}};
        j["frontend"] = {{"lo_offset", c.frontend.lo_offset}, {"lo_linewidth", c.frontend.lo_linewidth},
                         {"bpd_bandwidth", c.frontend.bpd_bandwidth}, {"shot_psd", c.frontend.shot_psd},
                         {"gain", c.frontend.gain}, {"adc_rate", c.frontend.adc_rate}, {"adc_bits", c.frontend.adc_bits}};
        j["dsp"] = {{"pilot_halfwidth", c.dsp.guards.pilot_halfwidth}, {"edge_guard", c.dsp.guards.edge_guard},
                    {"band_guard", c.dsp.guards.band_guard}, {"tracker_window", c.dsp.tracker_window},
                    {"lms_taps", c.dsp.lms_taps}, {"lms_mu", c.dsp.lms_mu}, {"cma_mu", c.dsp.cma_mu},
                    {"equalize_bpd", c.dsp.equalize_bpd}, {"calibration_frames", c.dsp.calibration_frames},
                    {"lag_search", c.dsp.lag_search}};
        j["experiment"] = {{"tracker", c.tracker}, {"sweep_sr", c.sweep_sr}, {"trials_per_point", c.trials_per_point},
                           {"out_dir", c.out_dir}, {"master_seed", c.master_seed}, {"jobs", c.jobs},
                           {"beta", c.beta}, {"waveform_dump", c.waveform_dump}};
        return j;
    }

    inline ExperimentConfig config_from_json(const nlohmann::json &j)
    {
        using detail::get;
        ExperimentConfig c;
        detail::check_keys(j, {"tx", "channel", "frontend", "dsp", "experiment"}, "");
        if (j.contains("tx"))
        {
            const auto &s = j["tx"];
            detail::check_keys(s, {"symbol_rate", "sample_rate", "f_q", "f_pt1", "f_pt2", "v_a", "pilot_to_signal_db",
                                   "pt2_to_pt1_db", "rrc_rolloff", "n_symbols", "train_ratio"}, "tx");
            get(s, "symbol_rate", c.tx.symbol_rate);
            get(s, "sample_rate", c.tx.sample_rate);
            get(s, "f_q", c.tx.f_q);
            get(s, "f_pt1", c.tx.f_pt1);
            get(s, "f_pt2", c.tx.f_pt2);
            get(s, "v_a", c.tx.v_a);
            get(s, "pilot_to_signal_db", c.tx.pilot_to_signal_db);
            get(s, "pt2_to_pt1_db", c.tx.pt2_to_pt1_db);
            get(s, "rrc_rolloff", c.tx.rrc_rolloff);
            get(s, "n_symbols", c.tx.n_symbols);
            get(s, "train_ratio", c.tx.train_ratio);
        }
        if (j.contains("channel"))
        {
            const auto &s = j["channel"];
            detail::check_keys(s, {"mode", "alpha0", "phi1_0", "phi2_0", "random_start", "sr", "loss_db", "eta", "v_ele",
                                   "xi_ch", "linewidth_tx", "walk_corr_angle", "walk_block"}, "channel");
            std::string mode = to_string(c.channel.mode);
            get(s, "mode", mode);
            c.channel.mode = parse_mode(mode);
            get(s, "alpha0", c.channel.alpha0);
            get(s, "phi1_0", c.channel.phi1_0);
            get(s, "phi2_0", c.channel.phi2_0);
            get(s, "random_start", c.channel.random_start);
            get(s, "sr", c.channel.sr);
            get(s, "loss_db", c.channel.loss_db);
            get(s, "eta", c.channel.eta);
            get(s, "v_ele", c.channel.v_ele);
            get(s, "xi_ch", c.channel.xi_ch);
            get(s, "linewidth_tx", c.channel.linewidth_tx);
            get(s, "walk_corr_angle", c.channel.walk_corr_angle);
            get(s, "walk_block", c.channel.walk_block);
        }
        if (j.contains("frontend"))
        {
            const auto &s = j["frontend"];
            detail::check_keys(s, {"lo_offset", "lo_linewidth", "bpd_bandwidth", "shot_psd", "gain", "adc_rate", "adc_bits"},
                               "frontend");
            get(s, "lo_offset", c.frontend.lo_offset);
            get(s, "lo_linewidth", c.frontend.lo_linewidth);
            get(s, "bpd_bandwidth", c.frontend.bpd_bandwidth);
            get(s, "shot_psd", c.frontend.shot_psd);
            get(s, "gain", c.frontend.gain);
            get(s, "adc_rate", c.frontend.adc_rate);
            get(s, "adc_bits", c.frontend.adc_bits);
        }
        if (j.contains("dsp"))
        {
            const auto &s = j["dsp"];
            detail::check_keys(s, {"pilot_halfwidth", "edge_guard", "band_guard", "tracker_window", "lms_taps", "lms_mu",
                                   "cma_mu", "equalize_bpd", "calibration_frames", "lag_search"}, "dsp");
            get(s, "pilot_halfwidth", c.dsp.guards.pilot_halfwidth);
            get(s, "edge_guard", c.dsp.guards.edge_guard);
            get(s, "band_guard", c.dsp.guards.band_guard);
            get(s, "tracker_window", c.dsp.tracker_window);
            get(s, "lms_taps", c.dsp.lms_taps);
            get(s, "lms_mu", c.dsp.lms_mu);
            get(s, "cma_mu", c.dsp.cma_mu);
            get(s, "equalize_bpd", c.dsp.equalize_bpd);
            get(s, "calibration_frames", c.dsp.calibration_frames);
            get(s, "lag_search", c.dsp.lag_search);
        }
        if (j.contains("experiment"))
        {
            const auto &s = j["experiment"];
            detail::check_keys(s, {"tracker", "sweep_sr", "trials_per_point", "out_dir", "master_seed", "jobs", "beta",
                                   "waveform_dump"}, "experiment");
            get(s, "tracker", c.tracker);
            get(s, "sweep_sr", c.sweep_sr);
            get(s, "trials_per_point", c.trials_per_point);
            get(s, "out_dir", c.out_dir);
            get(s, "master_seed", c.master_seed);
            get(s, "jobs", c.jobs);
            get(s, "beta", c.beta);
            get(s, "waveform_dump", c.waveform_dump);
        }
        c.validate();
        return c;
    }

    inline ExperimentConfig load_config(const std::string &path)
    {
        std::ifstream f(path);
        if (!f)
            throw ConfigError("cannot open config file " + path);
        nlohmann::json j;
        try
        {
            f >> j;
        }
        catch (const nlohmann::json::exception &e)
        {
            throw ConfigError("config parse error in " + path + ": " + e.what());
        }
        return config_from_json(j);
    }

    inline std::uint64_t config_hash(const ExperimentConfig &c)
    {
        return hash_tag(to_json(c).dump());
    }

    // ------------------------------------------------------------------ calibration

    struct SnuCalibration
    {
        double shot_plus_ele_var = 1.0;
        double ele_var = 0.0;
        double scale = 1.0; // per-quadrature symbol variance of one shot-noise unit
        bool noise_free = false;
    };

    namespace detail
    {
        inline BpdFilter receiver_bpd(const ExperimentConfig &c)
        {
            if (!c.dsp.equalize_bpd)
                return {};
            return BpdFilter::make(c.frontend.bpd_bandwidth, c.frontend.adc_rate);
        }

        // Per-quadrature variance of the quantum-band symbols for a signal-off frame
        inline double noise_symbol_variance(const ExperimentConfig &c, std::uint64_t seed, NoiseMask mask)
        {
            const std::size_t N = c.tx.n_samples();
            DualPolSeries zero;
            zero.sample_rate = c.tx.sample_rate;
            zero.v.assign(N, cplx(0.0, 0.0));
            zero.h.assign(N, cplx(0.0, 0.0));
            const Detector det{c.channel.eta, c.channel.v_ele};
            RealSeriesPair pair = heterodyne_detect(zero, c.frontend, det, seed, mask);
            CVec().swap(zero.v);
            CVec().swap(zero.h);
            pair = adc_capture(std::move(pair), c.frontend);
            const BandPlan plan = make_band_plan(c.tx, c.dsp.guards);
            dsp::BandSet bands = dsp::bandsplit(std::move(pair), plan, receiver_bpd(c));
            const dsp::DemodBand q = dsp::demodulate_xp(bands.q, plan.f_q, 2.0 * c.tx.symbol_rate);
            double acc = 0.0;
            std::size_t cnt = 0;
            for (const CVec *x : {&q.fields.v, &q.fields.h})
            {
                const auto mf = dsp::matched_filter_downsample(*x, q.fields.sample_rate, c.tx, 0.0);
                for (const auto &s : mf.symbols)
                    acc += std::norm(s);
                cnt += 2 * mf.symbols.size();
            }
            return acc / (double)cnt;
        }
    }

    // Signal-off frames through detection and demodulation: shot + electronic, then
    // electronic only; scale = difference.
    inline SnuCalibration calibrate_snu(const ExperimentConfig &c)
    {
        SnuCalibration cal;
        if (c.frontend.shot_psd == 0.0)
        {
            cal.noise_free = true;
            cal.shot_plus_ele_var = 0.0;
            return cal;
        }
        const std::size_t frames = c.dsp.calibration_frames;
        const std::size_t frames_ele = std::max<std::size_t>(1, (frames + 3) / 4);
        double se = 0.0, e = 0.0;
        for (std::size_t f = 0; f < frames; ++f)
            se += detail::noise_symbol_variance(c, hash_seed({c.master_seed, hash_tag("cal_shot"), f}), {true, true});
        for (std::size_t f = 0; f < frames_ele; ++f)
            e += detail::noise_symbol_variance(c, hash_seed({c.master_seed, hash_tag("cal_ele"), f}), {false, true});
        cal.shot_plus_ele_var = se / (double)frames;
        cal.ele_var = (c.channel.v_ele > 0.0) ? e / (double)frames_ele : 0.0;
        cal.scale = cal.shot_plus_ele_var - cal.ele_var;
        if (!(cal.scale > 0.0))
            throw CalibrationError("calibrate_snu: non-positive shot-noise scale");
        return cal;
    }

    // Calibration depends only on the receiver and frame settings; cache per process
    inline std::uint64_t calibration_key(const ExperimentConfig &c)
    {
        auto j = to_json(c);
        nlohmann::json k = {{"tx", j["tx"]}, {"frontend", j["frontend"]}, {"dsp", j["dsp"]},
                            {"v_ele", c.channel.v_ele}, {"eta", c.channel.eta}, {"seed", c.master_seed}};
        return hash_tag(k.dump());
    }

    inline SnuCalibration cached_calibration(const ExperimentConfig &c)
    {
        static std::mutex mtx;
        static std::map<std::uint64_t, std::shared_future<SnuCalibration>> cache;
        const std::uint64_t key = calibration_key(c);
        std::shared_future<SnuCalibration> fut;
        std::promise<SnuCalibration> prom;
        bool owner = false;
        {
            std::lock_guard<std::mutex> lock(mtx);
            auto it = cache.find(key);
            if (it == cache.end())
            {
                fut = prom.get_future().share();
                cache.emplace(key, fut);
                owner = true;
            }
            else
                fut = it->second;
        }
        if (owner)
        {
            try
            {
                prom.set_value(calibrate_snu(c));
            }
            catch (...)
            {
                prom.set_exception(std::current_exception());
                std::lock_guard<std::mutex> lock(mtx);
                cache.erase(key);
            }
        }
        return fut.get();
    }

    // ------------------------------------------------------------------ pipeline

    // Optional per-run diagnostics
    struct RunDiagnostics
    {
        double crosstalk_db = 0.0; // quantum H-output over V-output power after demux
        double freq_offset_hat = 0.0;
        double timing = 0.0;
        long lag = 0;
        CVec rx_payload, tx_payload; // gain-normalized rx and tx symbols
        bool keep_symbols = false;
        std::map<std::string, double> stage_seconds;
    };

    namespace detail
    {
        inline thread_local std::map<std::string, double> *stage_clock = nullptr;

        template <typename F>
        auto stage(const char *label, F &&f) -> decltype(f())
        {
            struct Lap
            {
                const char *label;
                std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
                ~Lap()
                {
                    if (stage_clock)
                        (*stage_clock)[label] +=
                            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
                }
            } lap{label};
            try
            {
                return f();
            }
            catch (const ConfigError &e)
            {
                throw ConfigError(std::string(label) + ": " + e.what());
            }
            catch (const DivergenceError &e)
            {
                throw DivergenceError(std::string(label) + ": " + e.what());
            }
            catch (const Error &e)
            {
                throw RuntimeFailure(std::string(label) + ": " + e.what());
            }
        }

        // Resolve integer symbol lag and constant phase against the training block.
        // Returns the magnitude of the complex gain; with `unit_gain` the stream is also
        // divided by it so the equalizer starts at its optimum.
        inline double align_to_training(CVec &rx, const SymbolFrame &frame, std::size_t search, long &lag_out,
                                        bool unit_gain = false)
        {
            const std::size_t n = rx.size();
            const std::size_t nt = std::min<std::size_t>(frame.n_train() > 0 ? frame.n_train() : n, 20000);
            long best = 0;
            cplx best_c(0.0, 0.0);
            for (long L = -(long)search; L <= (long)search; ++L)
            {
                cplx c(0.0, 0.0);
                for (std::size_t m = 0; m < nt; ++m)
                    c += rx[(m + n + (std::size_t)(L + (long)n)) % n] * std::conj(frame.symbols[m]);
                if (std::abs(c) > std::abs(best_c))
                {
                    best_c = c;
                    best = L;
                }
            }
            lag_out = best;
            if (best != 0)
            {
                CVec r(n);
                for (std::size_t m = 0; m < n; ++m)
                    r[m] = rx[(m + n + (std::size_t)(best + (long)n)) % n];
                rx.swap(r);
            }
            double p = 0.0;
            for (std::size_t m = 0; m < nt; ++m)
                p += std::norm(frame.symbols[m]);
            const double g = p > 0.0 ? std::abs(best_c) / p : 0.0;
            if (g > 0.0)
            {
                const cplx rot = std::conj(best_c) / std::abs(best_c) / (unit_gain ? g : 1.0);
                for (auto &z : rx)
                    z *= rot;
            }
            return g;
        }

        inline void unit_phasor_compensate(CVec &q, const CVec &pilot, std::size_t window)
        {
            CVec u = moving_average(pilot, window);
            for (std::size_t k = 0; k < q.size(); ++k)
            {
                const double a = std::abs(u[k]);
                if (a > 0.0)
                    q[k] *= std::conj(u[k]) / a;
            }
        }
    }

    inline std::uint64_t trial_seed(std::uint64_t master_seed, std::size_t trial)
    {
        return hash_seed({master_seed, hash_tag("trial"), (std::uint64_t)trial});
    }

    // txgen -> channel -> frontend -> dsp or baseline -> metrics for one (sr, trial)
    inline MetricsReport run_experiment(const ExperimentConfig &cfg, double sr, std::size_t trial,
                                        RunDiagnostics *diag = nullptr)
    {
        struct ClockGuard
        {
            ~ClockGuard() { detail::stage_clock = nullptr; }
        } clock_guard;
        detail::stage_clock = diag ? &diag->stage_seconds : nullptr;
        detail::stage("config", [&] { cfg.validate(); return 0; });
        const SnuCalibration cal = detail::stage("calibration", [&] { return cached_calibration(cfg); });
        const std::uint64_t seed = trial_seed(cfg.master_seed, trial);

        MetricsReport rep;
        rep.sr = sr;
        rep.trial = trial;
        rep.seed = seed;
        rep.tracker = cfg.tracker;

        TxConfig txc = cfg.tx;
        txc.seed = hash_seed({seed, hash_tag("symbols")});
        const BandPlan plan = make_band_plan(txc, cfg.dsp.guards);
        const SymbolFrame frame = detail::stage("txgen", [&] { return build_frame(txc); });
        const std::size_t N = txc.n_samples();
        const double rate2 = 2.0 * txc.symbol_rate;

        ChannelConfig chc = cfg.channel;
        chc.sr = sr;
        const JonesTrajectory traj = detail::stage("channel", [&] { return make_trajectory(chc, N, txc.sample_rate, seed); });

        dsp::BandSet bands = [&]
        {
            DualPolSeries field = detail::stage("txgen", [&] {
                return synthesize_tx(frame, txc, {chc.xi_ch, hash_seed({seed, hash_tag("excess")})});
            });
            field = detail::stage("channel", [&] { return apply_channel(std::move(field), chc, traj, seed); });
            RealSeriesPair pair = detail::stage("frontend", [&] {
                RealSeriesPair p = heterodyne_detect(field, cfg.frontend, {chc.eta, chc.v_ele}, seed);
                return adc_capture(std::move(p), cfg.frontend);
            });
            CVec().swap(field.v);
            CVec().swap(field.h);
            if (!cfg.waveform_dump.empty())
            {
                char name[64];
                std::snprintf(name, sizeof name, "_sr%.6g_t%zu.f32", sr, trial);
                write_waveform(cfg.waveform_dump + name, pair, seed, config_hash(cfg));
            }
            return detail::stage("bandsplit", [&] { return dsp::bandsplit(std::move(pair), plan, detail::receiver_bpd(cfg)); });
        }();

        // Common IF offset from the SOP-invariant determinant of the two pilots,
        // which rotates at twice the offset
        dsp::DemodBand pt1 = detail::stage("demodulate", [&] { return dsp::demodulate_xp(bands.pt1, plan.f_pt1, rate2); });
        dsp::DemodBand pt2 = detail::stage("demodulate", [&] { return dsp::demodulate_xp(bands.pt2, plan.f_pt2, rate2); });
        const double delta = detail::stage("frequency estimation", [&] {
            const std::size_t M = pt1.size();
            CVec D(M);
            for (std::size_t k = 0; k < M; ++k)
                D[k] = pt1.fields.v[k] * pt2.fields.h[k] - pt1.fields.h[k] * pt2.fields.v[k];
            fft_inplace(D);
            // reorder to ascending frequency for the peak search
            CVec Ds(M);
            const std::size_t h = M / 2;
            for (std::size_t k = 0; k < M; ++k)
                Ds[k] = D[(k + M - h) % M];
            const double df = rate2 / (double)M;
            const auto est = dsp::peak_frequency(Ds, {}, -(double)h * df, df, true);
            return 0.5 * est.freq;
        });
        detail::stage("demodulate", [&] {
            for (CVec *x : {&pt1.fields.v, &pt1.fields.h, &pt2.fields.v, &pt2.fields.h})
                dsp::mix_down(*x, delta, rate2);
            return 0;
        });
        pt1.f_hat = plan.f_pt1 + delta;
        pt2.f_hat = plan.f_pt2 + delta;
        dsp::DemodBand q = detail::stage("demodulate", [&] { return dsp::demodulate_xp(bands.q, plan.f_q + delta, rate2); });
        bands = dsp::BandSet{};

        const std::size_t W = cfg.dsp.tracker_window;
        const double det_noise = cal.noise_free ? 0.0 : 1.0 + chc.v_ele;
        const double snu = cal.noise_free ? 1.0 : 1.0 / std::sqrt(cal.scale);
        const std::size_t nt = frame.n_train();
        CVec tx_pay(frame.symbols.begin() + (std::ptrdiff_t)nt, frame.symbols.end());
        rep.block_size = tx_pay.size();

        dsp::LmsOptions lopt;
        lopt.taps = cfg.dsp.lms_taps;
        lopt.mu = cfg.dsp.lms_mu;
        lopt.throw_on_divergence = (cfg.tracker == "proposed");

        dsp::LmsResult eq;
        long lag = 0;
        double timing = 0.0;
        if (cfg.tracker == "fir")
        {
            detail::stage("phase compensation", [&] {
                detail::unit_phasor_compensate(q.fields.v, pt1.fields.v, W);
                detail::unit_phasor_compensate(q.fields.h, pt1.fields.h, W);
                return 0;
            });
            auto mv = detail::stage("matched filter", [&] { return dsp::matched_filter_downsample(q.fields.v, rate2, txc); });
            auto mh = detail::stage("matched filter", [&] { return dsp::matched_filter_downsample(q.fields.h, rate2, txc, mv.timing); });
            timing = mv.timing;
            for (auto *s : {&mv.symbols, &mh.symbols})
                for (auto &z : *s)
                    z *= snu;
            long lag_h = 0;
            detail::align_to_training(mv.symbols, frame, cfg.dsp.lag_search, lag);
            detail::align_to_training(mh.symbols, frame, cfg.dsp.lag_search, lag_h);
            lopt.power_normalize = false; // raw SNU-scaled inputs, so the taps converge within the training block
            eq = detail::stage("equalizer", [&] { return baselines::fir_mimo_track(mv.symbols, mh.symbols, frame, lopt); });
        }
        else
        {
            if (cfg.tracker == "proposed")
            {
                const dsp::PolEstimate est = detail::stage("tracker", [&] { return dsp::estimate_polarization(pt2, W); });
                // Smoothing PT1 before demux keeps the per-sample inverse on both paths identical
                detail::stage("demux", [&] { dsp::smooth_band(pt1, W); return 0; });
                detail::stage("demux", [&] {
                    dsp::apply_demux(est, {&q, &pt1});
                    return 0;
                });
                rep.alpha_rms_err = detail::stage("metrics", [&] {
                    RVec at, dt;
                    trajectory_truth(traj, rate2, est.size(), at, dt);
                    return tracking_error_stats(est, at, dt, 8).alpha_rms_err;
                });
                if (diag)
                {
                    const double pv = mean_power(q.fields.v), ph = mean_power(q.fields.h);
                    diag->crosstalk_db = (ph > 0.0 && pv > 0.0) ? 10.0 * std::log10(ph / pv) : -300.0;
                }
                q = detail::stage("phase compensation", [&] { return dsp::compensate_phase(std::move(q), pt1, 1); });
            }
            else
            {
                const auto cma = detail::stage("cma", [&] {
                    return baselines::cma_track(pt2, {&q, &pt1}, cfg.dsp.cma_mu);
                });
                if (cma.diverged)
                    rep.diverged = true;
                if (!rep.diverged)
                    q = detail::stage("phase compensation", [&] { return dsp::compensate_phase(std::move(q), pt1, W); });
            }
            if (!rep.diverged)
            {
                auto mf = detail::stage("matched filter", [&] { return dsp::matched_filter_downsample(q.fields.v, rate2, txc); });
                timing = mf.timing;
                for (auto &z : mf.symbols)
                    z *= snu;
                const double g = detail::align_to_training(mf.symbols, frame, cfg.dsp.lag_search, lag, true);
                eq = detail::stage("equalizer", [&] { return dsp::lms_equalize(mf.symbols, frame, lopt); });
                for (auto &z : eq.out)
                    z *= g;
            }
        }
        if (eq.diverged)
            rep.diverged = true;
        if (rep.diverged)
        {
            rep.skr_bps = 0.0;
            return rep;
        }

        CVec rx_pay(eq.out.begin() + (std::ptrdiff_t)nt, eq.out.end());
        const ParamEstimate pe = detail::stage("metrics", [&] { return estimate_params(tx_pay, rx_pay, chc.eta, det_noise); });
        rep.t_hat = pe.t_hat;
        rep.xi_hat = pe.xi_hat;
        for (auto &z : rx_pay)
            z /= pe.g;
        rep.evm_db = detail::stage("metrics", [&] { return evm(rx_pay, tx_pay); });
        SkrParams sp;
        sp.v_a = txc.v_a;
        sp.t = std::max(pe.t_hat, 0.0);
        sp.xi = std::max(pe.xi_hat, 0.0); // estimator noise can push xi_hat below the physical range
        sp.eta = chc.eta;
        sp.v_ele = chc.v_ele;
        sp.beta = cfg.beta;
        sp.symbol_rate = txc.symbol_rate;
        sp.train_ratio = txc.train_ratio;
        rep.skr_bps = detail::stage("key rate", [&] { return asymptotic_skr(sp); });

        if (diag)
        {
            diag->freq_offset_hat = delta;
            diag->timing = timing;
            diag->lag = lag;
            if (diag->keep_symbols)
            {
                diag->rx_payload = std::move(rx_pay);
                diag->tx_payload = std::move(tx_pay);
            }
        }
        return rep;
    }

    // ------------------------------------------------------------------ sweep + CSV

    inline const char *csv_header()
    {
        return "sr_rad_s,trial,seed,tracker,t_hat,xi_hat_snu,evm_db,alpha_rms_err_rad,skr_bps,diverged";
    }

    inline std::string format_number(double x)
    {
        if (std::isnan(x))
            return "nan";
        char buf[48];
        std::snprintf(buf, sizeof buf, "%.10g", x);
        return buf;
    }

    inline std::string csv_row(const MetricsReport &r)
    {
        std::ostringstream o;
        o << format_number(r.sr) << ',' << r.trial << ',' << r.seed << ',' << r.tracker << ',' << format_number(r.t_hat)
          << ',' << format_number(r.xi_hat) << ',' << format_number(r.evm_db) << ',' << format_number(r.alpha_rms_err)
          << ',' << format_number(r.skr_bps) << ',' << (r.diverged ? 1 : 0);
        return o.str();
    }

    inline bool row_less(const MetricsReport &a, const MetricsReport &b)
    {
        if (a.tracker != b.tracker)
            return a.tracker < b.tracker;
        if (a.sr != b.sr)
            return a.sr < b.sr;
        return a.trial < b.trial;
    }

    // Runs trials_per_point x |sweep_sr| (x |trackers|) experiments on `jobs` threads
    inline std::vector<MetricsReport> sweep(const ExperimentConfig &cfg, const std::vector<std::string> &trackers = {},
                                            std::function<void(const MetricsReport &)> progress = nullptr)
    {
        cfg.validate();
        struct Task
        {
            std::string tracker;
            double sr;
            std::size_t trial;
        };
        std::vector<Task> tasks;
        const std::vector<std::string> tr = trackers.empty() ? std::vector<std::string>{cfg.tracker} : trackers;
        for (const auto &t : tr)
            for (double s : cfg.sweep_sr)
                for (std::size_t k = 0; k < cfg.trials_per_point; ++k)
                    tasks.push_back({t, s, k});

        std::vector<MetricsReport> rows(tasks.size());
        std::atomic<std::size_t> next{0};
        std::mutex mtx;
        std::exception_ptr err;
        auto worker = [&]
        {
            for (;;)
            {
                const std::size_t i = next.fetch_add(1);
                if (i >= tasks.size())
                    return;
                {
                    std::lock_guard<std::mutex> lock(mtx);
                    if (err)
                        return;
                }
                try
                {
                    ExperimentConfig c = cfg;
                    c.tracker = tasks[i].tracker;
                    rows[i] = run_experiment(c, tasks[i].sr, tasks[i].trial);
                    if (progress)
                    {
                        std::lock_guard<std::mutex> lock(mtx);
                        progress(rows[i]);
                    }
                }
                catch (...)
                {
                    std::lock_guard<std::mutex> lock(mtx);
                    if (!err)
                        err = std::current_exception();
                }
            }
        };
        const std::size_t nj = std::min<std::size_t>(cfg.jobs, std::max<std::size_t>(tasks.size(), 1));
        if (nj <= 1)
            worker();
        else
        {
            std::vector<std::thread> pool;
            for (std::size_t j = 0; j < nj; ++j)
                pool.emplace_back(worker);
            for (auto &t : pool)
                t.join();
        }
        if (err)
            std::rethrow_exception(err);
        std::sort(rows.begin(), rows.end(), row_less);
        return rows;
    }

    inline void write_csv(const std::string &path, std::vector<MetricsReport> rows)
    {
        std::sort(rows.begin(), rows.end(), row_less);
        std::ofstream f(path, std::ios::binary);
        if (!f)
            throw RuntimeFailure("cannot write " + path);
        f << csv_header() << '\n';
        for (const auto &r : rows)
            f << csv_row(r) << '\n';
        if (!f)
            throw RuntimeFailure("write failed for " + path);
    }

    // Per (tracker, sr): mean and standard deviation of xi_hat and skr_bps
    inline std::string summarize(const std::vector<MetricsReport> &rows)
    {
        struct Acc
        {
            std::vector<double> xi, skr;
            std::size_t diverged = 0;
        };
        std::map<std::pair<std::string, double>, Acc> g;
        for (const auto &r : rows)
        {
            auto &a = g[{r.tracker, r.sr}];
            if (r.diverged || std::isnan(r.xi_hat))
                ++a.diverged;
            else
            {
                a.xi.push_back(r.xi_hat);
                a.skr.push_back(r.skr_bps);
            }
        }
        auto ms = [](const std::vector<double> &v)
        {
            if (v.empty())
                return std::make_pair(std::nan(""), std::nan(""));
            double m = 0.0;
            for (double x : v)
                m += x;
            m /= (double)v.size();
            double s = 0.0;
            for (double x : v)
                s += (x - m) * (x - m);
            s = v.size() > 1 ? std::sqrt(s / (double)(v.size() - 1)) : 0.0;
            return std::make_pair(m, s);
        };
        std::ostringstream o;
        o << "# xi_hat referenced to the channel input, shot-noise units\n";
        o << "tracker,sr_rad_s,n_ok,n_diverged,xi_mean,xi_std,skr_mean_bps,skr_std_bps\n";
        for (const auto &[key, a] : g)
        {
            auto [xm, xs] = ms(a.xi);
            auto [km, ks] = ms(a.skr);
            o << key.first << ',' << format_number(key.second) << ',' << a.xi.size() << ',' << a.diverged << ','
              << format_number(xm) << ',' << format_number(xs) << ',' << format_number(km) << ',' << format_number(ks) << '\n';
        }
        return o.str();
    }

    // Preset sweeps
    inline std::vector<double> krad_sweep() { return {0.0, 0.63e3, 1.26e3, 3.14e3, 6.28e3, 12.57e3}; }

    inline std::vector<double> mrad_sweep()
    {
        std::vector<double> s{0.0};
        for (double mhz : {1.0, 5.0, 10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0})
            s.push_back(two_pi * mhz * 1e6);
        return s;
    }
}
