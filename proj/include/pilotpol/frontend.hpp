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

#include "pilotpol/common.hpp"
#include "pilotpol/random.hpp"

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

namespace pilotpol
{
    // Polarization-diversity heterodyne receiver.
    // shot_psd is the per-sample shot-noise variance; 0.5 gives one shot-noise unit
    // per quadrature at the symbol output of the default receiver chain.
    struct FrontendConfig
    {
        double lo_offset = 1.75e9;
        double lo_linewidth = 100.0;
        double bpd_bandwidth = 1.6e9; // 3-dB, 0 disables the filter
        double shot_psd = 0.5;
        double gain = 1.0;            // lumped responsivity x transimpedance, arbitrary units
        double adc_rate = 10e9;
        int adc_bits = 0;             // 0 = no quantization

        void validate() const
        {
            if (!(bpd_bandwidth >= 0.0) || !(shot_psd >= 0.0) || !(lo_linewidth >= 0.0))
                throw ConfigError("frontend: bpd_bandwidth, shot_psd and lo_linewidth must be >= 0");
            if (!(gain > 0.0))
                throw ConfigError("frontend: gain must be positive");
            if (!(adc_rate > 0.0))
                throw ConfigError("frontend: adc_rate must be positive");
            if (adc_bits < 0 || adc_bits > 24)
                throw ConfigError("frontend: adc_bits must be in [0, 24]");
        }
    };

    struct Detector
    {
        double eta = 1.0;
        double v_ele = 0.0; // electronic noise in units of shot noise
    };

    struct NoiseMask
    {
        bool shot = true;
        bool ele = true;
    };

    // Single-pole BPD response, bilinear transform prewarped to -3 dB at fc:
    // H(z) = b (1 + z^-1) / (1 - a z^-1)
    struct BpdFilter
    {
        double a = 0.0, b = 1.0;
        bool enabled = false;

        static BpdFilter make(double fc, double fs)
        {
            BpdFilter f;
            if (fc <= 0.0)
                return f;
            if (!(fc < 0.5 * fs))
                throw ConfigError("frontend: bpd_bandwidth must be below sample_rate/2");
            const double K = std::tan(pi * fc / fs);
            f.a = (1.0 - K) / (1.0 + K);
            f.b = K / (1.0 + K);
            f.enabled = true;
            return f;
        }

        // Frequency response at normalized frequency f/fs
        cplx response(double fn) const
        {
            if (!enabled)
                return {1.0, 0.0};
            const cplx z1 = std::polar(1.0, -two_pi * fn);
            return b * (1.0 + z1) / (1.0 - a * z1);
        }

        // Circular filtering: the state is warmed up on the frame tail so the
        // result equals periodic convolution to double precision.
        void apply(RVec &x) const
        {
            if (!enabled || x.empty())
                return;
            const std::size_t n = x.size();
            std::size_t warm = n;
            if (std::abs(a) > 0.0 && std::abs(a) < 1.0)
                warm = std::min(n, (std::size_t)std::ceil(-40.0 / std::log10(std::abs(a))) + 1);
            double y = 0.0, xp = 0.0;
            for (std::size_t k = n - warm; k < n; ++k)
            {
                y = b * (x[k] + xp) + a * y;
                xp = x[k];
            }
            for (std::size_t k = 0; k < n; ++k)
            {
                const double xk = x[k];
                y = b * (xk + xp) + a * y;
                xp = xk;
                x[k] = y;
            }
        }
    };

    // i(t) = gain * [ Re{ sqrt(eta) E(t) exp(j(2 pi f_lo t + theta_lo)) } + n(t) ], then the BPD filter
    inline RealSeriesPair heterodyne_detect(const DualPolSeries &rx, const FrontendConfig &cfg, const Detector &det,
                                            std::uint64_t seed, NoiseMask mask = {})
    {
        cfg.validate();
        rx.check();
        const std::size_t N = rx.size();
        if (N == 0)
            throw ConfigError("heterodyne_detect: empty input");
        const double fs = rx.sample_rate;
        const double se = std::sqrt(det.eta);

        RealSeriesPair out;
        out.sample_rate = fs;
        out.i_v.resize(N);
        out.i_h.resize(N);

        // LO phasor: exact at every block start, constant-step recurrence inside
        Engine eng_lo = make_stream(seed, "lo_phase");
        const std::size_t B = 16;
        const RVec th = wiener_knots(eng_lo, N, B, std::sqrt(two_pi * cfg.lo_linewidth / fs));
        const double fn = cfg.lo_offset / fs;
        for (std::size_t b = 0; b * B < N; ++b)
        {
            const std::size_t k0 = b * B, end = std::min(N, k0 + B);
            cplx lo = std::polar(1.0, two_pi * std::fmod(fn * (double)k0, 1.0) + th[b]);
            const cplx step = std::polar(1.0, two_pi * fn + (th[b + 1] - th[b]) / (double)B);
            for (std::size_t k = k0; k < end; ++k)
            {
                const cplx v = rx.v[k], h = rx.h[k];
                out.i_v[k] = se * (v.real() * lo.real() - v.imag() * lo.imag());
                out.i_h[k] = se * (h.real() * lo.real() - h.imag() * lo.imag());
                lo *= step;
            }
        }

        double var = 0.0;
        if (mask.shot)
            var += cfg.shot_psd;
        if (mask.ele)
            var += det.v_ele * cfg.shot_psd;
        if (var > 0.0)
        {
            Engine eng = make_stream(seed, "detection_noise");
            boost::random::normal_distribution<double> nd(0.0, std::sqrt(var));
            for (std::size_t k = 0; k < N; ++k)
                out.i_v[k] += nd(eng);
            for (std::size_t k = 0; k < N; ++k)
                out.i_h[k] += nd(eng);
        }

        const BpdFilter bpd = BpdFilter::make(cfg.bpd_bandwidth, fs);
        bpd.apply(out.i_v);
        bpd.apply(out.i_h);
        if (cfg.gain != 1.0)
            for (std::size_t k = 0; k < N; ++k)
            {
                out.i_v[k] *= cfg.gain;
                out.i_h[k] *= cfg.gain;
            }
        return out;
    }

    // Decimation and optional uniform mid-rise quantization over the observed range
    inline RealSeriesPair adc_capture(RealSeriesPair pair, const FrontendConfig &cfg)
    {
        cfg.validate();
        const double ratio = pair.sample_rate / cfg.adc_rate;
        if (ratio < 1.0 - 1e-12 || std::abs(ratio - std::round(ratio)) > 1e-9)
            throw ConfigError("adc_capture: adc_rate must divide the input sample rate");
        const std::size_t D = (std::size_t)std::llround(ratio);
        if (D > 1)
        {
            for (RVec *x : {&pair.i_v, &pair.i_h})
            {
                RVec y;
                y.reserve(x->size() / D + 1);
                for (std::size_t k = 0; k < x->size(); k += D)
                    y.push_back((*x)[k]);
                *x = std::move(y);
            }
            pair.sample_rate = cfg.adc_rate;
        }
        if (cfg.adc_bits > 0)
        {
            double full = 0.0;
            for (const RVec *x : {&pair.i_v, &pair.i_h})
                for (double s : *x)
                    full = std::max(full, std::abs(s));
            if (full > 0.0)
            {
                const double levels = std::ldexp(1.0, cfg.adc_bits);
                const double delta = 2.0 * full / levels;
                const double top = full - 0.5 * delta;
                for (RVec *x : {&pair.i_v, &pair.i_h})
                    for (double &s : *x)
                        s = std::clamp(delta * (std::floor(s / delta) + 0.5), -top, top);
            }
        }
        return pair;
    }

    // Little-endian float32 interleaved (i_v, i_h) plus a text sidecar
    inline void write_waveform(const std::string &path, const RealSeriesPair &pair, std::uint64_t seed, std::uint64_t config_hash)
    {
        std::ofstream f(path, std::ios::binary);
        if (!f)
            throw RuntimeFailure("cannot open waveform file " + path);
        std::vector<unsigned char> buf(8 * pair.size());
        auto put = [&](std::size_t off, float v)
        {
            std::uint32_t u;
            std::memcpy(&u, &v, 4);
            for (int i = 0; i < 4; ++i)
                buf[off + i] = (unsigned char)((u >> (8 * i)) & 0xFF);
        };
        for (std::size_t k = 0; k < pair.size(); ++k)
        {
            put(8 * k, (float)pair.i_v[k]);
            put(8 * k + 4, (float)pair.i_h[k]);
        }
        f.write(reinterpret_cast<const char *>(buf.data()), (std::streamsize)buf.size());
        std::ofstream s(path + ".txt");
        if (!s)
            throw RuntimeFailure("cannot open waveform sidecar " + path + ".txt");
        char hex[17];
        std::snprintf(hex, sizeof hex, "%016llx", (unsigned long long)config_hash);
        s.precision(17);
        s << "sample_rate " << pair.sample_rate << "\n"
          << "length " << pair.size() << "\n"
          << "seed " << seed << "\n"
          << "config_hash " << hex << "\n";
    }

    inline RealSeriesPair read_waveform(const std::string &path, double sample_rate)
    {
        std::ifstream f(path, std::ios::binary);
        if (!f)
            throw RuntimeFailure("cannot open waveform file " + path);
        std::vector<unsigned char> buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
        RealSeriesPair p;
        p.sample_rate = sample_rate;
        const std::size_t n = buf.size() / 8;
        p.i_v.resize(n);
        p.i_h.resize(n);
        auto get = [&](std::size_t off)
        {
            std::uint32_t u = 0;
            for (int i = 0; i < 4; ++i)
                u |= (std::uint32_t)buf[off + i] << (8 * i);
            float v;
            std::memcpy(&v, &u, 4);
            return (double)v;
        };
        for (std::size_t k = 0; k < n; ++k)
        {
            p.i_v[k] = get(8 * k);
            p.i_h[k] = get(8 * k + 4);
        }
        return p;
    }
}
