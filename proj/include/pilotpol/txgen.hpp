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
#include "pilotpol/fft.hpp"
#include "pilotpol/random.hpp"

#include <boost/math/tools/roots.hpp>
#include <boost/random/discrete_distribution.hpp>

#include <array>
#include <cstdint>

namespace pilotpol
{
    // Transmitter and frequency plan. All frequencies are detected IFs (Hz); the
    // optical carrier beats to f_pt2, so a band at IF f sits at f - f_pt2 in the
    // transmitted baseband.
    struct TxConfig
    {
        double symbol_rate = 1e9;
        double sample_rate = 10e9;
        double f_q = 0.9e9;
        double f_pt1 = 0.05e9;
        double f_pt2 = 1.75e9;
        double v_a = 6.15;
        double pilot_to_signal_db = 20.0;
        double pt2_to_pt1_db = 0.0; // PT2 power relative to PT1
        double rrc_rolloff = 0.3;
        std::size_t n_symbols = 1250000;
        double train_ratio = 0.20;
        std::uint64_t seed = 1;

        std::size_t sps() const { return (std::size_t)std::llround(sample_rate / symbol_rate); }
        std::size_t n_samples() const { return n_symbols * sps(); }
        std::size_t n_train() const { return (std::size_t)std::ceil(train_ratio * (double)n_symbols - 1e-9); }
        double bin_spacing() const { return sample_rate / (double)n_samples(); }

        // IF snapped to the frame DFT grid
        double snap(double f) const { return std::round(f / bin_spacing()) * bin_spacing(); }
        double quantum_halfwidth() const { return 0.5 * (1.0 + rrc_rolloff) * symbol_rate; }

        void validate() const;
    };

    struct Interval
    {
        double lo = 0.0, hi = 0.0;

        double width() const { return hi - lo; }
        double center() const { return 0.5 * (lo + hi); }
        bool contains(double f) const { return f >= lo && f <= hi; }
        bool overlaps(const Interval &o) const { return lo < o.hi && o.lo < hi; }
    };

    // Receiver band guards around the pilot tones
    struct BandGuards
    {
        double pilot_halfwidth = 0.15e9;
        double edge_guard = 0.01e9;  // clearance from DC and Nyquist
        double band_guard = 0.05e9;  // clearance from the quantum band
    };

    struct BandPlan
    {
        Interval q, pt1, pt2;
        double f_q = 0.0, f_pt1 = 0.0, f_pt2 = 0.0; // nominal (snapped) IFs

        void validate(double sample_rate) const
        {
            const double nyq = 0.5 * sample_rate;
            for (const Interval *b : {&q, &pt1, &pt2})
                if (!(b->lo > 0.0 && b->hi < nyq && b->width() > 0.0))
                    throw ConfigError("band plan: interval outside (0, sample_rate/2) or empty");
            if (q.overlaps(pt1) || q.overlaps(pt2) || pt1.overlaps(pt2))
                throw ConfigError("band plan: overlapping bands");
            if (!pt1.contains(f_pt1) || !pt2.contains(f_pt2) || !q.contains(f_q))
                throw ConfigError("band plan: tone outside its band");
        }
    };

    inline BandPlan make_band_plan(const TxConfig &cfg, const BandGuards &g = {})
    {
        BandPlan p;
        p.f_q = cfg.snap(cfg.f_q);
        p.f_pt1 = cfg.snap(cfg.f_pt1);
        p.f_pt2 = cfg.snap(cfg.f_pt2);
        const double hw = cfg.quantum_halfwidth();
        p.q = {p.f_q - hw, p.f_q + hw};
        p.pt1 = {std::max(p.f_pt1 - g.pilot_halfwidth, g.edge_guard),
                 std::min(p.f_pt1 + g.pilot_halfwidth, p.q.lo - g.band_guard)};
        p.pt2 = {std::max(p.f_pt2 - g.pilot_halfwidth, p.q.hi + g.band_guard),
                 std::min(p.f_pt2 + g.pilot_halfwidth, 0.5 * cfg.sample_rate - g.edge_guard)};
        return p;
    }

    inline void TxConfig::validate() const
    {
        if (!(symbol_rate > 0.0 && sample_rate > 0.0))
            throw ConfigError("tx: rates must be positive");
        const double r = sample_rate / symbol_rate;
        if (std::abs(r - std::round(r)) > 1e-9 || std::round(r) < 2.0)
            throw ConfigError("tx: sample_rate must be an integer multiple (>= 2) of symbol_rate");
        if (!(train_ratio >= 0.0 && train_ratio < 1.0))
            throw ConfigError("tx: train_ratio must be in [0, 1)");
        if (n_symbols < 1)
            throw ConfigError("tx: n_symbols must be >= 1");
        if (!(v_a > 0.0))
            throw ConfigError("tx: v_a must be positive");
        if (!(rrc_rolloff > 0.0 && rrc_rolloff <= 1.0))
            throw ConfigError("tx: rrc_rolloff must be in (0, 1]");
        const double hw = quantum_halfwidth();
        if (!(f_pt1 < f_q - hw) || !(f_pt2 > f_q + hw))
            throw ConfigError("tx: frequency plan requires f_pt1 < quantum band < f_pt2");
        if (!(f_pt1 > 0.0) || !(f_pt2 < 0.5 * sample_rate))
            throw ConfigError("tx: frequency plan must lie inside (0, sample_rate/2)");
    }

    // Root-raised-cosine amplitude response, f in Hz, unit passband gain
    inline double rrc_response(double f, double symbol_rate, double rolloff)
    {
        const double x = std::abs(f) / symbol_rate;
        const double a = 0.5 * (1.0 - rolloff), b = 0.5 * (1.0 + rolloff);
        if (x <= a)
            return 1.0;
        if (x >= b)
            return 0.0;
        return std::cos(pi / (2.0 * rolloff) * (x - a));
    }

    // ---------------------------------------------------------------- DG-256QAM

    struct SymbolFrame
    {
        CVec symbols;
        std::vector<std::uint8_t> train_mask;
        double v_a = 0.0;

        std::size_t size() const { return symbols.size(); }
        std::size_t n_train() const
        {
            std::size_t k = 0;
            while (k < train_mask.size() && train_mask[k])
                ++k;
            return k;
        }
    };

    // 16 x 16 grid {+-1, ..., +-15}^2 scaled by g, point probability prop. to
    // exp(-nu*|m|^2). Separable, so each quadrature is an independent 16-level draw.
    struct DgConstellation
    {
        double nu = 0.0;
        double g = 1.0;
        std::array<double, 16> levels{};
        std::array<double, 16> probs{};

        static DgConstellation with(double nu, double g)
        {
            DgConstellation c;
            c.nu = nu;
            c.g = g;
            double z = 0.0;
            for (int i = 0; i < 16; ++i)
            {
                const double m = -15.0 + 2.0 * i;
                c.levels[i] = m;
                c.probs[i] = std::exp(-nu * m * m);
                z += c.probs[i];
            }
            for (auto &p : c.probs)
                p /= z;
            return c;
        }

        // Per-quadrature variance
        double variance() const
        {
            double s = 0.0;
            for (int i = 0; i < 16; ++i)
                s += probs[i] * levels[i] * levels[i];
            return g * g * s;
        }

        double point_probability(int iq, int ii) const { return probs[iq] * probs[ii]; }
    };

    // Discrete Gaussian matching N(0, v_a): nu = g^2/(2 v_a), g solved so the
    // quadrature variance equals v_a.
    inline DgConstellation solve_dg256qam(double v_a)
    {
        if (!(v_a > 0.0))
            throw ConfigError("dg256qam: v_a must be positive");
        auto f = [&](double g)
        { return DgConstellation::with(g * g / (2.0 * v_a), g).variance() - v_a; };
        double lo = 1e-6 * std::sqrt(v_a), hi = 10.0 * std::sqrt(v_a);
        if (!(f(lo) < 0.0 && f(hi) > 0.0))
            throw ConfigError("dg256qam: no bracketable (nu, g) solution");
        boost::uintmax_t iters = 200;
        auto r = boost::math::tools::toms748_solve(f, lo, hi, boost::math::tools::eps_tolerance<double>(52), iters);
        const double g = 0.5 * (r.first + r.second);
        return DgConstellation::with(g * g / (2.0 * v_a), g);
    }

    inline CVec sample_constellation(const DgConstellation &c, std::size_t n, Engine &eng)
    {
        boost::random::discrete_distribution<int, double> pick(c.probs.begin(), c.probs.end());
        CVec s(n);
        for (auto &z : s)
        {
            const double re = c.levels[pick(eng)];
            const double im = c.levels[pick(eng)];
            z = cplx(c.g * re, c.g * im);
        }
        return s;
    }

    inline SymbolFrame sample_dg256qam(std::size_t n, double v_a, std::uint64_t seed)
    {
        if (n < 1)
            throw ConfigError("dg256qam: n must be >= 1");
        const DgConstellation c = solve_dg256qam(v_a);
        Engine eng = make_stream(seed, "symbols");
        SymbolFrame f;
        f.symbols = sample_constellation(c, n, eng);
        f.train_mask.assign(n, 0);
        f.v_a = v_a;
        return f;
    }

    inline SymbolFrame build_frame(const TxConfig &cfg)
    {
        cfg.validate();
        SymbolFrame f = sample_dg256qam(cfg.n_symbols, cfg.v_a, cfg.seed);
        const std::size_t nt = std::min(cfg.n_train(), cfg.n_symbols);
        std::fill(f.train_mask.begin(), f.train_mask.begin() + (std::ptrdiff_t)nt, 1);
        return f;
    }

    // ---------------------------------------------------------------- synthesis

    // Transmitter excess noise: RRC-shaped Gaussian in the quantum band on both
    // polarizations, per-quadrature variance xi at symbol level.
    struct TxExcessNoise
    {
        double xi = 0.0;
        std::uint64_t seed = 0;
    };

    inline double pilot_amplitude(const TxConfig &cfg)
    {
        const double p_q = 2.0 * cfg.v_a / (double)cfg.sps();
        return std::sqrt(p_q * std::pow(10.0, cfg.pilot_to_signal_db / 10.0));
    }

    namespace detail
    {
        // Adds sqrt(sps) * G(f) * DFT(seq) / N around bin k0 of spec (length N)
        inline void add_shaped_band(CVec &spec, CVec seq, long long k0, const TxConfig &cfg)
        {
            const std::size_t n = seq.size();
            const std::size_t N = spec.size();
            fft_inplace(seq);
            const double df = cfg.bin_spacing();
            const double gain = std::sqrt((double)cfg.sps()) / (double)N;
            const long long kmax = (long long)std::ceil(cfg.quantum_halfwidth() / df);
            for (long long r = -kmax; r <= kmax; ++r)
            {
                const double G = rrc_response((double)r * df, cfg.symbol_rate, cfg.rrc_rolloff);
                if (G == 0.0)
                    continue;
                const long long kn = (long long)n;
                const std::size_t ks = (std::size_t)(((r % kn) + kn) % kn);
                const long long kN = (long long)N;
                const std::size_t kk = (std::size_t)((((k0 + r) % kN) + kN) % kN);
                spec[kk] += gain * G * seq[ks];
            }
        }

        inline std::size_t bin_index(double f_rel, const TxConfig &cfg)
        {
            const long long N = (long long)cfg.n_samples();
            const long long k = std::llround(f_rel / cfg.bin_spacing());
            return (std::size_t)(((k % N) + N) % N);
        }
    }

    inline DualPolSeries synthesize_tx(const SymbolFrame &frame, const TxConfig &cfg, const TxExcessNoise &excess = {})
    {
        cfg.validate();
        if (frame.size() != cfg.n_symbols)
            throw ConfigError("synthesize_tx: frame length does not match n_symbols");
        const BandPlan plan = make_band_plan(cfg);
        const std::size_t N = cfg.n_samples();
        const double carrier = plan.f_pt2;
        const long long kq = std::llround((plan.f_q - carrier) / cfg.bin_spacing());
        const double a1 = pilot_amplitude(cfg);
        const double a2 = a1 * std::pow(10.0, cfg.pt2_to_pt1_db / 20.0);

        DualPolSeries out;
        out.sample_rate = cfg.sample_rate;

        CVec sym = frame.symbols;
        Engine eng = make_stream(excess.seed, "tx_excess");
        add_complex_normal(eng, sym, excess.xi);

        out.v.assign(N, cplx(0.0, 0.0));
        detail::add_shaped_band(out.v, std::move(sym), kq, cfg);
        out.v[detail::bin_index(plan.f_pt1 - carrier, cfg)] += a1;
        bfft_inplace(out.v);

        if (excess.xi > 0.0)
        {
            CVec wh(cfg.n_symbols, cplx(0.0, 0.0));
            add_complex_normal(eng, wh, excess.xi);
            out.h.assign(N, cplx(0.0, 0.0));
            detail::add_shaped_band(out.h, std::move(wh), kq, cfg);
            out.h[0] += a2;
            bfft_inplace(out.h);
        }
        else
            out.h.assign(N, cplx(a2, 0.0));
        return out;
    }
}
