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
#include "pilotpol/jones.hpp"
#include "pilotpol/random.hpp"

#include <array>
#include <cstdint>
#include <string>

namespace pilotpol
{
    enum class ScramblerMode
    {
        static_sop,
        rate,
        walk
    };

    inline std::string to_string(ScramblerMode m)
    {
        switch (m)
        {
        case ScramblerMode::static_sop:
            return "static";
        case ScramblerMode::rate:
            return "rate";
        case ScramblerMode::walk:
            return "walk";
        }
        return "?";
    }

    inline ScramblerMode parse_mode(const std::string &s)
    {
        if (s == "static")
            return ScramblerMode::static_sop;
        if (s == "rate")
            return ScramblerMode::rate;
        if (s == "walk")
            return ScramblerMode::walk;
        throw ConfigError("channel: unknown scrambler mode '" + s + "'");
    }

    // Fiber, scrambler and detector-side physical parameters.
    // sr is a Jones-space rate (rad/s); the matching Poincare-sphere rate is 2*sr.
    struct ChannelConfig
    {
        ScramblerMode mode = ScramblerMode::walk;
        double alpha0 = 0.0, phi1_0 = 0.0, phi2_0 = 0.0;
        bool random_start = true; // draw (alpha0, phi1_0, phi2_0) per trial
        double sr = 0.0;
        double loss_db = 4.971;
        double eta = 0.56;
        double v_ele = 0.15;
        double xi_ch = 0.030;
        double linewidth_tx = 100.0;
        double walk_corr_angle = 1.0; // path length (rad) over which the walk direction decorrelates
        std::size_t walk_block = 16;  // samples per constant-velocity segment
        std::uint64_t seed = 1;

        double transmittance() const { return std::pow(10.0, -loss_db / 10.0); }

        void validate() const
        {
            if (!(eta > 0.0 && eta <= 1.0))
                throw ConfigError("channel: eta must be in (0, 1]");
            if (!(loss_db >= 0.0))
                throw ConfigError("channel: loss_db must be >= 0");
            if (!(xi_ch >= 0.0))
                throw ConfigError("channel: xi_ch must be >= 0");
            if (!(sr >= 0.0))
                throw ConfigError("channel: sr must be >= 0");
            if (!(v_ele >= 0.0) || !(linewidth_tx >= 0.0))
                throw ConfigError("channel: v_ele and linewidth_tx must be >= 0");
            if (walk_block < 1 || !(walk_corr_angle > 0.0))
                throw ConfigError("channel: walk_block >= 1 and walk_corr_angle > 0 required");
        }
    };

    // Piecewise-linear (alpha, phi1, phi2) trajectory on a block grid of the
    // field sample clock. Angles are exact at every sample.
    class JonesTrajectory
    {
    public:
        JonesTrajectory() = default;

        JonesTrajectory(std::size_t n_samples, double sample_rate, std::size_t block)
            : n_(n_samples), fs_(sample_rate), block_(block)
        {
            const std::size_t nb = (n_samples + block - 1) / block + 1;
            for (auto &k : knots_)
                k.assign(nb, 0.0);
        }

        std::size_t n_samples() const { return n_; }
        double sample_rate() const { return fs_; }
        std::size_t block() const { return block_; }
        std::size_t n_knots() const { return knots_[0].size(); }

        double &knot(int which, std::size_t b) { return knots_[which][b]; }
        double knot(int which, std::size_t b) const { return knots_[which][b]; }

        // (alpha, phi1, phi2) at fractional sample position pos
        std::array<double, 3> angles(double pos) const
        {
            if (pos < 0.0)
                pos = 0.0;
            std::size_t b = (std::size_t)(pos / (double)block_);
            if (b + 1 >= n_knots())
                b = n_knots() - 2;
            const double f = (pos - (double)(b * block_)) / (double)block_;
            std::array<double, 3> a{};
            for (int i = 0; i < 3; ++i)
                a[i] = knots_[i][b] + f * (knots_[i][b + 1] - knots_[i][b]);
            return a;
        }

        JonesMatrix jones(double pos) const
        {
            auto a = angles(pos);
            return jones_matrix(a[0], a[1], a[2]);
        }

    private:
        std::size_t n_ = 0;
        double fs_ = 1.0;
        std::size_t block_ = 1;
        std::array<RVec, 3> knots_;
    };

    // Trajectory for one trial. The start state is keyed by `seed` alone; the walk
    // path is additionally keyed by sr so that trials share their start across rates.
    inline JonesTrajectory make_trajectory(const ChannelConfig &cfg, std::size_t n_samples, double sample_rate, std::uint64_t seed)
    {
        cfg.validate();
        const std::size_t B = cfg.walk_block;
        JonesTrajectory tr(n_samples, sample_rate, B);

        double a0 = cfg.alpha0, p10 = cfg.phi1_0, p20 = cfg.phi2_0;
        if (cfg.random_start)
        {
            Engine eng = make_stream(seed, "channel_start");
            a0 = uniform(eng, -0.5 * pi, 0.5 * pi);
            p10 = uniform(eng, -pi, pi);
            p20 = uniform(eng, -pi, pi);
        }
        const std::size_t nb = tr.n_knots();
        const double step = cfg.sr / sample_rate * (double)B; // Jones-space path per block

        switch (cfg.mode)
        {
        case ScramblerMode::static_sop:
            for (std::size_t b = 0; b < nb; ++b)
            {
                tr.knot(0, b) = a0;
                tr.knot(1, b) = p10;
                tr.knot(2, b) = p20;
            }
            break;
        case ScramblerMode::rate:
            for (std::size_t b = 0; b < nb; ++b)
            {
                tr.knot(0, b) = a0 - step * (double)b;
                tr.knot(1, b) = p10;
                tr.knot(2, b) = p20;
            }
            break;
        case ScramblerMode::walk:
        {
            // Constant speed, direction diffusing on the unit sphere
            Engine eng = make_stream(hash_seed({seed, hash_double(cfg.sr)}), "walk");
            boost::random::normal_distribution<double> nd(0.0, 1.0);
            std::array<double, 3> u{nd(eng), nd(eng), nd(eng)};
            auto normalize = [](std::array<double, 3> &v)
            {
                double r = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
                if (r == 0.0)
                    v = {1.0, 0.0, 0.0};
                else
                    for (auto &x : v)
                        x /= r;
            };
            normalize(u);
            const double sigma_u = std::sqrt(step / (2.0 * cfg.walk_corr_angle));
            double a = a0, p1 = p10, p2 = p20;
            for (std::size_t b = 0; b < nb; ++b)
            {
                tr.knot(0, b) = a;
                tr.knot(1, b) = p1;
                tr.knot(2, b) = p2;
                a += step * u[0];
                p1 += step * u[1];
                p2 += step * u[2];
                for (auto &x : u)
                    x += sigma_u * nd(eng);
                normalize(u);
            }
            break;
        }
        }
        return tr;
    }

    // Channel matrix at time t (seconds) along a trajectory
    inline JonesMatrix jones_at(double t, const ChannelConfig &cfg, const JonesTrajectory &tr)
    {
        if (t < 0.0)
            throw ConfigError("jones_at: t must be >= 0");
        (void)cfg;
        return tr.jones(t * tr.sample_rate());
    }

    // y = sqrt(T) * J(t) * x * exp(j*theta_tx), in place. Excess noise is added at
    // the transmitter (see TxExcessNoise).
    inline DualPolSeries apply_channel(DualPolSeries tx, const ChannelConfig &cfg, const JonesTrajectory &tr, std::uint64_t seed)
    {
        cfg.validate();
        tx.check();
        const std::size_t N = tx.size();
        if (N == 0)
            throw ConfigError("apply_channel: empty input");
        if (tr.n_samples() != N)
            throw AlignmentError("apply_channel: trajectory length does not match input");
        const double gain = std::sqrt(cfg.transmittance());
        CVec &v = tx.v;
        CVec &h = tx.h;

        Engine eng = make_stream(seed, "tx_phase");
        const std::size_t B = tr.block();
        const RVec th = wiener_knots(eng, N, B, std::sqrt(two_pi * cfg.linewidth_tx / tx.sample_rate));
        if (cfg.mode == ScramblerMode::static_sop && gain == 1.0 && cfg.linewidth_tx <= 0.0 &&
            tr.jones(0.0).max_abs_diff(JonesMatrix::identity()) == 0.0)
            return tx;

        // Per block: exact phasors at the knot, constant-step recurrence inside
        for (std::size_t b = 0; b * B < N; ++b)
        {
            const double a = tr.knot(0, b), p1 = tr.knot(1, b), p2 = tr.knot(2, b);
            const double inv = 1.0 / (double)B;
            cplx ra = std::polar(1.0, a), e1 = std::polar(1.0, p1), e2 = std::polar(1.0, p2);
            cplx ep = std::polar(gain, th[b]);
            const cplx sa = std::polar(1.0, (tr.knot(0, b + 1) - a) * inv);
            const cplx s1 = std::polar(1.0, (tr.knot(1, b + 1) - p1) * inv);
            const cplx s2 = std::polar(1.0, (tr.knot(2, b + 1) - p2) * inv);
            const cplx sp = std::polar(1.0, (th[b + 1] - th[b]) * inv);
            const std::size_t end = std::min(N, (b + 1) * B);
            for (std::size_t k = b * B; k < end; ++k)
            {
                const double c = ra.real(), s = ra.imag();
                const cplx xv = v[k], xh = h[k];
                v[k] = ep * (c * e1 * xv - s * e2 * xh);
                h[k] = ep * (s * std::conj(e2) * xv + c * std::conj(e1) * xh);
                ra *= sa;
                e1 *= s1;
                e2 *= s2;
                ep *= sp;
            }
        }
        return tx;
    }
}
