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

#include <catch2/catch_amalgamated.hpp>
#include "pilotpol/channel.hpp"
#include "pilotpol/dsp/tracker.hpp"

#include <cmath>

using namespace pilotpol;
using namespace pilotpol::dsp;

namespace
{
    // Band at `rate` carrying J(t) * (xv, xh) per sample
    DemodBand through(const JonesTrajectory &tr, std::size_t n, double rate, const CVec &xv, const CVec &xh)
    {
        DemodBand b;
        b.fields.sample_rate = rate;
        b.fields.v.resize(n);
        b.fields.h.resize(n);
        const double r = tr.sample_rate() / rate;
        for (std::size_t k = 0; k < n; ++k)
        {
            const JonesMatrix J = tr.jones((double)k * r);
            b.fields.v[k] = J.m_vv * xv[k] + J.m_vh * xh[k];
            b.fields.h[k] = J.m_hv * xv[k] + J.m_hh * xh[k];
        }
        return b;
    }

    JonesTrajectory trajectory(ScramblerMode mode, double sr, std::size_t n, double rate, std::uint64_t seed)
    {
        ChannelConfig c;
        c.mode = mode;
        c.sr = sr;
        return make_trajectory(c, n, rate, seed);
    }
}

TEST_CASE("unwrap - round trip of a wrapped ramp")
{
    RVec x(2000), w(2000);
    for (std::size_t k = 0; k < x.size(); ++k)
    {
        x[k] = 0.3 - 0.011 * (double)k;
        w[k] = wrap_angle(x[k]);
    }
    const RVec u = unwrap(w);
    for (std::size_t k = 0; k < x.size(); ++k)
        CHECK(u[k] == Catch::Approx(x[k]).margin(1e-12));

    RVec p(500), q(500);
    for (std::size_t k = 0; k < p.size(); ++k)
    {
        p[k] = 0.05 * (double)k;
        q[k] = wrap_period(p[k], pi);
    }
    const RVec v = unwrap(q, pi);
    for (std::size_t k = 0; k < p.size(); ++k)
        CHECK(v[k] == Catch::Approx(p[k]).margin(1e-12));
}

TEST_CASE("estimate_polarization - inverse Jones oracle under static and moving SOP")
{
    const double rate = 2e9;
    const std::size_t n = 50000;
    const CVec zero(n, cplx(0.0, 0.0));
    const CVec pilot(n, cplx(0.7, 0.0));
    struct Case
    {
        ScramblerMode mode;
        double sr;
    };
    for (const Case c : {Case{ScramblerMode::static_sop, 0.0}, Case{ScramblerMode::walk, 2e6}, Case{ScramblerMode::rate, 2.0 * pi * 30e6}})
        for (std::uint64_t seed : {1u, 2u, 3u, 4u, 5u})
        {
            const JonesTrajectory tr = trajectory(c.mode, c.sr, n, rate, seed);
            const DemodBand pt2 = through(tr, n, rate, zero, pilot);
            const PolEstimate est = estimate_polarization(pt2, 1);
            REQUIRE(est.size() == n);
            double off = 0.0, unit = 0.0;
            for (std::size_t k = 0; k < n; k += 13)
            {
                const JonesMatrix P = est.j_inv(k) * tr.jones((double)k);
                off = std::max({off, std::abs(P.m_vh), std::abs(P.m_hv)});
                unit = std::max(unit, std::abs(std::abs(P.m_vv) - 1.0));
            }
            CHECK(off < 1e-9);
            CHECK(unit < 1e-9);
        }
}

TEST_CASE("estimate_polarization - rate mode alpha slope")
{
    const double rate = 2e9, sr = 2.0 * pi * 10e6;
    const std::size_t n = 40000;
    const JonesTrajectory tr = trajectory(ScramblerMode::rate, sr, n, rate, 8);
    const DemodBand pt2 = through(tr, n, rate, CVec(n, 0.0), CVec(n, cplx(1.0, 0.0)));
    const PolEstimate est = estimate_polarization(pt2, 1);
    // Unwrapped modulo pi, so the estimate follows the linear ramp without jumps
    const double slope = (est.alpha[n - 1] - est.alpha[0]) / ((double)(n - 1) / rate);
    CHECK(std::abs(slope) == Catch::Approx(sr).epsilon(1e-6));
}

TEST_CASE("estimate_polarization - bad input")
{
    DemodBand b;
    CHECK_THROWS_AS(estimate_polarization(b, 1), ConfigError);
    b.fields.v.assign(100, 0.0);
    b.fields.h.assign(100, 0.0);
    CHECK_THROWS_AS(estimate_polarization(b, 0), ConfigError);
    CHECK_THROWS_AS(estimate_polarization(b, 4), DropoutError);
}

TEST_CASE("apply_demux + compensate_phase - recover the transmitted V signal")
{
    const double rate = 2e9;
    const std::size_t n = 20000;
    const JonesTrajectory tr = trajectory(ScramblerMode::walk, 5e6, n, rate, 4);
    Engine eng = make_stream(1, "signal");
    CVec sig(n, cplx(0.0, 0.0));
    add_complex_normal(eng, sig, 1.0);
    DemodBand q = through(tr, n, rate, sig, CVec(n, 0.0));
    DemodBand pt1 = through(tr, n, rate, CVec(n, cplx(0.5, 0.0)), CVec(n, 0.0));
    const DemodBand pt2 = through(tr, n, rate, CVec(n, 0.0), CVec(n, cplx(0.5, 0.0)));

    const PolEstimate est = estimate_polarization(pt2, 1);
    apply_demux(est, {&q, &pt1});
    double ph = 0.0, pv = 0.0;
    for (std::size_t k = 0; k < n; ++k)
    {
        ph += std::norm(q.fields.h[k]);
        pv += std::norm(q.fields.v[k]);
    }
    CHECK(10.0 * std::log10(ph / pv) < -150.0);

    const DemodBand out = compensate_phase(q, pt1, 1);
    double err = 0.0;
    for (std::size_t k = 0; k < n; ++k)
        err = std::max(err, std::abs(out.fields.v[k] - sig[k]));
    CHECK(err < 1e-9);

    DemodBand shorter = q;
    shorter.fields.v.resize(n - 1);
    shorter.fields.h.resize(n - 1);
    CHECK_THROWS_AS(apply_demux(est, shorter), AlignmentError);
    CHECK_THROWS_AS(compensate_phase(shorter, pt1, 1), AlignmentError);
}

TEST_CASE("apply_demux - zero-order hold at an integer rate ratio")
{
    PolEstimate est;
    est.alpha = {0.0, pi / 2};
    est.dphi = {0.0, 0.0};
    DemodBand b;
    b.fields.v = {1.0, 1.0, 1.0, 1.0};
    b.fields.h = {0.0, 0.0, 0.0, 0.0};
    apply_demux(est, b);
    CHECK(std::abs(b.fields.v[1] - 1.0) < 1e-15);
    CHECK(std::abs(b.fields.h[1]) < 1e-15);
    CHECK(std::abs(b.fields.v[2]) < 1e-15);
    CHECK(std::abs(std::abs(b.fields.h[3]) - 1.0) < 1e-15);
}
