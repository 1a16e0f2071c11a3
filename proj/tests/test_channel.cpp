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

#include <cmath>

using namespace pilotpol;

namespace
{
    DualPolSeries random_field(std::size_t n, std::uint64_t seed)
    {
        DualPolSeries x;
        x.sample_rate = 10e9;
        x.v.assign(n, cplx(0.0, 0.0));
        x.h.assign(n, cplx(0.0, 0.0));
        Engine eng = make_stream(seed, "test_field");
        add_complex_normal(eng, x.v, 0.5);
        add_complex_normal(eng, x.h, 0.5);
        return x;
    }

    ChannelConfig quiet()
    {
        ChannelConfig c;
        c.mode = ScramblerMode::static_sop;
        c.random_start = false;
        c.loss_db = 0.0;
        c.linewidth_tx = 0.0;
        return c;
    }
}

TEST_CASE("apply_channel - identity is bit-exact")
{
    const DualPolSeries x = random_field(4096, 1);
    const ChannelConfig c = quiet();
    const JonesTrajectory tr = make_trajectory(c, x.size(), x.sample_rate, 3);
    const DualPolSeries y = apply_channel(x, c, tr, 3);
    CHECK(y.v == x.v);
    CHECK(y.h == x.h);
}

TEST_CASE("apply_channel - loss scales power by the transmittance")
{
    const DualPolSeries x = random_field(8192, 2);
    ChannelConfig c = quiet();
    c.loss_db = 4.971;
    const JonesTrajectory tr = make_trajectory(c, x.size(), x.sample_rate, 3);
    const DualPolSeries y = apply_channel(x, c, tr, 3);
    const double r = (mean_power(y.v) + mean_power(y.h)) / (mean_power(x.v) + mean_power(x.h));
    CHECK(r == Catch::Approx(std::pow(10.0, -0.4971)).epsilon(1e-12));
}

TEST_CASE("apply_channel - matches per-sample Jones product")
{
    const DualPolSeries x = random_field(20000, 4);
    ChannelConfig c = quiet();
    c.mode = ScramblerMode::walk;
    c.random_start = true;
    c.sr = 2e7; // fast enough to move well within the record
    c.loss_db = 3.0;
    const JonesTrajectory tr = make_trajectory(c, x.size(), x.sample_rate, 5);
    const DualPolSeries y = apply_channel(x, c, tr, 5);
    const double g = std::sqrt(c.transmittance());
    double err = 0.0;
    for (std::size_t k = 0; k < x.size(); k += 7)
    {
        const JonesMatrix J = jones_at((double)k / x.sample_rate, c, tr);
        const cplx v = g * (J.m_vv * x.v[k] + J.m_vh * x.h[k]);
        const cplx h = g * (J.m_hv * x.v[k] + J.m_hh * x.h[k]);
        err = std::max({err, std::abs(v - y.v[k]), std::abs(h - y.h[k])});
    }
    CHECK(err < 1e-9);
}

TEST_CASE("jones_matrix - unitary and inverse model")
{
    Engine eng = make_stream(9, "angles");
    for (int i = 0; i < 1000; ++i)
    {
        const double a = uniform(eng, -pi, pi), p1 = uniform(eng, -pi, pi), p2 = uniform(eng, -pi, pi);
        const JonesMatrix J = jones_matrix(a, p1, p2);
        CHECK(J.unitarity_error() < 1e-12);
        CHECK(std::abs(J.det() - 1.0) < 1e-12);
        const JonesMatrix P = build_inverse_jones(a, -(p1 + p2)) * J;
        const double phi = 0.5 * (p1 - p2);
        const JonesMatrix D{std::polar(1.0, phi), 0.0, 0.0, std::polar(1.0, -phi)};
        CHECK(P.max_abs_diff(D) < 1e-12);
    }
}

TEST_CASE("make_trajectory - walk path length follows sr")
{
    ChannelConfig c = quiet();
    c.mode = ScramblerMode::walk;
    c.random_start = true;
    const std::size_t n = 1000000;
    for (double sr : {6.28e3, 1.2566e4, 3.0e6})
    {
        c.sr = sr;
        const JonesTrajectory tr = make_trajectory(c, n, 10e9, 11);
        double len = 0.0;
        for (std::size_t b = 0; b + 1 < tr.n_knots(); ++b)
        {
            double d2 = 0.0;
            for (int i = 0; i < 3; ++i)
            {
                const double d = tr.knot(i, b + 1) - tr.knot(i, b);
                d2 += d * d;
            }
            len += std::sqrt(d2);
        }
        const double t = (double)((tr.n_knots() - 1) * tr.block()) / 10e9;
        CHECK(len == Catch::Approx(sr * t).epsilon(1e-9));
    }
}

TEST_CASE("make_trajectory - start shared across rates, path keyed by rate")
{
    ChannelConfig c = quiet();
    c.mode = ScramblerMode::walk;
    c.random_start = true;
    c.sr = 1e3;
    const JonesTrajectory a = make_trajectory(c, 10000, 10e9, 21);
    c.sr = 2e3;
    const JonesTrajectory b = make_trajectory(c, 10000, 10e9, 21);
    for (int i = 0; i < 3; ++i)
        CHECK(a.knot(i, 0) == b.knot(i, 0));
    CHECK(a.knot(0, 100) != b.knot(0, 100));
}

TEST_CASE("make_trajectory - rate mode rotates alpha linearly")
{
    ChannelConfig c = quiet();
    c.mode = ScramblerMode::rate;
    c.alpha0 = 0.4;
    c.sr = 2.0 * pi * 1e6;
    const JonesTrajectory tr = make_trajectory(c, 100000, 10e9, 1);
    for (double t : {0.0, 1e-6, 3.3e-6, 9.9e-6})
    {
        const auto a = tr.angles(t * 10e9);
        CHECK(a[0] == Catch::Approx(0.4 - c.sr * t).margin(1e-12));
        CHECK(a[1] == 0.0);
        CHECK(a[2] == 0.0);
    }
}

TEST_CASE("apply_channel - laser phase increments have variance 2*pi*linewidth*tau")
{
    const std::size_t n = 2000000;
    DualPolSeries x;
    x.sample_rate = 10e9;
    x.v.assign(n, cplx(1.0, 0.0));
    x.h.assign(n, cplx(0.0, 0.0));
    ChannelConfig c = quiet();
    c.linewidth_tx = 1e6;
    const JonesTrajectory tr = make_trajectory(c, n, x.sample_rate, 1);
    const DualPolSeries y = apply_channel(x, c, tr, 17);
    const std::size_t lag = 160;
    double s = 0.0;
    std::size_t m = 0;
    for (std::size_t k = 0; k + lag < n; k += lag)
    {
        const double d = std::arg(y.v[k + lag] * std::conj(y.v[k]));
        s += d * d;
        ++m;
    }
    const double want = two_pi * c.linewidth_tx * (double)lag / x.sample_rate;
    CHECK(std::abs(s / (double)m / want - 1.0) < 0.05);
    for (std::size_t k = 0; k < n; k += 997)
        CHECK(std::abs(std::abs(y.v[k]) - 1.0) < 1e-9);
}

TEST_CASE("ChannelConfig - validation")
{
    ChannelConfig c;
    CHECK_NOTHROW(c.validate());
    c.eta = 0.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = ChannelConfig{};
    c.sr = -1.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = ChannelConfig{};
    CHECK_THROWS_AS(apply_channel(random_field(10, 1), c, make_trajectory(c, 11, 10e9, 1), 1), AlignmentError);
}
