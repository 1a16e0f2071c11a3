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

#include <boost/random/mersenne_twister.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_real_distribution.hpp>

#include <bit>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace pilotpol
{
    // Same sequence as std::mt19937_64, bulk state refresh is about twice as fast
    using Engine = boost::random::mt19937_64;

    inline std::uint64_t splitmix64(std::uint64_t x)
    {
        x += 0x9E3779B97F4A7C15ULL;
        x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
        x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
        return x ^ (x >> 31);
    }

    // Order-sensitive stable hash of a seed tuple
    inline std::uint64_t hash_seed(std::initializer_list<std::uint64_t> parts)
    {
        std::uint64_t h = 0x6A09E667F3BCC908ULL;
        for (auto p : parts)
            h = splitmix64(h ^ splitmix64(p));
        return h;
    }

    inline std::uint64_t hash_double(double x)
    {
        return std::bit_cast<std::uint64_t>(x == 0.0 ? 0.0 : x);
    }

    inline std::uint64_t hash_tag(std::string_view tag)
    {
        std::uint64_t h = 0xCBF29CE484222325ULL; // FNV-1a
        for (unsigned char c : tag)
            h = (h ^ c) * 0x100000001B3ULL;
        return h;
    }

    // Independent engine for a named component of one trial
    inline Engine make_stream(std::uint64_t seed, std::string_view component)
    {
        std::seed_seq seq{(std::uint32_t)seed, (std::uint32_t)(seed >> 32),
                          (std::uint32_t)hash_tag(component), (std::uint32_t)(hash_tag(component) >> 32)};
        return Engine(seq);
    }

    // Fill out[0..n) with N(0, sigma^2)
    inline void fill_normal(Engine &eng, double *out, std::size_t n, double sigma)
    {
        boost::random::normal_distribution<double> nd(0.0, 1.0);
        for (std::size_t i = 0; i < n; ++i)
            out[i] = sigma * nd(eng);
    }

    // Circular complex Gaussian, variance var_per_quad on each of Re and Im
    inline void add_complex_normal(Engine &eng, CVec &x, double var_per_quad)
    {
        if (var_per_quad <= 0.0)
            return;
        boost::random::normal_distribution<double> nd(0.0, std::sqrt(var_per_quad));
        for (auto &z : x)
        {
            double re = nd(eng);
            double im = nd(eng);
            z += cplx(re, im);
        }
    }

    inline double uniform(Engine &eng, double lo, double hi)
    {
        return boost::random::uniform_real_distribution<double>(lo, hi)(eng);
    }

    // Wiener phase with per-sample increment std `step_std`, sampled every `block`
    // samples: knot b holds theta(b * block), theta(0) = 0. Consumers interpolate
    // linearly between knots, which low-passes the process far above any tracked band.
    inline RVec wiener_knots(Engine &eng, std::size_t n_samples, std::size_t block, double step_std)
    {
        if (block == 0)
            throw ConfigError("wiener_knots: block must be >= 1");
        const std::size_t nb = (n_samples + block - 1) / block + 1;
        RVec th(nb, 0.0);
        if (step_std <= 0.0)
            return th;
        boost::random::normal_distribution<double> nd(0.0, step_std * std::sqrt((double)block));
        for (std::size_t b = 1; b < nb; ++b)
            th[b] = th[b - 1] + nd(eng);
        return th;
    }
}
