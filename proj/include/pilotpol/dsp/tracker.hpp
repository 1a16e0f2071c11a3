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
#include "pilotpol/dsp/bandsplit.hpp"
#include "pilotpol/jones.hpp"

#include <initializer_list>

namespace pilotpol::dsp
{
    // Remove jumps of `period` so that consecutive differences lie in (-period/2, period/2]
    inline RVec unwrap(const RVec &theta, double period = two_pi)
    {
        RVec out(theta.size());
        if (theta.empty())
            return out;
        out[0] = theta[0];
        double offset = 0.0;
        for (std::size_t k = 1; k < theta.size(); ++k)
        {
            const double d = theta[k] - theta[k - 1];
            offset += wrap_period(d, period) - d;
            out[k] = theta[k] + offset;
        }
        return out;
    }

    // Inverse-Jones trajectory at the tracker rate
    struct PolEstimate
    {
        RVec alpha;
        RVec dphi; // -(phi1 + phi2)
        std::size_t window = 1;

        std::size_t size() const { return alpha.size(); }
        JonesMatrix j_inv(std::size_t k) const { return build_inverse_jones(alpha[k], dphi[k]); }
    };

    // Products s = -V conj(H) and |H|^2 - |V|^2 of the PT2 band, smoothed over
    // `window` samples. Sigma = unwrap(arg s) tracks phi1 + phi2 and
    // alpha = atan2(2 Re{s e^{-j Sigma}}, |H|^2 - |V|^2)/2, the double-angle form of
    // atan2(Re{s e^{-j Sigma}}, |H|^2) that stays unbiased by the noise floor.
    // Both angles are unwrapped modulo pi: (alpha, Sigma) and (-alpha, Sigma + pi)
    // give the same inverse up to a diagonal phase, which pilot compensation removes.
    inline PolEstimate estimate_polarization(const DemodBand &pt2, std::size_t window)
    {
        if (window < 1)
            throw ConfigError("estimate_polarization: window must be >= 1");
        const std::size_t n = pt2.size();
        if (n == 0)
            throw ConfigError("estimate_polarization: empty PT2 band");
        const CVec &V = pt2.fields.v, &H = pt2.fields.h;

        CVec s(n);
        RVec d(n), tot(n);
        for (std::size_t k = 0; k < n; ++k)
        {
            s[k] = -V[k] * std::conj(H[k]);
            d[k] = std::norm(H[k]) - std::norm(V[k]);
            tot[k] = std::norm(H[k]) + std::norm(V[k]);
        }
        if (window > 1)
        {
            s = moving_average(s, window);
            d = moving_average(d, window);
            tot = moving_average(tot, window);
        }
        double mean_tot = 0.0;
        for (double t : tot)
            mean_tot += t;
        mean_tot /= (double)n;
        for (double t : tot)
            if (!(t > 1e-12 * mean_tot) || !(mean_tot > 0.0))
                throw DropoutError("estimate_polarization: PT2 power below the noise floor");

        PolEstimate est;
        est.window = window;
        RVec sig(n);
        for (std::size_t k = 0; k < n; ++k)
            sig[k] = std::arg(s[k]);
        sig = unwrap(sig, pi);
        est.alpha.resize(n);
        for (std::size_t k = 0; k < n; ++k)
        {
            const double re = (s[k] * std::polar(1.0, -sig[k])).real();
            est.alpha[k] = 0.5 * std::atan2(2.0 * re, d[k]);
        }
        est.alpha = unwrap(est.alpha, pi);
        est.dphi.resize(n);
        for (std::size_t k = 0; k < n; ++k)
            est.dphi[k] = -sig[k];
        return est;
    }

    // Left-multiply every sample by the inverse Jones matrix (zero-order hold when
    // the band runs at an integer multiple of the estimate rate)
    inline void apply_demux(const PolEstimate &est, std::initializer_list<DemodBand *> bands)
    {
        const std::size_t m = est.size();
        for (DemodBand *b : bands)
            if (m == 0 || b->size() % m != 0 || b->size() == 0)
                throw AlignmentError("apply_demux: band and estimate lengths are not aligned");
        for (std::size_t i = 0; i < m; ++i)
        {
            const JonesMatrix J = est.j_inv(i);
            for (DemodBand *b : bands)
            {
                const std::size_t r = b->size() / m;
                CVec &V = b->fields.v, &H = b->fields.h;
                for (std::size_t k = i * r; k < (i + 1) * r; ++k)
                {
                    const cplx v = V[k], h = H[k];
                    V[k] = J.m_vv * v + J.m_vh * h;
                    H[k] = J.m_hv * v + J.m_hh * h;
                }
            }
        }
    }

    inline void apply_demux(const PolEstimate &est, DemodBand &band)
    {
        apply_demux(est, {&band});
    }

    // q * conj(u), u the window-smoothed PT1 V output at unit modulus
    inline DemodBand compensate_phase(DemodBand q, const DemodBand &pt1, std::size_t window)
    {
        if (q.size() != pt1.size())
            throw AlignmentError("compensate_phase: band lengths differ");
        CVec u = moving_average(pt1.fields.v, std::max<std::size_t>(window, 1));
        double mean = 0.0;
        for (const auto &z : u)
            mean += std::abs(z);
        mean /= (double)std::max<std::size_t>(u.size(), 1);
        for (std::size_t k = 0; k < u.size(); ++k)
        {
            const double a = std::abs(u[k]);
            if (!(a > 1e-9 * mean) || !(mean > 0.0))
                throw DropoutError("compensate_phase: PT1 amplitude below the noise floor");
            const cplx c = std::conj(u[k]) / a;
            q.fields.v[k] *= c;
            q.fields.h[k] *= c;
        }
        return q;
    }

    // Moving average applied to both polarizations of a band
    inline void smooth_band(DemodBand &b, std::size_t window)
    {
        if (window <= 1)
            return;
        b.fields.v = moving_average(b.fields.v, window);
        b.fields.h = moving_average(b.fields.h, window);
    }
}
