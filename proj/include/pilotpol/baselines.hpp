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
#include "pilotpol/dsp/equalizer.hpp"
#include "pilotpol/jones.hpp"

namespace pilotpol::baselines
{
    // 1-tap 2x2 butterfly, rows (w_vv, w_vh) and (w_hv, w_hh)
    struct ButterflyWeights
    {
        cplx w_vv{1.0, 0.0}, w_vh{0.0, 0.0}, w_hv{0.0, 0.0}, w_hh{1.0, 0.0};

        double norm() const
        {
            return std::sqrt(std::norm(w_vv) + std::norm(w_vh) + std::norm(w_hv) + std::norm(w_hh));
        }
    };

    struct CmaResult
    {
        ButterflyWeights final_weights;
        std::vector<ButterflyWeights> trace; // every `trace_stride` samples
        std::size_t trace_stride = 1024;
        bool diverged = false;
    };

    // CMA on the PT2 band. PT2 is a single CW tone, so its modulus is constant for
    // any weights; the H row is instead driven toward the running total input power
    // R^2 = <|x_V|^2 + |x_H|^2>, i.e. all pilot power onto the H output at unit row
    // norm, and the V row is kept orthogonal, (conj(w_hh), -conj(w_hv)). The same
    // per-sample weights are applied to every band in `targets`. The H row starts at
    // the conjugate of the mean pilot Jones vector over the first `init_block` samples,
    // which avoids the stationary point of an identity start when the pilot arrives
    // mostly on V.
    inline CmaResult cma_track(const dsp::DemodBand &pt2, const std::vector<dsp::DemodBand *> &targets, double mu = 1e-5,
                               double ema = 1e-3, std::size_t init_block = 1024)
    {
        const std::size_t n = pt2.size();
        if (n == 0)
            throw ConfigError("cma_track: empty PT2 band");
        for (auto *t : targets)
            if (t->size() != n)
                throw AlignmentError("cma_track: band lengths differ");
        const double p = mean_power(pt2.fields.v) + mean_power(pt2.fields.h);
        if (!(p > 0.0))
            throw DropoutError("cma_track: PT2 band is empty");
        const double inv = 1.0 / std::sqrt(p);

        CmaResult res;
        cplx c(0.0, 0.0), d(1.0, 0.0);
        {
            cplx mv(0.0, 0.0), mh(0.0, 0.0);
            for (std::size_t k = 0; k < std::min(n, init_block); ++k)
            {
                mv += pt2.fields.v[k];
                mh += pt2.fields.h[k];
            }
            const double r = std::sqrt(std::norm(mv) + std::norm(mh));
            if (r > 0.0)
            {
                c = std::conj(mv) / r;
                d = std::conj(mh) / r;
            }
        }
        double r2 = 1.0;
        for (std::size_t k = 0; k < n; ++k)
        {
            const cplx xv = pt2.fields.v[k] * inv, xh = pt2.fields.h[k] * inv;
            const cplx yh = c * xv + d * xh;
            for (auto *t : targets)
            {
                const cplx qv = t->fields.v[k], qh = t->fields.h[k];
                t->fields.v[k] = std::conj(d) * qv - std::conj(c) * qh;
                t->fields.h[k] = c * qv + d * qh;
            }
            r2 += ema * (std::norm(xv) + std::norm(xh) - r2);
            const cplx e = yh * (r2 - std::norm(yh));
            c += mu * e * std::conj(xv);
            d += mu * e * std::conj(xh);
            if (k % res.trace_stride == 0)
            {
                const ButterflyWeights w{std::conj(d), -std::conj(c), c, d};
                res.trace.push_back(w);
                if (!(w.norm() <= 1e3))
                {
                    res.diverged = true;
                    break;
                }
            }
        }
        res.final_weights = {std::conj(d), -std::conj(c), c, d};
        if (!(res.final_weights.norm() <= 1e3))
            res.diverged = true;
        return res;
    }

    // Real-valued 4-input / 2-output FIR ([I_V, Q_V, I_H, Q_H] -> [I, Q]) trained by LMS
    inline dsp::LmsResult fir_mimo_track(const CVec &rx_v, const CVec &rx_h, const SymbolFrame &frame,
                                         dsp::LmsOptions opt = {})
    {
        opt.throw_on_divergence = false;
        return dsp::lms_mimo({&rx_v, &rx_h}, frame, opt);
    }
}
