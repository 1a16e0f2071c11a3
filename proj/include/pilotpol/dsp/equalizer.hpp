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
#include "pilotpol/txgen.hpp"

#include <optional>

namespace pilotpol::dsp
{
    struct MfResult
    {
        CVec symbols;
        double timing = 0.0; // applied advance, in symbols
    };

    // RRC matched filter at the band rate, timing from the closed form of the
    // symbol-energy metric, decimation to one sample per symbol.
    // For band-limited input sum_m |y(m + tau)|^2 = A + 2 Re{C exp(j 2 pi tau)} exactly,
    // so the optimum is tau = -arg(C)/(2 pi).
    inline MfResult matched_filter_downsample(const CVec &x, double rate, const TxConfig &cfg,
                                              std::optional<double> fixed_timing = std::nullopt)
    {
        const std::size_t M = x.size();
        const std::size_t n = cfg.n_symbols;
        if (M == 0 || M % n != 0 || M / n < 2)
            throw ConfigError("matched_filter_downsample: input must hold an integer number (>= 2) of samples per symbol");
        if (std::abs(rate / cfg.symbol_rate - (double)(M / n)) > 1e-9)
            throw ConfigError("matched_filter_downsample: rate does not match the sample count");
        CVec Z = fft(x);
        const double c = std::sqrt((double)cfg.sps());
        double A = 0.0;
        for (std::size_t k = 0; k < M; ++k)
        {
            const double f = bin_frequency(k, M) * rate;
            Z[k] *= c * rrc_response(f, cfg.symbol_rate, cfg.rrc_rolloff);
            A += std::norm(Z[k]);
        }
        MfResult res;
        if (A == 0.0)
        {
            res.symbols.assign(n, cplx(0.0, 0.0));
            return res;
        }

        double tau = 0.0;
        if (fixed_timing)
            tau = *fixed_timing;
        else
        {
            // Alias pairs f and f - symbol_rate
            cplx C(0.0, 0.0);
            for (std::size_t k = 0; k < M; ++k)
            {
                const double f = bin_frequency(k, M) * rate;
                if (f < 0.0)
                    continue;
                const std::size_t l = (k + M - n) % M;
                if (std::abs(bin_frequency(l, M) * rate - (f - cfg.symbol_rate)) > 1e-6 * cfg.symbol_rate)
                    continue;
                C += Z[k] * std::conj(Z[l]);
            }
            if (std::abs(C) < 1e-9 * A)
                throw SyncError("matched_filter_downsample: flat timing metric");
            tau = -std::arg(C) / two_pi;
        }
        res.timing = tau;

        // Fractional advance then fold to n bins (decimation)
        CVec Y(n, cplx(0.0, 0.0));
        for (std::size_t k = 0; k < M; ++k)
        {
            const double f_sym = bin_frequency(k, M) * rate / cfg.symbol_rate;
            Y[k % n] += Z[k] * std::polar(1.0, two_pi * f_sym * tau);
        }
        bfft_inplace(Y);
        const double s = 1.0 / (double)M; // n/M decimation gain times the 1/n of the inverse
        for (auto &y : Y)
            y *= s;
        res.symbols = std::move(Y);
        return res;
    }

    // Real-valued 2-output MIMO FIR over `n_in` complex inputs (2*n_in real streams),
    // `taps` per sub-filter, centred, circular at the frame edges.
    struct RealMimoFir
    {
        std::size_t taps = 11;
        std::size_t n_in = 1;
        RVec w_i, w_q; // [stream][tap], stream = 2*input + {0: I, 1: Q}

        RealMimoFir(std::size_t taps_, std::size_t n_in_) : taps(taps_), n_in(n_in_)
        {
            w_i.assign(2 * n_in * taps, 0.0);
            w_q.assign(2 * n_in * taps, 0.0);
            w_i[0 * taps + taps / 2] = 1.0;
            w_q[1 * taps + taps / 2] = 1.0;
        }

        double norm() const
        {
            double s = 0.0;
            for (double w : w_i)
                s += w * w;
            for (double w : w_q)
                s += w * w;
            return std::sqrt(s);
        }

        // Gather the regressor for symbol m into r (size 2*n_in*taps)
        void regressor(const std::vector<const CVec *> &in, std::size_t m, RVec &r) const
        {
            const std::size_t n = in[0]->size();
            const std::size_t c = taps / 2;
            for (std::size_t p = 0; p < n_in; ++p)
                for (std::size_t t = 0; t < taps; ++t)
                {
                    const std::size_t idx = (m + n + t - c) % n;
                    const cplx z = (*in[p])[idx];
                    r[(2 * p) * taps + t] = z.real();
                    r[(2 * p + 1) * taps + t] = z.imag();
                }
        }

        cplx output(const RVec &r) const
        {
            double yi = 0.0, yq = 0.0;
            for (std::size_t j = 0; j < r.size(); ++j)
            {
                yi += w_i[j] * r[j];
                yq += w_q[j] * r[j];
            }
            return {yi, yq};
        }
    };

    struct LmsResult
    {
        CVec out;
        RVec w_i, w_q;
        double mse_first = 0.0; // training MSE over the first 10% of training
        double mse_last = 0.0;  // and over the final 10%
        bool diverged = false;
    };

    struct LmsOptions
    {
        std::size_t taps = 11;
        double mu = 1e-5;
        // Rescale each output row to unit noise gain after training (white input noise)
        bool normalize_noise = true;
        bool throw_on_divergence = true;
        // Step applies to unit-power inputs: mu is divided by the mean input power
        bool power_normalize = true;
    };

    // Data-aided LMS on the training block, frozen weights applied to every symbol
    inline LmsResult lms_mimo(const std::vector<const CVec *> &in, const SymbolFrame &frame, const LmsOptions &opt)
    {
        if (opt.taps % 2 == 0 || opt.taps == 0)
            throw ConfigError("lms: taps must be odd");
        const std::size_t n = frame.size();
        for (const CVec *p : in)
            if (p->size() != n)
                throw AlignmentError("lms: input and frame lengths differ");
        RealMimoFir fir(opt.taps, in.size());
        RVec r(2 * in.size() * opt.taps);
        const std::size_t nt = frame.n_train();
        const std::size_t tenth = std::max<std::size_t>(nt / 10, 1);

        double mu = opt.mu;
        if (opt.power_normalize)
        {
            double p = 0.0;
            for (const CVec *x : in)
                p += mean_power(*x);
            p /= (double)in.size();
            if (p > 0.0)
                mu /= p;
        }

        LmsResult res;
        double acc_first = 0.0, acc_last = 0.0;
        for (std::size_t m = 0; m < nt; ++m)
        {
            fir.regressor(in, m, r);
            const cplx y = fir.output(r);
            const cplx e = frame.symbols[m] - y;
            if (m < tenth)
                acc_first += std::norm(e);
            if (m + tenth >= nt)
                acc_last += std::norm(e);
            const double ei = mu * e.real(), eq = mu * e.imag();
            for (std::size_t j = 0; j < r.size(); ++j)
            {
                fir.w_i[j] += ei * r[j];
                fir.w_q[j] += eq * r[j];
            }
            if ((m & 1023) == 0 && !(fir.norm() <= 1e3))
            {
                res.diverged = true;
                break;
            }
        }
        if (!res.diverged && !(fir.norm() <= 1e3))
            res.diverged = true;
        if (res.diverged)
        {
            if (opt.throw_on_divergence)
                throw DivergenceError("lms: equalizer diverged (weight norm > 1e3)");
            res.out.assign(n, cplx(0.0, 0.0));
            return res;
        }
        res.mse_first = acc_first / (double)tenth;
        res.mse_last = acc_last / (double)tenth;

        if (opt.normalize_noise)
        {
            double ni = 0.0, nq = 0.0;
            for (std::size_t j = 0; j < r.size(); ++j)
            {
                ni += fir.w_i[j] * fir.w_i[j];
                nq += fir.w_q[j] * fir.w_q[j];
            }
            ni = std::sqrt(ni);
            nq = std::sqrt(nq);
            if (ni > 0.0 && nq > 0.0)
                for (std::size_t j = 0; j < r.size(); ++j)
                {
                    fir.w_i[j] /= ni;
                    fir.w_q[j] /= nq;
                }
        }

        res.out.resize(n);
        for (std::size_t m = 0; m < n; ++m)
        {
            fir.regressor(in, m, r);
            res.out[m] = fir.output(r);
        }
        res.w_i = fir.w_i;
        res.w_q = fir.w_q;
        return res;
    }

    // 2x2 real MIMO FIR on the I/Q of one stream
    inline LmsResult lms_equalize(const CVec &rx_syms, const SymbolFrame &frame, const LmsOptions &opt = {})
    {
        return lms_mimo({&rx_syms}, frame, opt);
    }
}
