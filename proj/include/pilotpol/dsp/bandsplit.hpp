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
#include "pilotpol/frontend.hpp"
#include "pilotpol/txgen.hpp"

#include <algorithm>

namespace pilotpol::dsp
{
    // Analytic spectrum of one band on both polarizations: bins k_lo .. k_lo + size - 1
    // of the full n_fft-point frame transform, positive frequencies doubled.
    struct BandSpectrum
    {
        CVec v, h;
        std::size_t k_lo = 0;
        std::size_t n_fft = 0;
        double sample_rate = 0.0;
        Interval band;

        std::size_t size() const { return v.size(); }
        double bin_spacing() const { return sample_rate / (double)n_fft; }
        double frequency(std::size_t i) const { return (double)(k_lo + i) * bin_spacing(); }
        double energy() const
        {
            double e = 0.0;
            for (std::size_t i = 0; i < v.size(); ++i)
                e += std::norm(v[i]) + std::norm(h[i]);
            return e;
        }
    };

    struct BandSet
    {
        BandSpectrum q, pt1, pt2;
    };

    // Complex baseband band at a reduced rate
    struct DemodBand
    {
        DualPolSeries fields;
        double f_hat = 0.0;
        cplx gain{1.0, 0.0};

        std::size_t size() const { return fields.size(); }
    };

    // Frequency-domain ideal bandpass of the three bands. The pair is consumed.
    // With `bpd` enabled each bin is divided by the known detector response.
    inline BandSet bandsplit(RealSeriesPair pair, const BandPlan &plan, const BpdFilter &bpd = {})
    {
        if (pair.i_v.size() != pair.i_h.size())
            throw AlignmentError("bandsplit: polarization lengths differ");
        plan.validate(pair.sample_rate);
        const std::size_t N = pair.size();
        const double fs = pair.sample_rate;

        // Both real signals through one complex transform
        CVec z(N);
        for (std::size_t k = 0; k < N; ++k)
            z[k] = cplx(pair.i_v[k], pair.i_h[k]);
        RVec().swap(pair.i_v);
        RVec().swap(pair.i_h);
        fft_inplace(z);

        auto extract = [&](const Interval &iv)
        {
            BandSpectrum b;
            b.n_fft = N;
            b.sample_rate = fs;
            b.band = iv;
            const double df = fs / (double)N;
            const std::size_t lo = (std::size_t)std::ceil(iv.lo / df - 1e-9);
            const std::size_t hi = std::min((std::size_t)std::floor(iv.hi / df + 1e-9), (N - 1) / 2);
            b.k_lo = lo;
            const std::size_t m = hi >= lo ? hi - lo + 1 : 0;
            b.v.resize(m);
            b.h.resize(m);
            for (std::size_t i = 0; i < m; ++i)
            {
                const std::size_t k = lo + i;
                const cplx a = z[k], c = std::conj(z[(N - k) % N]);
                // analytic doubling folded in: 2 * (a + c)/2 and 2 * (a - c)/(2j)
                cplx xv = a + c, xh = (a - c) * cplx(0.0, -1.0);
                if (bpd.enabled)
                {
                    const cplx r = bpd.response((double)k / (double)N);
                    xv /= r;
                    xh /= r;
                }
                b.v[i] = xv;
                b.h[i] = xh;
            }
            return b;
        };
        BandSet s;
        s.q = extract(plan.q);
        s.pt1 = extract(plan.pt1);
        s.pt2 = extract(plan.pt2);
        return s;
    }

    struct ToneEstimate
    {
        double freq = 0.0;
        double peak_over_median_db = 0.0;
        bool ambiguous = false;
    };

    // Peak of |V|^2 + |H|^2 over bins with Jacobsen's 3-point interpolation.
    // spec_v/spec_h are consecutive DFT bins starting at frequency f0, spacing df.
    inline ToneEstimate peak_frequency(const CVec &spec_v, const CVec &spec_h, double f0, double df, bool circular = false)
    {
        const std::size_t m = spec_v.size();
        if (m < 3)
            throw EstimationError("tone estimation: band too narrow");
        RVec p(m);
        for (std::size_t i = 0; i < m; ++i)
            p[i] = std::norm(spec_v[i]) + (spec_h.empty() ? 0.0 : std::norm(spec_h[i]));
        const std::size_t ipk = (std::size_t)(std::max_element(p.begin(), p.end()) - p.begin());
        RVec sorted = p;
        std::nth_element(sorted.begin(), sorted.begin() + (std::ptrdiff_t)(m / 2), sorted.end());
        const double med = sorted[m / 2];
        ToneEstimate est;
        if (!(p[ipk] > 0.0) || (med > 0.0 && p[ipk] < std::pow(10.0, 0.6) * med))
            throw EstimationError("tone estimation: no peak 6 dB above the median");
        est.peak_over_median_db = med > 0.0 ? 10.0 * std::log10(p[ipk] / med) : 300.0;

        // Second strongest local maximum away from the main lobe
        double second = 0.0;
        for (std::size_t i = 0; i < m; ++i)
        {
            std::size_t d = i > ipk ? i - ipk : ipk - i;
            if (circular)
                d = std::min(d, m - d);
            if (d <= 2)
                continue;
            const double l = (i > 0) ? p[i - 1] : (circular ? p[m - 1] : 0.0);
            const double r = (i + 1 < m) ? p[i + 1] : (circular ? p[0] : 0.0);
            if (p[i] >= l && p[i] >= r)
                second = std::max(second, p[i]);
        }
        est.ambiguous = second >= std::pow(10.0, -0.1) * p[ipk];

        auto at = [&](const CVec &s, long long i) -> cplx
        {
            const long long mm = (long long)m;
            if (i < 0 || i >= mm)
            {
                if (!circular)
                    return cplx(0.0, 0.0);
                i = ((i % mm) + mm) % mm;
            }
            return s[(std::size_t)i];
        };
        cplx num(0.0, 0.0);
        double den = 0.0;
        for (const CVec *s : {&spec_v, &spec_h})
        {
            if (s->empty())
                continue;
            const cplx xm = at(*s, (long long)ipk - 1), x0 = at(*s, (long long)ipk), xp = at(*s, (long long)ipk + 1);
            const cplx n = xm - xp, d = 2.0 * x0 - xm - xp;
            num += n * std::conj(d);
            den += std::norm(d);
        }
        double delta = den > 0.0 ? num.real() / den : 0.0;
        delta = std::clamp(delta, -0.5, 0.5);
        est.freq = f0 + ((double)ipk + delta) * df;
        return est;
    }

    inline ToneEstimate estimate_tone_freq(const BandSpectrum &band)
    {
        return peak_frequency(band.v, band.h, band.frequency(0), band.bin_spacing());
    }

    // Residual multiply by exp(-j 2 pi f t), t = k/rate, re-synchronised every 1024 samples
    inline void mix_down(CVec &x, double f, double rate)
    {
        if (f == 0.0)
            return;
        const double fn = f / rate;
        const cplx step = std::polar(1.0, -two_pi * fn);
        cplx ph(1.0, 0.0);
        for (std::size_t k = 0; k < x.size(); ++k)
        {
            if ((k & 1023) == 0)
                ph = std::polar(1.0, -two_pi * std::fmod(fn * (double)k, 1.0));
            x[k] *= ph;
            ph *= step;
        }
    }

    // Shift by f_hat, ideal lowpass at half the band width, and resample to out_rate
    // (must make out_rate / bin spacing an integer number of bins).
    inline DemodBand demodulate_xp(const BandSpectrum &band, double f_hat, double out_rate)
    {
        const double df = band.bin_spacing();
        const double mr = out_rate / df;
        if (std::abs(mr - std::round(mr)) > 1e-6 || mr < 2.0)
            throw ConfigError("demodulate_xp: output rate incompatible with the frame length");
        if (!band.band.contains(f_hat))
            throw EstimationError("demodulate_xp: f_hat outside the band");
        const std::size_t M = (std::size_t)std::llround(mr);
        const long long s = std::llround(f_hat / df);
        const double resid = f_hat - (double)s * df;
        const double half = 0.5 * band.band.width();
        const double scale = 1.0 / (double)band.n_fft; // M/N, with the 1/M of the inverse folded in

        DemodBand out;
        out.f_hat = f_hat;
        out.fields.sample_rate = out_rate;
        out.fields.v.assign(M, cplx(0.0, 0.0));
        out.fields.h.assign(M, cplx(0.0, 0.0));
        const long long mm = (long long)M;
        for (std::size_t i = 0; i < band.size(); ++i)
        {
            const long long r = (long long)(band.k_lo + i) - s;
            const double fr = (double)r * df - resid;
            if (fr < -half || fr > half || std::abs((double)r * df) >= 0.5 * out_rate)
                continue;
            const std::size_t kk = (std::size_t)(((r % mm) + mm) % mm);
            out.fields.v[kk] = scale * band.v[i];
            out.fields.h[kk] = scale * band.h[i];
        }
        bfft_inplace(out.fields.v);
        bfft_inplace(out.fields.h);
        mix_down(out.fields.v, resid, out_rate);
        mix_down(out.fields.h, resid, out_rate);
        return out;
    }
}
