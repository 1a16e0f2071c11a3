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

#include "pilotpol/channel.hpp"
#include "pilotpol/common.hpp"
#include "pilotpol/dsp/tracker.hpp"

#include <cstdint>
#include <limits>
#include <string>

namespace pilotpol
{
    // One CSV row. xi_hat is referenced to the channel input (residual / eta*T_hat).
    struct MetricsReport
    {
        double sr = 0.0;
        std::size_t trial = 0;
        std::uint64_t seed = 0;
        std::string tracker = "proposed";
        double t_hat = std::numeric_limits<double>::quiet_NaN();
        double xi_hat = std::numeric_limits<double>::quiet_NaN();
        double evm_db = std::numeric_limits<double>::quiet_NaN();
        double alpha_rms_err = std::numeric_limits<double>::quiet_NaN();
        double skr_bps = 0.0;
        std::size_t block_size = 0;
        bool diverged = false;
    };

    struct ParamEstimate
    {
        double t_hat = 0.0;
        double xi_hat = 0.0;
        cplx g{0.0, 0.0};
        double resid_var = 0.0; // per quadrature
    };

    // g = <rx conj(tx)> / <|tx|^2>, eta*T = |g|^2, xi = (Var(rx - g tx)/2 - det_noise)/|g|^2.
    // rx is in shot-noise units; det_noise is 1 + v_ele, or 0 for a noiseless receiver.
    inline ParamEstimate estimate_params(const CVec &tx, const CVec &rx, double eta, double det_noise)
    {
        if (tx.size() != rx.size() || tx.empty())
            throw AlignmentError("estimate_params: sequences must be non-empty and aligned");
        cplx num(0.0, 0.0);
        double den = 0.0;
        for (std::size_t k = 0; k < tx.size(); ++k)
        {
            num += rx[k] * std::conj(tx[k]);
            den += std::norm(tx[k]);
        }
        if (den == 0.0)
            throw EstimationError("estimate_params: zero reference power");
        ParamEstimate p;
        p.g = num / den;
        const double g2 = std::norm(p.g);
        if (g2 < 1e-6)
            throw EstimationError("estimate_params: channel gain unestimable (|g|^2 < 1e-6)");
        cplx m(0.0, 0.0);
        for (std::size_t k = 0; k < tx.size(); ++k)
            m += rx[k] - p.g * tx[k];
        m /= (double)tx.size();
        double v = 0.0;
        for (std::size_t k = 0; k < tx.size(); ++k)
            v += std::norm(rx[k] - p.g * tx[k] - m);
        v /= (double)(tx.size() - 1 > 0 ? tx.size() - 1 : 1);
        p.resid_var = 0.5 * v;
        p.t_hat = g2 / eta;
        p.xi_hat = (p.resid_var - det_noise) / g2;
        return p;
    }

    struct SkrParams
    {
        double v_a = 6.15;
        double t = 0.0;
        double xi = 0.03;
        double eta = 0.56;
        double v_ele = 0.15;
        double beta = 0.95;
        double symbol_rate = 1e9;
        double train_ratio = 0.2;
    };

    namespace detail
    {
        // Entropy of a thermal mode with symplectic eigenvalue nu
        inline double g_entropy(double nu)
        {
            if (nu < 1.0 - 1e-9)
                throw NumericalDomainError("skr: symplectic eigenvalue below 1");
            if (nu <= 1.0)
                return 0.0;
            const double a = 0.5 * (nu + 1.0), b = 0.5 * (nu - 1.0);
            return a * std::log2(a) - b * std::log2(b);
        }
    }

    // Asymptotic heterodyne key rate, Gaussian-modulation surrogate, reverse reconciliation
    inline double asymptotic_skr(const SkrParams &p)
    {
        if (!(p.v_a > 0.0) || !(p.eta > 0.0) || !(p.beta > 0.0) || !(p.beta <= 1.0) || !(p.symbol_rate > 0.0) ||
            !(p.train_ratio >= 0.0 && p.train_ratio < 1.0) || !(p.v_ele >= 0.0) || !(p.t >= 0.0))
            throw ConfigError("skr: invalid parameters");
        if (p.t < 1e-12)
            return 0.0;
        const double V = p.v_a + 1.0;
        const double T = p.t;
        const double chi_line = 1.0 / T - 1.0 + p.xi;
        const double chi_het = (2.0 - p.eta + 2.0 * p.v_ele) / p.eta;
        const double chi_tot = chi_line + chi_het / T;
        const double i_ab = std::log2((V + chi_tot) / (1.0 + chi_tot));

        const double A = V * V * (1.0 - 2.0 * T) + 2.0 * T + T * T * (V + chi_line) * (V + chi_line);
        const double B = T * T * (V * chi_line + 1.0) * (V * chi_line + 1.0);
        const double disc12 = A * A - 4.0 * B;
        if (disc12 < -1e-9 * A * A)
            throw NumericalDomainError("skr: negative discriminant");
        const double l1 = std::sqrt(0.5 * (A + std::sqrt(std::max(disc12, 0.0))));
        const double l2 = std::sqrt(0.5 * (A - std::sqrt(std::max(disc12, 0.0))));

        const double sB = std::sqrt(B);
        const double den = T * T * (V + chi_tot) * (V + chi_tot);
        const double C = (A * chi_het * chi_het + B + 1.0 + 2.0 * chi_het * (V * sB + T * (V + chi_line)) +
                          2.0 * T * (V * V - 1.0)) / den;
        const double D = std::pow((V + sB * chi_het) / (T * (V + chi_tot)), 2.0);
        const double disc34 = C * C - 4.0 * D;
        if (disc34 < -1e-9 * C * C)
            throw NumericalDomainError("skr: negative discriminant");
        const double l3 = std::sqrt(0.5 * (C + std::sqrt(std::max(disc34, 0.0))));
        const double l4 = std::sqrt(0.5 * (C - std::sqrt(std::max(disc34, 0.0))));

        const double chi_be = detail::g_entropy(l1) + detail::g_entropy(l2) - detail::g_entropy(l3) - detail::g_entropy(l4);
        const double k = p.symbol_rate * (1.0 - p.train_ratio) * (p.beta * i_ab - chi_be);
        return std::max(0.0, k);
    }

    // 10 log10(sum|rx - tx|^2 / sum|tx|^2), floored at -120 dB
    inline double evm(const CVec &rx, const CVec &tx)
    {
        if (rx.size() != tx.size())
            throw AlignmentError("evm: length mismatch");
        double e = 0.0, r = 0.0;
        for (std::size_t k = 0; k < tx.size(); ++k)
        {
            e += std::norm(rx[k] - tx[k]);
            r += std::norm(tx[k]);
        }
        if (r == 0.0)
            throw EstimationError("evm: zero reference power");
        if (e == 0.0)
            return -120.0;
        return std::max(-120.0, 10.0 * std::log10(e / r));
    }

    struct TrackingError
    {
        double alpha_rms_err = 0.0;
        double dphi_rms_err = 0.0;
    };

    // Gauge-invariant comparison. alpha error is the half-angle between the Stokes-like
    // vectors (cos 2a, sin 2a cos S, sin 2a sin S), S = -dphi, which is blind to the
    // (alpha + pi) and (-alpha, S + pi) equivalences; dphi error is wrapped modulo pi.
    // `stride` > 1 evaluates every stride-th sample only.
    inline TrackingError tracking_error_stats(const dsp::PolEstimate &est, const RVec &alpha_true, const RVec &dphi_true,
                                              std::size_t stride = 1)
    {
        const std::size_t n = est.size();
        if (alpha_true.size() != n || dphi_true.size() != n || n == 0)
            throw AlignmentError("tracking_error_stats: length mismatch");
        if (stride < 1)
            throw ConfigError("tracking_error_stats: stride must be >= 1");
        double sa = 0.0, sd = 0.0;
        std::size_t cnt = 0;
        for (std::size_t k = 0; k < n; k += stride)
        {
            ++cnt;
            const double a1 = est.alpha[k], s1 = -est.dphi[k];
            const double a2 = alpha_true[k], s2 = -dphi_true[k];
            const double dot = std::cos(2 * a1) * std::cos(2 * a2) +
                               std::sin(2 * a1) * std::sin(2 * a2) * std::cos(s1 - s2);
            const double ang = 0.5 * std::acos(std::clamp(dot, -1.0, 1.0));
            sa += ang * ang;
            const double dd = wrap_period(est.dphi[k] - dphi_true[k], pi);
            sd += dd * dd;
        }
        return {std::sqrt(sa / (double)cnt), std::sqrt(sd / (double)cnt)};
    }

    // Ground-truth (alpha, dphi) sampled at `rate` over n points
    inline void trajectory_truth(const JonesTrajectory &tr, double rate, std::size_t n, RVec &alpha, RVec &dphi)
    {
        alpha.resize(n);
        dphi.resize(n);
        const double r = tr.sample_rate() / rate;
        for (std::size_t k = 0; k < n; ++k)
        {
            const auto a = tr.angles((double)k * r);
            alpha[k] = a[0];
            dphi[k] = -(a[1] + a[2]);
        }
    }
}
