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

#include <algorithm>

namespace pilotpol
{
    struct JonesMatrix
    {
        cplx m_vv{1.0, 0.0}, m_vh{0.0, 0.0}, m_hv{0.0, 0.0}, m_hh{1.0, 0.0};

        static JonesMatrix identity() { return {}; }

        JonesMatrix operator*(const JonesMatrix &b) const
        {
            return {m_vv * b.m_vv + m_vh * b.m_hv, m_vv * b.m_vh + m_vh * b.m_hh,
                    m_hv * b.m_vv + m_hh * b.m_hv, m_hv * b.m_vh + m_hh * b.m_hh};
        }

        JonesMatrix adjoint() const
        {
            return {std::conj(m_vv), std::conj(m_hv), std::conj(m_vh), std::conj(m_hh)};
        }

        cplx det() const { return m_vv * m_hh - m_vh * m_hv; }

        // Max entry deviation of J*J^H from I
        double unitarity_error() const
        {
            JonesMatrix p = (*this) * adjoint();
            double e = std::abs(p.m_vv - 1.0);
            e = std::max(e, std::abs(p.m_hh - 1.0));
            e = std::max(e, std::abs(p.m_vh));
            return std::max(e, std::abs(p.m_hv));
        }

        double max_abs_diff(const JonesMatrix &b) const
        {
            return std::max({std::abs(m_vv - b.m_vv), std::abs(m_vh - b.m_vh),
                             std::abs(m_hv - b.m_hv), std::abs(m_hh - b.m_hh)});
        }
    };

    // Fiber Jones matrix parameterised by (alpha, phi1, phi2)
    inline JonesMatrix jones_matrix(double alpha, double phi1, double phi2)
    {
        const double c = std::cos(alpha), s = std::sin(alpha);
        return {c * std::polar(1.0, phi1), -s * std::polar(1.0, phi2),
                s * std::polar(1.0, -phi2), c * std::polar(1.0, -phi1)};
    }

    // Inverse model from (alpha, dphi); with dphi = -(phi1 + phi2) the product with
    // jones_matrix(alpha, phi1, phi2) is diag(exp(j*phi), exp(-j*phi)), phi = (phi1 - phi2)/2.
    inline JonesMatrix build_inverse_jones(double alpha, double dphi)
    {
        const double c = std::cos(alpha), s = std::sin(alpha);
        const cplx ep = std::polar(1.0, 0.5 * dphi), em = std::conj(ep);
        return {c * ep, s * em, -s * ep, c * em};
    }
}
