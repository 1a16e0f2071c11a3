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

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace pilotpol
{
    using cplx = std::complex<double>;
    using CVec = std::vector<cplx>;
    using RVec = std::vector<double>;

    inline constexpr double pi = std::numbers::pi;
    inline constexpr double two_pi = 2.0 * std::numbers::pi;

    // Error hierarchy. ConfigError maps to CLI exit code 2, everything else to 3.
    struct Error : std::runtime_error
    {
        using std::runtime_error::runtime_error;
    };
    struct ConfigError : Error
    {
        using Error::Error;
    };
    struct RuntimeFailure : Error
    {
        using Error::Error;
    };
    struct EstimationError : RuntimeFailure
    {
        using RuntimeFailure::RuntimeFailure;
    };
    struct SyncError : RuntimeFailure
    {
        using RuntimeFailure::RuntimeFailure;
    };
    struct DivergenceError : RuntimeFailure
    {
        using RuntimeFailure::RuntimeFailure;
    };
    struct CalibrationError : RuntimeFailure
    {
        using RuntimeFailure::RuntimeFailure;
    };
    struct DropoutError : RuntimeFailure
    {
        using RuntimeFailure::RuntimeFailure;
    };
    struct AlignmentError : RuntimeFailure
    {
        using RuntimeFailure::RuntimeFailure;
    };
    struct NumericalDomainError : RuntimeFailure
    {
        using RuntimeFailure::RuntimeFailure;
    };
    struct ParseError : RuntimeFailure
    {
        using RuntimeFailure::RuntimeFailure;
    };

    // Paired V/H complex streams at a common rate
    struct DualPolSeries
    {
        CVec v;
        CVec h;
        double sample_rate = 0.0;

        std::size_t size() const { return v.size(); }
        void check() const
        {
            if (v.size() != h.size())
                throw AlignmentError("DualPolSeries: V and H lengths differ");
        }
    };

    // Detected real IF signals
    struct RealSeriesPair
    {
        RVec i_v;
        RVec i_h;
        double sample_rate = 0.0;

        std::size_t size() const { return i_v.size(); }
    };

    // Wrap to (-pi, pi]
    inline double wrap_angle(double x)
    {
        double y = std::remainder(x, two_pi);
        return (y <= -pi) ? y + two_pi : y;
    }

    // Wrap to (-period/2, period/2]
    inline double wrap_period(double x, double period)
    {
        double y = std::remainder(x, period);
        return (y <= -0.5 * period) ? y + period : y;
    }

    // Centered circular moving average; window 1 is a copy
    template <typename T>
    std::vector<T> moving_average(const std::vector<T> &x, std::size_t window)
    {
        const std::size_t n = x.size();
        if (window <= 1 || n == 0)
            return x;
        if (window > n)
            window = n;
        const std::ptrdiff_t half = (std::ptrdiff_t)(window / 2);
        const std::ptrdiff_t nn = (std::ptrdiff_t)n;
        // k stays within (-n, 2n) since window <= n
        auto at = [&](std::ptrdiff_t k) -> const T &
        { return x[(std::size_t)(k < 0 ? k + nn : (k >= nn ? k - nn : k))]; };

        std::vector<T> y(n);
        T acc{};
        for (std::ptrdiff_t k = -half; k < (std::ptrdiff_t)window - half; ++k)
            acc += at(k);
        const double inv = 1.0 / (double)window;
        for (std::ptrdiff_t i = 0; i < nn; ++i)
        {
            y[(std::size_t)i] = acc * inv;
            acc += at(i + (std::ptrdiff_t)window - half);
            acc -= at(i - half);
        }
        return y;
    }

    inline double mean_power(const CVec &x)
    {
        if (x.empty())
            return 0.0;
        double s = 0.0;
        for (const auto &z : x)
            s += std::norm(z);
        return s / (double)x.size();
    }
}
