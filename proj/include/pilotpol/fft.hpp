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

#include <fftw3.h>

#include <map>
#include <mutex>
#include <utility>

namespace pilotpol
{
    namespace detail
    {
        // FFTW planning is not thread-safe, execution is. Plans are built with
        // FFTW_ESTIMATE so the chosen algorithm, and hence every rounding, is
        // identical from run to run.
        class PlanCache
        {
        public:
            static PlanCache &instance()
            {
                static PlanCache cache;
                return cache;
            }

            fftw_plan get(std::size_t n, int sign, cplx *data)
            {
                std::lock_guard<std::mutex> lock(mtx_);
                auto key = std::make_pair(n, sign);
                auto it = plans_.find(key);
                if (it != plans_.end())
                    return it->second;
                auto *p = reinterpret_cast<fftw_complex *>(data);
                fftw_plan plan = fftw_plan_dft_1d((int)n, p, p, sign, FFTW_ESTIMATE | FFTW_UNALIGNED);
                if (!plan)
                    throw RuntimeFailure("FFTW planning failed for size " + std::to_string(n));
                plans_.emplace(key, plan);
                return plan;
            }

            ~PlanCache()
            {
                for (auto &kv : plans_)
                    fftw_destroy_plan(kv.second);
            }

        private:
            std::mutex mtx_;
            std::map<std::pair<std::size_t, int>, fftw_plan> plans_;
        };

        inline void execute(cplx *data, std::size_t n, int sign)
        {
            if (n == 0)
                return;
            fftw_plan plan = PlanCache::instance().get(n, sign, data);
            auto *p = reinterpret_cast<fftw_complex *>(data);
            fftw_execute_dft(plan, p, p);
        }
    }

    // Unnormalized forward transform, in place
    inline void fft_inplace(CVec &x)
    {
        detail::execute(x.data(), x.size(), FFTW_FORWARD);
    }

    // Inverse transform with 1/N scaling, in place
    inline void ifft_inplace(CVec &x)
    {
        detail::execute(x.data(), x.size(), FFTW_BACKWARD);
        const double s = 1.0 / (double)x.size();
        for (auto &z : x)
            z *= s;
    }

    // Unnormalized inverse transform, in place (callers fold 1/N into their own scaling)
    inline void bfft_inplace(CVec &x)
    {
        detail::execute(x.data(), x.size(), FFTW_BACKWARD);
    }

    inline CVec fft(CVec x)
    {
        fft_inplace(x);
        return x;
    }

    inline CVec ifft(CVec x)
    {
        ifft_inplace(x);
        return x;
    }

    // Signed frequency of bin k in an n-point transform, in units of the sample rate
    inline double bin_frequency(std::size_t k, std::size_t n)
    {
        return (k < (n + 1) / 2) ? (double)k / (double)n : ((double)k - (double)n) / (double)n;
    }
}
