// SPDX-License-Identifier: Apache-2.0
//
// mslocal: multistatic OFDM sensing and localization toolkit
// Copyright (C) 2026 The mslocal authors
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

#ifndef MSLOCAL_FFT_HPP
#define MSLOCAL_FFT_HPP

#include <complex>
#include <mutex>
#include <span>
#include <stdexcept>

#include <fftw3.h>

namespace mslocal
{

/// Length-n inverse DFT, out[l] = (1/n) sum_k in[k] exp(+j 2 pi k l / n).
/// One instance per thread; FFTW planning is serialized internally.
class InverseDft
{
  public:
    explicit InverseDft(int n) : n_(n)
    {
        if (n < 1)
            throw std::invalid_argument("InverseDft: length must be positive");
        std::lock_guard lock(planner_mutex());
        in_ = fftw_alloc_complex(static_cast<std::size_t>(n));
        out_ = fftw_alloc_complex(static_cast<std::size_t>(n));
        plan_ = fftw_plan_dft_1d(n, in_, out_, FFTW_BACKWARD, FFTW_ESTIMATE);
        if (!plan_)
            throw std::runtime_error("FFTW planning failed");
    }

    InverseDft(const InverseDft &) = delete;
    InverseDft &operator=(const InverseDft &) = delete;

    ~InverseDft()
    {
        std::lock_guard lock(planner_mutex());
        fftw_destroy_plan(plan_);
        fftw_free(in_);
        fftw_free(out_);
    }

    int size() const { return n_; }

    void execute(std::span<const std::complex<double>> in, std::span<std::complex<double>> out)
    {
        if (static_cast<int>(in.size()) != n_ || static_cast<int>(out.size()) != n_)
            throw std::invalid_argument("InverseDft: buffer length mismatch");
        auto *src = reinterpret_cast<std::complex<double> *>(in_);
        std::copy(in.begin(), in.end(), src);
        fftw_execute(plan_);
        const auto *dst = reinterpret_cast<const std::complex<double> *>(out_);
        const double scale = 1.0 / n_;
        for (int l = 0; l < n_; ++l)
            out[l] = dst[l] * scale;
    }

  private:
    static std::mutex &planner_mutex()
    {
        static std::mutex m;
        return m;
    }

    int n_;
    fftw_complex *in_ = nullptr;
    fftw_complex *out_ = nullptr;
    fftw_plan plan_ = nullptr;
};

}  // namespace mslocal

#endif
