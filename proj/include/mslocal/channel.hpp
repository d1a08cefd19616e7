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

#ifndef MSLOCAL_CHANNEL_HPP
#define MSLOCAL_CHANNEL_HPP

#include <complex>
#include <stdexcept>
#include <string_view>

#include <Eigen/Core>

namespace mslocal
{

using Complex = std::complex<double>;

// Rows are subcarriers, columns are antenna elements. Row-major so that the
// spatial snapshot of one subcarrier is contiguous.
using CMatrix = Eigen::Matrix<Complex, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class ChannelKind
{
    true_target,
    true_clutter,
    true_total,
    observed,
    background,
    residual,
};

inline std::string_view to_string(ChannelKind k)
{
    switch (k)
    {
    case ChannelKind::true_target: return "true_target";
    case ChannelKind::true_clutter: return "true_clutter";
    case ChannelKind::true_total: return "true_total";
    case ChannelKind::observed: return "observed";
    case ChannelKind::background: return "background";
    case ChannelKind::residual: return "residual";
    }
    return "unknown";
}

struct ChannelMatrix
{
    CMatrix entries;
    ChannelKind kind = ChannelKind::true_total;

    static ChannelMatrix zeros(int num_subcarriers, int num_antennas, ChannelKind kind)
    {
        return {CMatrix::Zero(num_subcarriers, num_antennas), kind};
    }

    int num_subcarriers() const { return static_cast<int>(entries.rows()); }
    int num_antennas() const { return static_cast<int>(entries.cols()); }
    bool all_finite() const { return entries.allFinite(); }
};

inline void require_same_shape(const ChannelMatrix &a, const ChannelMatrix &b)
{
    if (a.entries.rows() != b.entries.rows() || a.entries.cols() != b.entries.cols())
        throw std::invalid_argument("channel matrices differ in shape");
}

}  // namespace mslocal

#endif
