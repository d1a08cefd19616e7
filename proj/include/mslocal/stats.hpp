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

#ifndef MSLOCAL_STATS_HPP
#define MSLOCAL_STATS_HPP

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

namespace mslocal
{

/// Median of `v`; even counts use the midpoint of the two central values.
/// Reorders `v`.
inline double median_inplace(std::span<double> v)
{
    if (v.empty())
        throw std::invalid_argument("median of an empty set");
    const std::size_t n = v.size();
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>(n / 2);
    std::nth_element(v.begin(), mid, v.end());
    if (n % 2 == 1)
        return *mid;
    const double lower = *std::max_element(v.begin(), mid);
    return 0.5 * (lower + *mid);
}

/// Percentile with linear interpolation between order statistics
/// (p in [0, 100]); `sorted` must be ascending.
inline double percentile_sorted(std::span<const double> sorted, double p)
{
    if (sorted.empty())
        throw std::invalid_argument("percentile of an empty set");
    const double pos = (p / 100.0) * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

inline double root_mean_square(std::span<const double> v)
{
    if (v.empty())
        return 0.0;
    double s = 0.0;
    for (double x : v)
        s += x * x;
    return std::sqrt(s / static_cast<double>(v.size()));
}

}  // namespace mslocal

#endif
