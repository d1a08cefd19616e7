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

#ifndef MSLOCAL_RANDOM_HPP
#define MSLOCAL_RANDOM_HPP

#include <cstdint>
#include <initializer_list>
#include <random>

#include <boost/random/normal_distribution.hpp>

namespace mslocal
{

using Rng = std::mt19937_64;

// Stream tags. Every random quantity in a run is drawn from a generator keyed
// by (master seed, tag, indices), so results do not depend on evaluation order.
enum class Stream : std::uint64_t
{
    scene = 1,
    calibration = 2,
    sensing = 3,
    planner = 4,
    variant = 5,
    trial = 6,
};

inline constexpr std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> keys)
{
    std::uint64_t h = splitmix64(base);
    for (std::uint64_t k : keys)
        h = splitmix64(h ^ splitmix64(k + 0x632be59bd9b4e019ULL));
    return h;
}

inline Rng make_rng(std::uint64_t base, Stream stream, std::initializer_list<std::uint64_t> keys = {})
{
    std::uint64_t h = derive_seed(base, {static_cast<std::uint64_t>(stream)});
    for (std::uint64_t k : keys)
        h = splitmix64(h ^ splitmix64(k + 0x632be59bd9b4e019ULL));
    return Rng(h);
}

// Ziggurat sampler.
using NormalDistribution = boost::random::normal_distribution<double>;

}  // namespace mslocal

#endif
