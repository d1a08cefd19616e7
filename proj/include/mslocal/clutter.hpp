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

#ifndef MSLOCAL_CLUTTER_HPP
#define MSLOCAL_CLUTTER_HPP

#include <algorithm>
#include <array>
#include <compare>
#include <cstdint>
#include <cstring>
#include <istream>
#include <map>
#include <mutex>
#include <ostream>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mslocal/channel.hpp"
#include "mslocal/random.hpp"
#include "mslocal/scene.hpp"
#include "mslocal/stats.hpp"

namespace mslocal
{

struct LocationPair
{
    int tx = 0;
    int rx = 0;
    friend auto operator<=>(const LocationPair &, const LocationPair &) = default;
};

/// Complex median: independent medians of the real and imaginary parts per cell.
inline ChannelMatrix learn_entry(std::span<const ChannelMatrix> snapshots)
{
    if (snapshots.empty())
        throw std::invalid_argument("learn_entry: no snapshots");
    for (const auto &s : snapshots)
        require_same_shape(s, snapshots.front());
    const auto rows = snapshots.front().entries.rows();
    const auto cols = snapshots.front().entries.cols();
    ChannelMatrix out{CMatrix(rows, cols), ChannelKind::background};
    std::vector<double> re(snapshots.size()), im(snapshots.size());
    for (Eigen::Index c = 0; c < rows * cols; ++c)
    {
        for (std::size_t n = 0; n < snapshots.size(); ++n)
        {
            const Complex v = snapshots[n].entries.data()[c];
            re[n] = v.real();
            im[n] = v.imag();
        }
        out.entries.data()[c] = Complex(median_inplace(re), median_inplace(im));
    }
    return out;
}

/// Learns one entry from `num_snapshots` noisy observations of `clutter`
/// (error variance `variance` per entry). Snapshots are drawn cell by cell and
/// never stored; the result has the same law as learn_entry over materialized
/// snapshots.
inline ChannelMatrix learn_background(const ChannelMatrix &clutter, double variance, int num_snapshots, Rng &rng)
{
    if (num_snapshots < 1)
        throw std::invalid_argument("learn_background: need at least one snapshot");
    ChannelMatrix out{CMatrix(clutter.entries.rows(), clutter.entries.cols()), ChannelKind::background};
    NormalDistribution normal(0.0, std::sqrt(0.5 * variance));
    std::vector<double> re(num_snapshots), im(num_snapshots);
    const Eigen::Index cells = clutter.entries.size();
    for (Eigen::Index c = 0; c < cells; ++c)
    {
        const Complex truth = clutter.entries.data()[c];
        if (variance == 0.0)
        {
            out.entries.data()[c] = truth;
            continue;
        }
        for (int n = 0; n < num_snapshots; ++n)
        {
            re[n] = truth.real() + normal(rng);
            im[n] = truth.imag() + normal(rng);
        }
        out.entries.data()[c] = Complex(median_inplace(re), median_inplace(im));
    }
    return out;
}

/// Learned target-free channels keyed by ordered (tx location, rx location).
class BackgroundDictionary
{
  public:
    explicit BackgroundDictionary(int num_snapshots = 0) : num_snapshots_(num_snapshots) {}

    void insert(LocationPair key, ChannelMatrix entry)
    {
        if (key.tx == key.rx)
            throw std::invalid_argument("dictionary keys need distinct locations");
        if (!entries_.empty())
            require_same_shape(entries_.begin()->second, entry);
        entry.kind = ChannelKind::background;
        entries_.insert_or_assign(key, std::move(entry));
    }

    bool contains(LocationPair key) const { return entries_.contains(key); }

    const ChannelMatrix &at(int tx_location, int rx_location) const
    {
        const auto it = entries_.find({tx_location, rx_location});
        if (it == entries_.end())
            throw std::out_of_range("background dictionary has no entry for (" + std::to_string(tx_location) +
                                    ", " + std::to_string(rx_location) + "): pair not calibrated");
        return it->second;
    }

    std::size_t size() const { return entries_.size(); }
    int num_snapshots() const { return num_snapshots_; }
    auto begin() const { return entries_.begin(); }
    auto end() const { return entries_.end(); }

    // Binary layout (native endianness):
    //   char[8] "MSBGDICT", u32 version, i32 num_snapshots, u64 count,
    //   count x { i32 tx, i32 rx, i32 rows, i32 cols, rows*cols x (f64 re, f64 im) }
    void save(std::ostream &os) const
    {
        os.write(kMagic.data(), kMagic.size());
        write_pod(os, kVersion);
        write_pod(os, static_cast<std::int32_t>(num_snapshots_));
        write_pod(os, static_cast<std::uint64_t>(entries_.size()));
        for (const auto &[key, m] : entries_)
        {
            write_pod(os, static_cast<std::int32_t>(key.tx));
            write_pod(os, static_cast<std::int32_t>(key.rx));
            write_pod(os, static_cast<std::int32_t>(m.entries.rows()));
            write_pod(os, static_cast<std::int32_t>(m.entries.cols()));
            os.write(reinterpret_cast<const char *>(m.entries.data()),
                     static_cast<std::streamsize>(m.entries.size() * sizeof(Complex)));
        }
        if (!os)
            throw std::runtime_error("failed to write background dictionary");
    }

    static BackgroundDictionary load(std::istream &is)
    {
        std::array<char, 8> magic{};
        is.read(magic.data(), magic.size());
        if (!is || magic != kMagic)
            throw std::runtime_error("not a background dictionary file");
        if (read_pod<std::uint32_t>(is) != kVersion)
            throw std::runtime_error("unsupported background dictionary version");
        BackgroundDictionary dict(read_pod<std::int32_t>(is));
        const auto count = read_pod<std::uint64_t>(is);
        for (std::uint64_t e = 0; e < count; ++e)
        {
            const int tx = read_pod<std::int32_t>(is);
            const int rx = read_pod<std::int32_t>(is);
            const int rows = read_pod<std::int32_t>(is);
            const int cols = read_pod<std::int32_t>(is);
            if (rows < 0 || cols < 0)
                throw std::runtime_error("corrupt background dictionary");
            ChannelMatrix m{CMatrix(rows, cols), ChannelKind::background};
            is.read(reinterpret_cast<char *>(m.entries.data()),
                    static_cast<std::streamsize>(m.entries.size() * sizeof(Complex)));
            if (!is)
                throw std::runtime_error("truncated background dictionary");
            dict.insert({tx, rx}, std::move(m));
        }
        return dict;
    }

  private:
    static constexpr std::array<char, 8> kMagic{'M', 'S', 'B', 'G', 'D', 'I', 'C', 'T'};
    static constexpr std::uint32_t kVersion = 1;

    template <class T> static void write_pod(std::ostream &os, T v)
    {
        os.write(reinterpret_cast<const char *>(&v), sizeof(T));
    }
    template <class T> static T read_pod(std::istream &is)
    {
        T v{};
        is.read(reinterpret_cast<char *>(&v), sizeof(T));
        if (!is)
            throw std::runtime_error("truncated background dictionary");
        return v;
    }

    std::map<LocationPair, ChannelMatrix> entries_;
    int num_snapshots_ = 0;
};

/// Calibrates one ordered pair. The generator is keyed by (seed, t, r), so the
/// entry does not depend on which other pairs were calibrated.
inline ChannelMatrix calibrate_pair(const Scene &scene, const NoiseSpec &noise, int num_snapshots,
                                    std::uint64_t seed, int tx_location, int rx_location)
{
    const int tx = scene.node_at_location(tx_location);
    const int rx = scene.node_at_location(rx_location);
    const ChannelMatrix truth = clutter_channel(scene, tx, rx);
    Rng rng = make_rng(seed, Stream::calibration,
                       {static_cast<std::uint64_t>(tx_location), static_cast<std::uint64_t>(rx_location)});
    return learn_background(truth, channel_error_variance(scene.grid.delta_f, noise), num_snapshots, rng);
}

/// Target-free calibration over every ordered location pair. The target in
/// `scene`, if any, is ignored: only the clutter component is observed.
inline BackgroundDictionary calibrate(const Scene &scene, const NoiseSpec &noise, int num_snapshots,
                                      std::uint64_t seed)
{
    std::set<int> locations;
    for (const auto &n : scene.nodes)
        locations.insert(n.location_id);
    BackgroundDictionary dict(num_snapshots);
    for (int t : locations)
        for (int r : locations)
            if (t != r)
                dict.insert({t, r}, calibrate_pair(scene, noise, num_snapshots, seed, t, r));
    return dict;
}

/// Dictionary that calibrates pairs on first lookup. Produces the same entries
/// as calibrate() for the same seed; used when only a few pairs of a large
/// location set are ever sensed.
class LazyBackground
{
  public:
    LazyBackground(const Scene &scene, NoiseSpec noise, int num_snapshots, std::uint64_t seed)
        : scene_(&scene), noise_(noise), num_snapshots_(num_snapshots), seed_(seed)
    {
    }

    const ChannelMatrix &at(int tx_location, int rx_location) const
    {
        if (tx_location == rx_location)
            throw std::out_of_range("background lookup needs distinct locations");
        std::lock_guard lock(mutex_);
        const LocationPair key{tx_location, rx_location};
        if (!cache_.contains(key))
            cache_.insert({key, calibrate_pair(*scene_, noise_, num_snapshots_, seed_, tx_location, rx_location)});
        return cache_.at(key);
    }

    std::size_t calibrated_pairs() const
    {
        std::lock_guard lock(mutex_);
        return cache_.size();
    }

  private:
    const Scene *scene_;
    NoiseSpec noise_;
    int num_snapshots_;
    std::uint64_t seed_;
    mutable std::mutex mutex_;
    mutable std::map<LocationPair, ChannelMatrix> cache_;
};

/// Clutter-suppressed residual: observed channel minus the learned background.
template <class Background>
ChannelMatrix suppress(const ChannelMatrix &observed, const Background &background, int tx_location,
                       int rx_location)
{
    const ChannelMatrix &bg = background.at(tx_location, rx_location);
    require_same_shape(observed, bg);
    return {observed.entries - bg.entries, ChannelKind::residual};
}

}  // namespace mslocal

#endif
