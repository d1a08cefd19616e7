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

#ifndef MSLOCAL_SCENE_HPP
#define MSLOCAL_SCENE_HPP

#include <cmath>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "mslocal/channel.hpp"
#include "mslocal/geometry.hpp"
#include "mslocal/random.hpp"

namespace mslocal
{

inline constexpr double kBoltzmann = 1.380649e-23;  // J/K

struct Scatterer
{
    Point2 position;
    double mean_rcs = 1.0;   // m^2
    double drawn_rcs = 1.0;  // m^2, fixed for one Monte Carlo trial
};

struct Area
{
    double x_min = 0.0;
    double y_min = 0.0;
    double x_max = 0.0;
    double y_max = 0.0;

    double width() const { return x_max - x_min; }
    double height() const { return y_max - y_min; }
    Point2 centre() const { return {0.5 * (x_min + x_max), 0.5 * (y_min + y_max)}; }
    bool contains(const Point2 &p) const
    {
        return p.x >= x_min && p.x <= x_max && p.y >= y_min && p.y <= y_max;
    }
};

struct NoiseSpec
{
    double noise_temperature = 290.0;    // K
    double noise_figure = 1.0;           // linear
    double pilot_power_per_tone = 1.0;   // W
};

struct Scene
{
    std::vector<NodePose> nodes;
    UlaConfig ula;
    OfdmGrid grid;
    std::optional<Scatterer> target;
    std::vector<Scatterer> clutter;       // dedicated clutter scatterers
    std::vector<Scatterer> node_clutter;  // empty, or one scatterer per node
    Area area;
    bool include_los = true;
    // Receive field of view about boresight; paths arriving from outside it are
    // not received. pi gives isotropic elements.
    double rx_half_angle = kPi;

    void validate() const
    {
        if (nodes.size() < 2)
            throw std::invalid_argument("scene needs at least two nodes");
        for (const auto &n : nodes)
            mslocal::validate(n);
        mslocal::validate(grid);
        mslocal::validate(ula, grid.wavelength());
        if (!(rx_half_angle > 0.0 && rx_half_angle <= kPi))
            throw std::invalid_argument("receive half angle must lie in (0, pi]");
        if (target && !area.contains(target->position))
            throw std::invalid_argument("target lies outside the scene area");
        if (!node_clutter.empty() && node_clutter.size() != nodes.size())
            throw std::invalid_argument("node clutter must have one entry per node");
        for (std::size_t a = 0; a < nodes.size(); ++a)
            for (std::size_t b = a + 1; b < nodes.size(); ++b)
                if (nodes[a].location_id == nodes[b].location_id &&
                    !(nodes[a].position == nodes[b].position))
                    throw std::invalid_argument("location id maps to two positions");
    }

    int node_at_location(int location_id) const
    {
        for (std::size_t n = 0; n < nodes.size(); ++n)
            if (nodes[n].location_id == location_id)
                return static_cast<int>(n);
        throw std::out_of_range("no node at requested location");
    }

    // Static scatterers seen on link (tx, rx): dedicated clutter plus every
    // other node acting as a point scatterer.
    std::vector<Scatterer> link_clutter(int tx, int rx) const
    {
        std::vector<Scatterer> out = clutter;
        for (std::size_t n = 0; n < node_clutter.size(); ++n)
            if (static_cast<int>(n) != tx && static_cast<int>(n) != rx)
                out.push_back(node_clutter[n]);
        return out;
    }
};

/// Swerling-I cross section: exponential with the given mean.
inline double draw_rcs(double mean, Rng &rng)
{
    if (!(mean > 0.0))
        throw std::invalid_argument("draw_rcs: mean must be positive");
    return std::exponential_distribution<double>(1.0 / mean)(rng);
}

/// Bistatic radar-equation amplitude of a single point scatterer.
inline double path_amplitude(const NodePose &tx, const NodePose &rx, const Point2 &p, double rcs,
                             double wavelength)
{
    const double di = distance(p, tx.position);
    const double dj = distance(p, rx.position);
    if (di == 0.0 || dj == 0.0)
        throw std::domain_error("path_amplitude: scatterer coincides with a node");
    const double four_pi_cubed = std::pow(4.0 * kPi, 3);
    return std::sqrt(tx.tx_gain * rx.rx_gain * wavelength * wavelength * rcs / four_pi_cubed) / (di * dj);
}

/// One-way Friis amplitude of the direct Tx -> Rx path.
inline double los_amplitude(const NodePose &tx, const NodePose &rx, double wavelength)
{
    const double d = distance(tx.position, rx.position);
    if (d == 0.0)
        throw std::domain_error("los_amplitude: transmitter and receiver coincide");
    return std::sqrt(tx.tx_gain * rx.rx_gain) * wavelength / (4.0 * kPi * d);
}

/// Accumulates amplitude * exp(-j 2 pi f_k delay) * a(f_k, aoa) into H.
inline void add_path(CMatrix &h, double amplitude, double delay, double aoa, const OfdmGrid &grid,
                     const UlaConfig &ula)
{
    const int m_a = ula.num_elements;
    const double centre = 0.5 * (m_a - 1);
    const double spatial = kTwoPi * ula.spacing * std::sin(aoa) / kSpeedOfLight;
    for (int k = 0; k < grid.num_subcarriers; ++k)
    {
        const double fk = grid.frequency(k);
        const double cycles = fk * delay;
        const double delay_phase = -kTwoPi * (cycles - std::floor(cycles));
        const double phi = spatial * fk;
        // element m carries exp(-j phi (m - centre))
        Complex w = std::polar(amplitude, delay_phase + phi * centre);
        const Complex step = std::polar(1.0, -phi);
        Complex *row = h.row(k).data();
        for (int m = 0; m < m_a; ++m)
        {
            row[m] += w;
            w *= step;
        }
    }
}

/// Sum of single-bounce contributions of `scatterers` on link tx -> rx.
inline ChannelMatrix synth_component(const NodePose &tx, const NodePose &rx, std::span<const Scatterer> scatterers,
                                     const OfdmGrid &grid, const UlaConfig &ula,
                                     ChannelKind kind = ChannelKind::true_target, double rx_half_angle = kPi)
{
    if (grid.num_subcarriers < 1 || ula.num_elements < 1)
        throw std::invalid_argument("synth_component: empty channel dimensions");
    ChannelMatrix out = ChannelMatrix::zeros(grid.num_subcarriers, ula.num_elements, kind);
    const double lambda = grid.wavelength();
    for (const auto &s : scatterers)
    {
        const double gamma = path_amplitude(tx, rx, s.position, s.drawn_rcs, lambda);
        const double tau = bistatic_delay(tx.position, rx.position, s.position);
        const double aoa = aoa_boresight(rx, s.position);
        if (std::abs(aoa) > rx_half_angle)
            continue;
        add_path(out.entries, gamma, tau, aoa, grid, ula);
    }
    return out;
}

/// Direct path channel: delay |tx - rx| / c, arriving from the transmitter.
inline ChannelMatrix synth_los(const NodePose &tx, const NodePose &rx, const OfdmGrid &grid, const UlaConfig &ula,
                               double rx_half_angle = kPi)
{
    ChannelMatrix out = ChannelMatrix::zeros(grid.num_subcarriers, ula.num_elements, ChannelKind::true_clutter);
    const double amp = los_amplitude(tx, rx, grid.wavelength());
    const double tau = distance(tx.position, rx.position) / kSpeedOfLight;
    const double aoa = aoa_boresight(rx, tx.position);
    if (std::abs(aoa) <= rx_half_angle)
        add_path(out.entries, amp, tau, aoa, grid, ula);
    return out;
}

inline ChannelMatrix target_channel(const Scene &scene, int tx, int rx)
{
    const auto &t = scene.nodes.at(tx);
    const auto &r = scene.nodes.at(rx);
    if (!scene.target)
        return ChannelMatrix::zeros(scene.grid.num_subcarriers, scene.ula.num_elements, ChannelKind::true_target);
    return synth_component(t, r, std::span<const Scatterer>(&*scene.target, 1), scene.grid, scene.ula,
                           ChannelKind::true_target, scene.rx_half_angle);
}

/// Aggregate static clutter (direct path included) on link tx -> rx.
inline ChannelMatrix clutter_channel(const Scene &scene, int tx, int rx)
{
    const auto &t = scene.nodes.at(tx);
    const auto &r = scene.nodes.at(rx);
    const auto scatterers = scene.link_clutter(tx, rx);
    ChannelMatrix out =
        synth_component(t, r, scatterers, scene.grid, scene.ula, ChannelKind::true_clutter, scene.rx_half_angle);
    if (scene.include_los)
        out.entries += synth_los(t, r, scene.grid, scene.ula, scene.rx_half_angle).entries;
    return out;
}

/// Thermal noise power k_B T_n F_n delta_f in watts.
inline double noise_power(double delta_f, const NoiseSpec &spec)
{
    if (!(delta_f > 0.0 && spec.noise_temperature > 0.0 && spec.noise_figure > 0.0))
        throw std::invalid_argument("noise_power: inputs must be positive");
    return kBoltzmann * spec.noise_temperature * spec.noise_figure * delta_f;
}

/// Per-entry variance of the LS channel estimation error, sigma_n^2 / P_tone.
inline double channel_error_variance(double delta_f, const NoiseSpec &spec)
{
    if (!(spec.pilot_power_per_tone > 0.0))
        throw std::invalid_argument("pilot power must be positive");
    return noise_power(delta_f, spec) / spec.pilot_power_per_tone;
}

/// Adds i.i.d. CN(0, variance) to every entry.
inline void add_complex_noise(CMatrix &h, double variance, Rng &rng)
{
    if (variance < 0.0)
        throw std::invalid_argument("noise variance must be non-negative");
    if (variance == 0.0)
        return;
    NormalDistribution normal(0.0, std::sqrt(0.5 * variance));
    Complex *p = h.data();
    const Eigen::Index n = h.size();
    for (Eigen::Index i = 0; i < n; ++i)
    {
        const double re = normal(rng);
        const double im = normal(rng);
        p[i] += Complex(re, im);
    }
}

inline ChannelMatrix observe_with_variance(const ChannelMatrix &true_channel, double variance, Rng &rng)
{
    ChannelMatrix out{true_channel.entries, ChannelKind::observed};
    add_complex_noise(out.entries, variance, rng);
    return out;
}

/// LS channel estimate: true channel plus CN(0, sigma_H^2) estimation error.
inline ChannelMatrix observe_link(const ChannelMatrix &true_channel, const NoiseSpec &spec, double delta_f, Rng &rng)
{
    return observe_with_variance(true_channel, channel_error_variance(delta_f, spec), rng);
}

}  // namespace mslocal

#endif
