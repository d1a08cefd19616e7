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

#ifndef MSLOCAL_GEOMETRY_HPP
#define MSLOCAL_GEOMETRY_HPP

#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>

#include <Eigen/Core>

namespace mslocal
{

inline constexpr double kSpeedOfLight = 299792458.0;  // m/s
inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

using CVector = Eigen::VectorXcd;

// Plain 2-D vector in meters. Also used for gradients (s/m, rad/m).
struct Point2
{
    double x = 0.0;
    double y = 0.0;

    constexpr Point2 &operator+=(const Point2 &o)
    {
        x += o.x;
        y += o.y;
        return *this;
    }
    constexpr Point2 &operator-=(const Point2 &o)
    {
        x -= o.x;
        y -= o.y;
        return *this;
    }
    friend constexpr Point2 operator+(Point2 a, const Point2 &b) { return a += b; }
    friend constexpr Point2 operator-(Point2 a, const Point2 &b) { return a -= b; }
    friend constexpr Point2 operator*(double s, const Point2 &p) { return {s * p.x, s * p.y}; }
    friend constexpr Point2 operator*(const Point2 &p, double s) { return {s * p.x, s * p.y}; }
    friend constexpr Point2 operator/(const Point2 &p, double s) { return {p.x / s, p.y / s}; }
    friend constexpr bool operator==(const Point2 &, const Point2 &) = default;
};

inline constexpr double dot(const Point2 &a, const Point2 &b) { return a.x * b.x + a.y * b.y; }
inline double norm(const Point2 &a) { return std::hypot(a.x, a.y); }
inline double distance(const Point2 &a, const Point2 &b) { return norm(a - b); }
inline bool is_finite(const Point2 &a) { return std::isfinite(a.x) && std::isfinite(a.y); }

struct NodePose
{
    Point2 position;
    double boresight = 0.0;  // radians in [0, 2pi)
    double tx_gain = 1.0;    // linear
    double rx_gain = 1.0;    // linear
    int location_id = 0;
};

struct UlaConfig
{
    int num_elements = 1;
    double spacing = 0.0;  // meters
};

// Subcarrier comb f_k = f0 + k * delta_f, k = 0 .. num_subcarriers-1.
struct OfdmGrid
{
    double f0 = 0.0;
    double delta_f = 0.0;
    int num_subcarriers = 0;

    // Grid whose mean subcarrier frequency equals `center`.
    static OfdmGrid centered(double center, double delta_f, int num_subcarriers)
    {
        return {center - 0.5 * (num_subcarriers - 1) * delta_f, delta_f, num_subcarriers};
    }

    double frequency(int k) const { return f0 + k * delta_f; }
    double bandwidth() const { return num_subcarriers * delta_f; }
    double center_frequency() const { return f0 + 0.5 * (num_subcarriers - 1) * delta_f; }
    double wavelength() const { return kSpeedOfLight / center_frequency(); }
    double delay_bin() const { return 1.0 / bandwidth(); }
};

inline void validate(const NodePose &n)
{
    if (!is_finite(n.position))
        throw std::invalid_argument("node position must be finite");
    if (!(n.boresight >= 0.0 && n.boresight < kTwoPi))
        throw std::invalid_argument("boresight must lie in [0, 2pi)");
    if (!(n.tx_gain > 0.0 && n.rx_gain > 0.0))
        throw std::invalid_argument("antenna gains must be positive");
    if (n.location_id < 0)
        throw std::invalid_argument("location id must be non-negative");
}

inline void validate(const UlaConfig &ula, double wavelength)
{
    if (ula.num_elements < 1)
        throw std::invalid_argument("ULA needs at least one element");
    if (!(ula.spacing > 0.0) || ula.spacing > 0.5 * wavelength * (1.0 + 1e-12))
        throw std::invalid_argument("ULA spacing must lie in (0, lambda/2]");
}

inline void validate(const OfdmGrid &g)
{
    if (!(g.delta_f > 0.0))
        throw std::invalid_argument("subcarrier spacing must be positive");
    if (g.num_subcarriers < 2)
        throw std::invalid_argument("need at least two subcarriers");
    if (!(g.f0 > 0.0))
        throw std::invalid_argument("lowest subcarrier frequency must be positive");
}

/// Maps an angle onto [-pi, pi).
inline double wrap_pi(double x)
{
    double r = std::fmod(x + kPi, kTwoPi);
    if (r < 0.0)
        r += kTwoPi;
    r -= kPi;
    if (r >= kPi)
        r -= kTwoPi;
    return r;
}

/// Angle in [0, 2pi).
inline double wrap_two_pi(double x)
{
    double r = std::fmod(x, kTwoPi);
    if (r < 0.0)
        r += kTwoPi;
    if (r >= kTwoPi)
        r = 0.0;
    return r;
}

/// Tx -> p -> Rx propagation delay in seconds.
inline double bistatic_delay(const Point2 &tx, const Point2 &rx, const Point2 &p)
{
    return (distance(p, tx) + distance(p, rx)) / kSpeedOfLight;
}

/// Angle of arrival at `rx` measured from its boresight, in [-pi, pi).
inline double aoa_boresight(const NodePose &rx, const Point2 &p)
{
    const Point2 v = p - rx.position;
    if (v.x == 0.0 && v.y == 0.0)
        throw std::domain_error("aoa_boresight: point coincides with receiver");
    return wrap_pi(std::atan2(v.y, v.x) - rx.boresight);
}

/// Mirror of an AoA into the front half-plane [-pi/2, pi/2]. A ULA only
/// observes sin(theta), so this is the angle it actually reports.
inline double fold_to_front(double aoa)
{
    if (aoa > 0.5 * kPi)
        return kPi - aoa;
    if (aoa < -0.5 * kPi)
        return -kPi - aoa;
    return aoa;
}

/// Narrowband ULA response at frequency `freq` with centered element index.
inline CVector steering_vector_at(double freq, const UlaConfig &ula, double theta)
{
    const int m_a = ula.num_elements;
    CVector a(m_a);
    const double phi = kTwoPi * (freq / kSpeedOfLight) * ula.spacing * std::sin(theta);
    const double centre = 0.5 * (m_a - 1);
    for (int m = 0; m < m_a; ++m)
        a[m] = std::polar(1.0, -phi * (m - centre));
    return a;
}

/// Wideband steering response on subcarrier k.
inline CVector steering_vector(const OfdmGrid &grid, const UlaConfig &ula, int k, double theta)
{
    if (k < 0 || k >= grid.num_subcarriers)
        throw std::out_of_range("steering_vector: subcarrier index out of range");
    return steering_vector_at(grid.frequency(k), ula, theta);
}

/// Gradient of bistatic_delay with respect to the scatterer position (s/m).
inline Point2 grad_bistatic_delay(const Point2 &tx, const Point2 &rx, const Point2 &q)
{
    const Point2 ut = q - tx;
    const Point2 ur = q - rx;
    const double dt = norm(ut);
    const double dr = norm(ur);
    if (dt == 0.0 || dr == 0.0)
        throw std::domain_error("grad_bistatic_delay: point coincides with a node");
    return (ut / dt + ur / dr) / kSpeedOfLight;
}

/// Gradient of the receiver AoA with respect to the scatterer position (rad/m).
inline Point2 grad_aoa(const Point2 &rx, const Point2 &q)
{
    const Point2 v = q - rx;
    const double r2 = dot(v, v);
    if (r2 == 0.0)
        throw std::domain_error("grad_aoa: point coincides with receiver");
    return Point2{-v.y, v.x} / r2;
}

inline bool in_fov(const NodePose &rx, const Point2 &p, double half_angle)
{
    if (!(half_angle > 0.0 && half_angle <= kPi))
        throw std::invalid_argument("in_fov: half angle must lie in (0, pi]");
    return std::abs(aoa_boresight(rx, p)) <= half_angle;
}

}  // namespace mslocal

#endif
