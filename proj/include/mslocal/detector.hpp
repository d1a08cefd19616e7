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

#ifndef MSLOCAL_DETECTOR_HPP
#define MSLOCAL_DETECTOR_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include "mslocal/channel.hpp"
#include "mslocal/fft.hpp"
#include "mslocal/geometry.hpp"
#include "mslocal/stats.hpp"

namespace mslocal
{

using RMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Angle x delay power grid of one link. Row g holds |Z[l; theta_g]|^2.
struct RangeAngleMap
{
    RMatrix power;
    std::vector<double> angle_grid;  // radians, strictly increasing in [-pi/2, pi/2]
    double delay_bin = 0.0;          // seconds
    int tx = -1;
    int rx = -1;

    int num_angles() const { return static_cast<int>(power.rows()); }
    int num_delays() const { return static_cast<int>(power.cols()); }
};

struct DetectionCandidate
{
    int angle_index = 0;
    int delay_index = 0;
    double cell_power = 0.0;
};

struct LinkMeasurement
{
    int tx = -1;
    int rx = -1;
    double toa = 0.0;           // s
    double aoa = 0.0;           // rad, in [-pi/2, pi/2]
    double toa_variance = 0.0;  // s^2
    double aoa_variance = 0.0;  // rad^2
    double snr_proxy = 0.0;     // linear
    DetectionCandidate cell;
};

struct CellWindow
{
    int angle = 0;
    int delay = 0;
};

struct DetectorParams
{
    int angle_oversampling = 2;  // N_theta = angle_oversampling * M_a
    CellWindow cfar_guard{1, 2};
    CellWindow cfar_train{2, 8};
    double pfa = 1e-6;
    CellWindow nms_radius{1, 2};
    double snr_floor = 1e-20;  // eps added to the noise-floor median
    int music_blocks = 32;     // subband snapshots for the spatial covariance
    int music_search_points = 64;
    int toa_blocks = 16;       // subbands for the phase-slope fit
    double aoa_variance_cap = 0.25 * kPi * kPi;
};

/// Restricts candidate selection to cells near a predicted (delay, angle).
struct PriorGate
{
    double toa = 0.0;  // s
    double aoa = 0.0;  // rad, front half-plane
    int delay_bins = 3;
    int angle_bins = 3;
};

/// Physically admissible delays for a link, e.g. from the direct path to the
/// farthest corner of the surveillance area. Cells outside are not candidates.
struct DelayWindow
{
    double min_delay = 0.0;  // s
    double max_delay = 0.0;  // s
};

/// Angles uniform in sin(theta) over [-1, 1].
inline std::vector<double> default_angle_grid(int num_angles)
{
    if (num_angles < 1)
        throw std::invalid_argument("angle grid needs at least one point");
    if (num_angles == 1)
        return {0.0};
    std::vector<double> grid(num_angles);
    for (int g = 0; g < num_angles; ++g)
        grid[g] = std::asin(std::clamp(-1.0 + 2.0 * g / (num_angles - 1), -1.0, 1.0));
    return grid;
}

namespace detail
{

// z[k] = (1/sqrt(M)) a(f_k, theta)^H h[k] written into `out`.
inline void beamform_into(const CMatrix &h, double theta, const OfdmGrid &grid, const UlaConfig &ula,
                          std::span<Complex> out)
{
    const int m_a = static_cast<int>(h.cols());
    const double centre = 0.5 * (m_a - 1);
    const double spatial = kTwoPi * ula.spacing * std::sin(theta) / kSpeedOfLight;
    const double norm = 1.0 / std::sqrt(static_cast<double>(m_a));
    for (int k = 0; k < static_cast<int>(h.rows()); ++k)
    {
        const double phi = spatial * grid.frequency(k);
        // conj(a_m) = exp(+j phi (m - centre))
        Complex w = std::polar(norm, -phi * centre);
        const Complex step = std::polar(1.0, phi);
        const Complex *row = h.row(k).data();
        Complex acc = 0.0;
        for (int m = 0; m < m_a; ++m)
        {
            acc += w * row[m];
            w *= step;
        }
        out[k] = acc;
    }
}

inline Complex delay_rotation(double freq, double delay)
{
    const double cycles = freq * delay;
    return std::polar(1.0, kTwoPi * (cycles - std::floor(cycles)));
}

// Contiguous split of [0, n) into `blocks` nearly equal ranges.
inline std::vector<std::array<int, 2>> split_blocks(int n, int blocks)
{
    blocks = std::clamp(blocks, 1, n);
    std::vector<std::array<int, 2>> out;
    out.reserve(blocks);
    for (int b = 0; b < blocks; ++b)
    {
        const int lo = static_cast<int>(static_cast<long long>(n) * b / blocks);
        const int hi = static_cast<int>(static_cast<long long>(n) * (b + 1) / blocks);
        out.push_back({lo, hi});
    }
    return out;
}

inline void check_shape(const ChannelMatrix &h, const OfdmGrid &grid, const UlaConfig &ula)
{
    if (h.num_subcarriers() != grid.num_subcarriers || h.num_antennas() != ula.num_elements)
        throw std::invalid_argument("channel dimensions do not match grid and array");
}

}  // namespace detail

/// Wideband matched combining across the array for look angle `theta`.
inline CVector beamform(const ChannelMatrix &residual, double theta, const OfdmGrid &grid, const UlaConfig &ula)
{
    detail::check_shape(residual, grid, ula);
    CVector z(residual.num_subcarriers());
    detail::beamform_into(residual.entries, theta, grid, ula, std::span<Complex>(z.data(), z.size()));
    return z;
}

/// Range-angle power map: per look angle, beamform then inverse DFT across
/// subcarriers (1/N normalization).
inline RangeAngleMap build_map(const ChannelMatrix &residual, std::span<const double> angle_grid,
                               const OfdmGrid &grid, const UlaConfig &ula)
{
    detail::check_shape(residual, grid, ula);
    if (angle_grid.empty())
        throw std::invalid_argument("build_map: empty angle grid");
    const int n = grid.num_subcarriers;
    RangeAngleMap map;
    map.power.resize(static_cast<Eigen::Index>(angle_grid.size()), n);
    map.angle_grid.assign(angle_grid.begin(), angle_grid.end());
    map.delay_bin = grid.delay_bin();
    InverseDft idft(n);
    std::vector<Complex> z(n), profile(n);
    for (std::size_t g = 0; g < angle_grid.size(); ++g)
    {
        detail::beamform_into(residual.entries, angle_grid[g], grid, ula, z);
        idft.execute(z, profile);
        double *row = map.power.row(static_cast<Eigen::Index>(g)).data();
        for (int l = 0; l < n; ++l)
            row[l] = std::norm(profile[l]);
    }
    return map;
}

/// Two-dimensional cell-averaging CFAR. Windows are clipped at the map edges
/// and the scale factor recomputed for the training cells that remain.
inline std::vector<DetectionCandidate> cfar_detect(const RangeAngleMap &map, CellWindow guard, CellWindow train,
                                                   double pfa)
{
    if (!(pfa > 0.0 && pfa < 1.0))
        throw std::invalid_argument("cfar_detect: pfa must lie in (0, 1)");
    if (guard.angle < 0 || guard.delay < 0 || train.angle < 0 || train.delay < 0)
        throw std::invalid_argument("cfar_detect: negative window size");
    const int rows = map.num_angles();
    const int cols = map.num_delays();
    // Summed-area table with a zero border.
    RMatrix sat = RMatrix::Zero(rows + 1, cols + 1);
    for (int g = 0; g < rows; ++g)
    {
        double run = 0.0;
        for (int l = 0; l < cols; ++l)
        {
            run += map.power(g, l);
            sat(g + 1, l + 1) = sat(g, l + 1) + run;
        }
    }
    const auto box = [&](int g0, int g1, int l0, int l1) {
        g0 = std::max(g0, 0);
        l0 = std::max(l0, 0);
        g1 = std::min(g1, rows - 1);
        l1 = std::min(l1, cols - 1);
        const long long count = static_cast<long long>(g1 - g0 + 1) * (l1 - l0 + 1);
        const double sum = sat(g1 + 1, l1 + 1) - sat(g0, l1 + 1) - sat(g1 + 1, l0) + sat(g0, l0);
        return std::pair<double, long long>{sum, count};
    };
    const int outer_g = guard.angle + train.angle;
    const int outer_l = guard.delay + train.delay;
    std::vector<DetectionCandidate> hits;
    std::vector<double> alpha_cache;
    for (int g = 0; g < rows; ++g)
    {
        for (int l = 0; l < cols; ++l)
        {
            const auto [outer_sum, outer_n] = box(g - outer_g, g + outer_g, l - outer_l, l + outer_l);
            const auto [inner_sum, inner_n] = box(g - guard.angle, g + guard.angle, l - guard.delay, l + guard.delay);
            const long long n_train = outer_n - inner_n;
            if (n_train <= 0)
                throw std::invalid_argument("cfar_detect: window leaves no training cells");
            if (alpha_cache.size() <= static_cast<std::size_t>(n_train))
                alpha_cache.resize(static_cast<std::size_t>(n_train) + 1, -1.0);
            double &alpha = alpha_cache[static_cast<std::size_t>(n_train)];
            if (alpha < 0.0)
                alpha = static_cast<double>(n_train) * (std::pow(pfa, -1.0 / static_cast<double>(n_train)) - 1.0);
            const double mean = std::max(outer_sum - inner_sum, 0.0) / static_cast<double>(n_train);
            const double p = map.power(g, l);
            if (p > alpha * mean && p > 0.0)
                hits.push_back({g, l, p});
        }
    }
    return hits;
}

/// Greedy non-maximum suppression with a rectangular radius. Output is sorted
/// by descending power.
inline std::vector<DetectionCandidate> nms(std::vector<DetectionCandidate> candidates, CellWindow radius)
{
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const auto &a, const auto &b) { return a.cell_power > b.cell_power; });
    std::vector<DetectionCandidate> kept;
    for (const auto &c : candidates)
    {
        const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const auto &k) {
            return std::abs(k.angle_index - c.angle_index) <= radius.angle &&
                   std::abs(k.delay_index - c.delay_index) <= radius.delay;
        });
        if (!suppressed)
            kept.push_back(c);
    }
    return kept;
}

/// Single-source MUSIC refinement around a coarse angle.
///
/// The residual is delay-compensated at the candidate's coarse delay and
/// averaged over `num_blocks` contiguous subbands; the spatial covariance is
/// formed from those subband snapshots (num_blocks == N_sc gives the plain
/// per-subcarrier covariance). The noise subspace is the orthogonal complement
/// of the principal eigenvector, so the pseudo-spectrum peak is the maximizer
/// of |u^H a(theta)|^2 at the centre frequency.
inline double refine_aoa_music(const ChannelMatrix &residual, const DetectionCandidate &cand, double coarse_angle,
                               double search_halfwidth, const OfdmGrid &grid, const UlaConfig &ula,
                               int num_blocks = 32, int search_points = 64)
{
    detail::check_shape(residual, grid, ula);
    const int m_a = ula.num_elements;
    if (m_a < 2)
        throw std::invalid_argument("refine_aoa_music: needs at least two elements");
    const double tau0 = cand.delay_index * grid.delay_bin();
    const auto blocks = detail::split_blocks(grid.num_subcarriers, num_blocks);
    Eigen::MatrixXcd r = Eigen::MatrixXcd::Zero(m_a, m_a);
    Eigen::VectorXcd snap(m_a);
    for (const auto &[lo, hi] : blocks)
    {
        snap.setZero();
        for (int k = lo; k < hi; ++k)
        {
            const Complex rot = detail::delay_rotation(grid.frequency(k), tau0);
            for (int m = 0; m < m_a; ++m)
                snap[m] += residual.entries(k, m) * rot;
        }
        snap /= static_cast<double>(hi - lo);
        r.noalias() += snap * snap.adjoint();
    }
    r /= static_cast<double>(blocks.size());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig(r);
    if (eig.info() != Eigen::Success)
        throw std::runtime_error("refine_aoa_music: eigendecomposition failed");
    if (!(eig.eigenvalues()(m_a - 1) > 0.0))
        throw std::runtime_error("refine_aoa_music: covariance rank < 1");
    const Eigen::VectorXcd u = eig.eigenvectors().col(m_a - 1);

    const double fc = grid.center_frequency();
    const auto score = [&](double theta) {
        return std::norm(u.dot(steering_vector_at(fc, ula, theta)));  // |u^H a|^2
    };
    const double lo = std::max(coarse_angle - search_halfwidth, -0.5 * kPi);
    const double hi = std::min(coarse_angle + search_halfwidth, 0.5 * kPi);
    if (!(hi > lo))
        return std::clamp(coarse_angle, -0.5 * kPi, 0.5 * kPi);
    const int points = std::max(search_points, 3);
    const double step = (hi - lo) / (points - 1);
    int best = 0;
    double best_score = -1.0;
    for (int i = 0; i < points; ++i)
    {
        const double s = score(lo + i * step);
        if (s > best_score)
        {
            best_score = s;
            best = i;
        }
    }
    // Golden-section polish inside the bracketing grid cells.
    double a = lo + std::max(best - 1, 0) * step;
    double b = lo + std::min(best + 1, points - 1) * step;
    const double inv_phi = 0.5 * (std::sqrt(5.0) - 1.0);
    double c = b - inv_phi * (b - a);
    double d = a + inv_phi * (b - a);
    double fc_ = score(c), fd = score(d);
    for (int it = 0; it < 100 && (b - a) > 1e-12; ++it)
    {
        if (fc_ > fd)
        {
            b = d;
            d = c;
            fd = fc_;
            c = b - inv_phi * (b - a);
            fc_ = score(c);
        }
        else
        {
            a = c;
            c = d;
            fc_ = fd;
            d = a + inv_phi * (b - a);
            fd = score(d);
        }
    }
    const double polished = 0.5 * (a + b);
    return score(polished) >= best_score ? polished : lo + best * step;
}

/// ToA refinement from the linear phase trend across subcarriers.
///
/// Beamforms at `aoa`, removes the coarse-delay phase, averages into
/// `num_blocks` subbands, unwraps the subband phases and fits their slope
/// against subcarrier index by least squares weighted with subband power.
/// The result is clamped to one delay bin around the coarse delay.
inline double refine_toa_phase(const ChannelMatrix &residual, double aoa, const DetectionCandidate &cand,
                               const OfdmGrid &grid, const UlaConfig &ula, int num_blocks = 16)
{
    detail::check_shape(residual, grid, ula);
    const int n = grid.num_subcarriers;
    if (n < 2)
        throw std::invalid_argument("refine_toa_phase: needs two subcarriers");
    const double dtau = grid.delay_bin();
    const double tau0 = cand.delay_index * dtau;
    std::vector<Complex> z(n);
    detail::beamform_into(residual.entries, aoa, grid, ula, z);
    const auto blocks = detail::split_blocks(n, std::max(num_blocks, 2));
    std::vector<double> centre, phase, weight;
    double total = 0.0;
    for (const auto &[lo, hi] : blocks)
    {
        Complex acc = 0.0;
        for (int k = lo; k < hi; ++k)
            acc += z[k] * detail::delay_rotation(grid.frequency(k), tau0);
        centre.push_back(0.5 * (lo + hi - 1));
        phase.push_back(std::arg(acc));
        weight.push_back(std::norm(acc));
        total += std::norm(acc);
    }
    if (!(total > 0.0))
        throw std::runtime_error("refine_toa_phase: beamformed response is zero");
    for (std::size_t b = 1; b < phase.size(); ++b)
        phase[b] = phase[b - 1] + wrap_pi(phase[b] - phase[b - 1]);
    double sw = 0.0, sx = 0.0, sy = 0.0;
    for (std::size_t b = 0; b < phase.size(); ++b)
    {
        sw += weight[b];
        sx += weight[b] * centre[b];
        sy += weight[b] * phase[b];
    }
    const double mx = sx / sw, my = sy / sw;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t b = 0; b < phase.size(); ++b)
    {
        sxx += weight[b] * (centre[b] - mx) * (centre[b] - mx);
        sxy += weight[b] * (centre[b] - mx) * (phase[b] - my);
    }
    const double slope = sxx > 0.0 ? sxy / sxx : 0.0;  // rad per subcarrier
    const double tau = tau0 - slope / (kTwoPi * grid.delta_f);
    return std::clamp(tau, tau0 - dtau, tau0 + dtau);
}

/// Detected-cell power over the median map power.
inline double snr_proxy(const RangeAngleMap &map, const DetectionCandidate &cand, double eps)
{
    if (!(eps > 0.0))
        throw std::invalid_argument("snr_proxy: eps must be positive");
    std::vector<double> cells(map.power.data(), map.power.data() + map.power.size());
    return cand.cell_power / (median_inplace(cells) + eps);
}

/// RMS of the mean-removed subcarrier frequencies.
inline double rms_bandwidth(const OfdmGrid &grid)
{
    const double mean = grid.center_frequency();
    double acc = 0.0;
    for (int k = 0; k < grid.num_subcarriers; ++k)
    {
        const double off = grid.frequency(k) - mean;
        acc += off * off;
    }
    return std::sqrt(acc / grid.num_subcarriers);
}

/// ToA variance (2 pi W_rms sqrt(2 gamma))^-2.
inline double toa_variance(double gamma, const OfdmGrid &grid)
{
    if (!(gamma > 0.0))
        throw std::invalid_argument("toa_variance: SNR must be positive");
    const double w = kTwoPi * rms_bandwidth(grid) * std::sqrt(2.0 * gamma);
    return 1.0 / (w * w);
}

/// AoA variance 6 / (N_s gamma (2 pi d / lambda)^2 M (M^2 - 1) cos^2 aoa),
/// capped at `cap` (reached at and beyond endfire).
inline double aoa_variance(double gamma, double aoa, const UlaConfig &ula, double wavelength, int num_snapshots,
                           double cap = 0.25 * kPi * kPi)
{
    const double m = ula.num_elements;
    if (ula.num_elements < 2)
        throw std::domain_error("aoa_variance: model needs at least two elements");
    if (!(gamma > 0.0) || num_snapshots < 1)
        throw std::invalid_argument("aoa_variance: SNR and snapshot count must be positive");
    const double c = std::cos(aoa);
    if (std::abs(aoa) >= 0.5 * kPi || c == 0.0)
        return cap;
    const double k = kTwoPi * ula.spacing / wavelength;
    const double v = 6.0 / (num_snapshots * gamma * k * k * m * (m * m - 1.0) * c * c);
    return std::min(v, cap);
}

namespace detail
{

inline int nearest_angle_index(std::span<const double> grid, double angle)
{
    int best = 0;
    for (int g = 1; g < static_cast<int>(grid.size()); ++g)
        if (std::abs(grid[g] - angle) < std::abs(grid[best] - angle))
            best = g;
    return best;
}

}  // namespace detail

/// Map -> CFAR -> NMS -> candidate choice -> AoA/ToA refinement -> weights.
/// Returns nothing when no candidate survives (or none lies in the gate).
inline std::optional<LinkMeasurement> measure_link(const ChannelMatrix &residual, const OfdmGrid &grid,
                                                   const UlaConfig &ula, const DetectorParams &params,
                                                   const std::optional<PriorGate> &gate = std::nullopt,
                                                   int tx = -1, int rx = -1, RangeAngleMap *map_out = nullptr,
                                                   const std::optional<DelayWindow> &window = std::nullopt)
{
    const auto angles = default_angle_grid(std::max(params.angle_oversampling * ula.num_elements, 2));
    RangeAngleMap map = build_map(residual, angles, grid, ula);
    map.tx = tx;
    map.rx = rx;
    auto hits = cfar_detect(map, params.cfar_guard, params.cfar_train, params.pfa);
    if (window)
    {
        const double lo = std::floor(window->min_delay / map.delay_bin);
        const double hi = std::ceil(window->max_delay / map.delay_bin);
        std::erase_if(hits, [&](const DetectionCandidate &c) { return c.delay_index < lo || c.delay_index > hi; });
    }
    auto kept = nms(std::move(hits), params.nms_radius);
    std::optional<DetectionCandidate> chosen;
    if (gate)
    {
        const int l_pred = static_cast<int>(std::lround(gate->toa / map.delay_bin));
        const int g_pred = detail::nearest_angle_index(angles, gate->aoa);
        for (const auto &c : kept)
            if (std::abs(c.delay_index - l_pred) <= gate->delay_bins &&
                std::abs(c.angle_index - g_pred) <= gate->angle_bins)
            {
                chosen = c;
                break;
            }
    }
    else if (!kept.empty())
        chosen = kept.front();
    if (map_out)
        *map_out = map;
    if (!chosen)
        return std::nullopt;

    const int g0 = chosen->angle_index;
    const double coarse = angles[g0];
    double aoa = coarse;
    if (ula.num_elements >= 2)
    {
        double halfwidth = 0.0;
        if (g0 > 0)
            halfwidth = std::max(halfwidth, angles[g0] - angles[g0 - 1]);
        if (g0 + 1 < static_cast<int>(angles.size()))
            halfwidth = std::max(halfwidth, angles[g0 + 1] - angles[g0]);
        aoa = refine_aoa_music(residual, *chosen, coarse, halfwidth, grid, ula, params.music_blocks,
                               params.music_search_points);
    }
    LinkMeasurement m;
    m.tx = tx;
    m.rx = rx;
    m.cell = *chosen;
    m.aoa = std::clamp(aoa, -0.5 * kPi, 0.5 * kPi);
    m.toa = refine_toa_phase(residual, m.aoa, *chosen, grid, ula, params.toa_blocks);
    m.snr_proxy = snr_proxy(map, *chosen, params.snr_floor);
    m.toa_variance = toa_variance(m.snr_proxy, grid);
    m.aoa_variance = ula.num_elements >= 2 ? aoa_variance(m.snr_proxy, m.aoa, ula, grid.wavelength(),
                                                          grid.num_subcarriers, params.aoa_variance_cap)
                                           : params.aoa_variance_cap;
    return m;
}

/// Dense dump of a map for offline plotting. Layout (native endianness):
///   char[8] "MSRAMAP1", i32 angles, i32 delays, f64 delay_bin, i32 tx, i32 rx,
///   f64[angles] angle grid, f64[angles * delays] power (row-major, angle-major).
inline void write_map(std::ostream &os, const RangeAngleMap &map)
{
    const auto put = [&](auto v) { os.write(reinterpret_cast<const char *>(&v), sizeof(v)); };
    os.write("MSRAMAP1", 8);
    put(static_cast<std::int32_t>(map.num_angles()));
    put(static_cast<std::int32_t>(map.num_delays()));
    put(map.delay_bin);
    put(static_cast<std::int32_t>(map.tx));
    put(static_cast<std::int32_t>(map.rx));
    os.write(reinterpret_cast<const char *>(map.angle_grid.data()),
             static_cast<std::streamsize>(map.angle_grid.size() * sizeof(double)));
    os.write(reinterpret_cast<const char *>(map.power.data()),
             static_cast<std::streamsize>(map.power.size() * sizeof(double)));
    if (!os)
        throw std::runtime_error("failed to write range-angle map");
}

}  // namespace mslocal

#endif
