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

#ifndef MSLOCAL_PLANNER_HPP
#define MSLOCAL_PLANNER_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

#include "mslocal/detector.hpp"
#include "mslocal/geometry.hpp"
#include "mslocal/random.hpp"
#include "mslocal/scene.hpp"

namespace mslocal
{

struct SensingConfig
{
    int tx = -1;
    std::vector<int> rx_set;  // sorted ascending

    friend bool operator==(const SensingConfig &, const SensingConfig &) = default;
    // Tie-break order: lowest tx, then lexicographic rx tuple.
    friend auto operator<=>(const SensingConfig &a, const SensingConfig &b)
    {
        if (auto c = a.tx <=> b.tx; c != 0)
            return c;
        return std::lexicographical_compare_three_way(a.rx_set.begin(), a.rx_set.end(), b.rx_set.begin(),
                                                      b.rx_set.end());
    }

    void validate(int num_nodes, int num_rx) const
    {
        if (tx < 0 || tx >= num_nodes)
            throw std::invalid_argument("config tx out of range");
        if (static_cast<int>(rx_set.size()) != num_rx)
            throw std::invalid_argument("config rx set has wrong cardinality");
        if (!std::is_sorted(rx_set.begin(), rx_set.end()) ||
            std::adjacent_find(rx_set.begin(), rx_set.end()) != rx_set.end())
            throw std::invalid_argument("config rx set must be sorted and unique");
        for (int r : rx_set)
            if (r < 0 || r >= num_nodes || r == tx)
                throw std::invalid_argument("config rx set must exclude tx and stay in range");
    }
};

struct PlannerParams
{
    int num_rx = 1;              // N_r
    int num_samples = 500;       // N_s
    double fov_half_angle = 0.5 * kPi;
    double mu_reg = 1e-6;        // 1/m^2
    std::uint64_t seed = 0;
    std::uint64_t exhaustive_rx_limit = 100000;
    std::uint64_t exhaustive_config_limit = 1000000;
};

/// What the planner knows about the radio: numerology, array, pilot-normalized
/// noise variance and the mean RCS.
struct RadioParams
{
    OfdmGrid grid;
    UlaConfig ula;
    double noise_variance = 0.0;  // sigma_H^2
    double mean_rcs = 1.0;        // m^2
    double aoa_variance_cap = 0.25 * kPi * kPi;
};

struct LinkVariances
{
    double toa = 0.0;  // s^2
    double aoa = 0.0;  // rad^2
};

/// Predicted per-tone SNR of the target echo times the coherent gain of the
/// range-angle map (N_sc * M_a), which is the scale of the detector's SNR proxy.
inline double predicted_snr(const Point2 &q, const NodePose &tx, const NodePose &rx, const RadioParams &radio)
{
    const double alpha = path_amplitude(tx, rx, q, radio.mean_rcs, radio.grid.wavelength());
    return static_cast<double>(radio.grid.num_subcarriers) * radio.ula.num_elements * alpha * alpha /
           radio.noise_variance;
}

/// Variance models of the detector evaluated at a hypothesized target.
/// Outside the receiver's field of view the AoA variance is the cap.
inline LinkVariances predicted_variances(const Point2 &q, const NodePose &tx, const NodePose &rx,
                                         const RadioParams &radio, double fov_half_angle = 0.5 * kPi)
{
    if (!(radio.noise_variance > 0.0))
        throw std::invalid_argument("predicted_variances: noise variance must be positive");
    const double gamma = predicted_snr(q, tx, rx, radio);
    const double theta = aoa_boresight(rx, q);
    LinkVariances v;
    v.toa = toa_variance(gamma, radio.grid);
    if (radio.ula.num_elements < 2 || std::abs(theta) > fov_half_angle || std::abs(theta) >= 0.5 * kPi)
        v.aoa = radio.aoa_variance_cap;
    else
        v.aoa = aoa_variance(gamma, theta, radio.ula, radio.grid.wavelength(), radio.grid.num_subcarriers,
                             radio.aoa_variance_cap);
    return v;
}

/// Fisher information of one link about the target position.
inline Eigen::Matrix2d link_fim(const Point2 &q, const NodePose &tx, const NodePose &rx, const LinkVariances &var)
{
    if (!(var.toa > 0.0 && var.aoa > 0.0))
        throw std::invalid_argument("link_fim: variances must be positive");
    const Point2 gt = grad_bistatic_delay(tx.position, rx.position, q);
    const Point2 ga = grad_aoa(rx.position, q);
    Eigen::Matrix2d f;
    f(0, 0) = gt.x * gt.x / var.toa + ga.x * ga.x / var.aoa;
    f(0, 1) = gt.x * gt.y / var.toa + ga.x * ga.y / var.aoa;
    f(1, 0) = f(0, 1);
    f(1, 1) = gt.y * gt.y / var.toa + ga.y * ga.y / var.aoa;
    return f;
}

/// sqrt(trace((F + mu I)^-1)) via the 2x2 closed form.
inline double peb_from_information(const Eigen::Matrix2d &info, double mu_reg)
{
    if (!(mu_reg > 0.0))
        throw std::invalid_argument("peb: regularization must be positive");
    const double a = info(0, 0) + mu_reg;
    const double d = info(1, 1) + mu_reg;
    const double b = info(0, 1);
    return std::sqrt((a + d) / (a * d - b * b));
}

inline double peb_score(const std::vector<NodePose> &nodes, int tx, std::span<const int> rx_set, const Point2 &q,
                        const RadioParams &radio, const PlannerParams &params)
{
    Eigen::Matrix2d info = Eigen::Matrix2d::Zero();
    for (int r : rx_set)
        info += link_fim(q, nodes.at(tx), nodes.at(r),
                         predicted_variances(q, nodes.at(tx), nodes.at(r), radio, params.fov_half_angle));
    return peb_from_information(info, params.mu_reg);
}

inline std::vector<Point2> sample_points(const Area &area, int count, std::uint64_t seed)
{
    if (count < 1)
        throw std::invalid_argument("sample_points: count must be positive");
    Rng rng = make_rng(seed, Stream::planner, {0});
    std::uniform_real_distribution<double> ux(area.x_min, area.x_max), uy(area.y_min, area.y_max);
    std::vector<Point2> out(count);
    for (auto &p : out)
    {
        p.x = ux(rng);
        p.y = uy(rng);
    }
    return out;
}

inline std::uint64_t binomial(int n, int k)
{
    if (k < 0 || k > n)
        return 0;
    k = std::min(k, n - k);
    long double r = 1.0;
    for (int i = 1; i <= k; ++i)
        r = r * (n - k + i) / i;
    return r > 1.8e19L ? std::numeric_limits<std::uint64_t>::max() : static_cast<std::uint64_t>(r + 0.5L);
}

/// Calls f(subset) for every k-subset of `pool` in lexicographic order.
template <class F> void for_each_subset(std::span<const int> pool, int k, F &&f)
{
    const int n = static_cast<int>(pool.size());
    if (k < 0 || k > n)
        return;
    std::vector<int> idx(k), subset(k);
    std::iota(idx.begin(), idx.end(), 0);
    while (true)
    {
        for (int i = 0; i < k; ++i)
            subset[i] = pool[idx[i]];
        f(std::span<const int>(subset));
        int i = k - 1;
        while (i >= 0 && idx[i] == n - k + i)
            --i;
        if (i < 0)
            return;
        ++idx[i];
        for (int j = i + 1; j < k; ++j)
            idx[j] = idx[j - 1] + 1;
    }
}

namespace detail
{

// coverage[n][s] == 1 iff sample s is in the field of view of node n.
inline std::vector<std::vector<char>> coverage_table(const std::vector<NodePose> &nodes,
                                                     std::span<const Point2> samples, double half_angle)
{
    std::vector<std::vector<char>> cov(nodes.size(), std::vector<char>(samples.size(), 0));
    for (std::size_t n = 0; n < nodes.size(); ++n)
        for (std::size_t s = 0; s < samples.size(); ++s)
            if (!(samples[s] == nodes[n].position))
                cov[n][s] = in_fov(nodes[n], samples[s], half_angle) ? 1 : 0;
    return cov;
}

inline int union_count(const std::vector<std::vector<char>> &cov, std::span<const int> subset, std::size_t samples)
{
    int count = 0;
    for (std::size_t s = 0; s < samples; ++s)
        for (int n : subset)
            if (cov[n][s])
            {
                ++count;
                break;
            }
    return count;
}

}  // namespace detail

/// Number of samples seen by at least one member of `rx_set`.
inline int fov_coverage(const std::vector<NodePose> &nodes, std::span<const int> rx_set,
                        std::span<const Point2> samples, double half_angle)
{
    const auto cov = detail::coverage_table(nodes, samples, half_angle);
    return detail::union_count(cov, rx_set, samples.size());
}

/// Greedy max-coverage: repeatedly add the node with the largest marginal gain
/// (lowest id on ties).
inline std::vector<int> sfi_select_rx_greedy(const std::vector<NodePose> &nodes, std::span<const Point2> samples,
                                             const PlannerParams &params)
{
    const auto cov = detail::coverage_table(nodes, samples, params.fov_half_angle);
    std::vector<char> covered(samples.size(), 0);
    std::vector<int> chosen;
    for (int round = 0; round < params.num_rx; ++round)
    {
        int best = -1, best_gain = -1;
        for (int n = 0; n < static_cast<int>(nodes.size()); ++n)
        {
            if (std::find(chosen.begin(), chosen.end(), n) != chosen.end())
                continue;
            int gain = 0;
            for (std::size_t s = 0; s < samples.size(); ++s)
                gain += (cov[n][s] && !covered[s]) ? 1 : 0;
            if (gain > best_gain)
            {
                best_gain = gain;
                best = n;
            }
        }
        chosen.push_back(best);
        for (std::size_t s = 0; s < samples.size(); ++s)
            covered[s] = covered[s] || cov[best][s];
    }
    std::sort(chosen.begin(), chosen.end());
    return chosen;
}

/// Receiver subset of size N_r with maximal field-of-view coverage of the
/// samples. Exhaustive when C(N, N_r) is within the limit, greedy otherwise.
inline std::vector<int> sfi_select_rx(const std::vector<NodePose> &nodes, std::span<const Point2> samples,
                                      const PlannerParams &params)
{
    const int n = static_cast<int>(nodes.size());
    if (params.num_rx < 1 || params.num_rx >= n)
        throw std::invalid_argument("sfi_select_rx: need 1 <= N_r < N");
    if (binomial(n, params.num_rx) > params.exhaustive_rx_limit)
        return sfi_select_rx_greedy(nodes, samples, params);
    const auto cov = detail::coverage_table(nodes, samples, params.fov_half_angle);
    std::vector<int> pool(n);
    std::iota(pool.begin(), pool.end(), 0);
    std::vector<int> best;
    int best_count = -1;
    for_each_subset(std::span<const int>(pool), params.num_rx, [&](std::span<const int> subset) {
        const int c = detail::union_count(cov, subset, samples.size());
        if (c > best_count)
        {
            best_count = c;
            best.assign(subset.begin(), subset.end());
        }
    });
    return best;
}

inline std::vector<int> sfi_select_rx(const std::vector<NodePose> &nodes, const Area &area,
                                      const PlannerParams &params)
{
    const auto samples = sample_points(area, params.num_samples, params.seed);
    return sfi_select_rx(nodes, samples, params);
}

namespace detail
{

// Scores within this relative margin count as ties.
inline bool strictly_better(double score, double best)
{
    return score < best * (1.0 - 1e-12);
}

}  // namespace detail

/// Transmitter outside `rx_set` minimizing the mean PEB over the samples.
inline int sfi_select_tx(const std::vector<NodePose> &nodes, std::span<const int> rx_set,
                         std::span<const Point2> samples, const RadioParams &radio, const PlannerParams &params)
{
    int best = -1;
    double best_score = std::numeric_limits<double>::infinity();
    for (int i = 0; i < static_cast<int>(nodes.size()); ++i)
    {
        if (std::find(rx_set.begin(), rx_set.end(), i) != rx_set.end())
            continue;
        double sum = 0.0;
        int used = 0;
        for (const auto &q : samples)
        {
            bool coincident = q == nodes[i].position;
            for (int r : rx_set)
                coincident = coincident || q == nodes[r].position;
            if (coincident)
                continue;
            sum += peb_score(nodes, i, rx_set, q, radio, params);
            ++used;
        }
        const double mean = used > 0 ? sum / used : std::numeric_limits<double>::infinity();
        if (best < 0 || detail::strictly_better(mean, best_score))
        {
            best = i;
            best_score = mean;
        }
    }
    if (best < 0)
        throw std::invalid_argument("sfi_select_tx: no candidate transmitter");
    return best;
}

/// Initial configuration: coverage-optimal receivers, then the PEB-optimal
/// transmitter over the same samples.
inline SensingConfig sfi_config(const std::vector<NodePose> &nodes, std::span<const Point2> samples,
                                const RadioParams &radio, const PlannerParams &params)
{
    SensingConfig cfg;
    cfg.rx_set = sfi_select_rx(nodes, samples, params);
    cfg.tx = sfi_select_tx(nodes, cfg.rx_set, samples, radio, params);
    return cfg;
}

inline SensingConfig sfi_config(const std::vector<NodePose> &nodes, const Area &area, const RadioParams &radio,
                                const PlannerParams &params)
{
    return sfi_config(nodes, sample_points(area, params.num_samples, params.seed), radio, params);
}

/// Drops the samples that `cfg` should have detected: inside some receiver's
/// field of view with predicted SNR of at least `min_snr`. Used after a
/// configuration saw nothing.
inline void prune_explored(std::vector<Point2> &samples, const std::vector<NodePose> &nodes,
                           const SensingConfig &cfg, const RadioParams &radio, const PlannerParams &params,
                           double min_snr)
{
    std::erase_if(samples, [&](const Point2 &q) {
        for (int r : cfg.rx_set)
        {
            if (q == nodes[r].position || q == nodes[cfg.tx].position)
                continue;
            if (in_fov(nodes[r], q, params.fov_half_angle) && predicted_snr(q, nodes[cfg.tx], nodes[r], radio) >= min_snr)
                return true;
        }
        return false;
    });
}

struct ScoredConfig
{
    SensingConfig config;
    double peb = std::numeric_limits<double>::infinity();
};

namespace detail
{

// Link information for every ordered (tx, rx) pair at q.
inline std::vector<Eigen::Matrix2d> pair_information(const std::vector<NodePose> &nodes, const Point2 &q,
                                                     const RadioParams &radio, const PlannerParams &params)
{
    const int n = static_cast<int>(nodes.size());
    std::vector<Eigen::Matrix2d> out(static_cast<std::size_t>(n) * n, Eigen::Matrix2d::Zero());
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (i != j)
                out[static_cast<std::size_t>(i) * n + j] =
                    link_fim(q, nodes[i], nodes[j], predicted_variances(q, nodes[i], nodes[j], radio,
                                                                        params.fov_half_angle));
    return out;
}

}  // namespace detail

/// Minimum-PEB configuration at q. Exhaustive over every transmitter and
/// receiver subset when the count is within the limit; otherwise each
/// transmitter grows its receiver set greedily. Ties go to the lowest tx, then
/// the lexicographically smallest receiver tuple. Configurations listed in
/// `excluded` are never returned (unless nothing else remains).
inline ScoredConfig select_config_scored(const Point2 &q, const std::vector<NodePose> &nodes,
                                         const RadioParams &radio, const PlannerParams &params,
                                         std::span<const SensingConfig> excluded = {})
{
    const int n = static_cast<int>(nodes.size());
    if (params.num_rx < 1 || params.num_rx >= n)
        throw std::invalid_argument("select_config: need 1 <= N_r < N");
    for (const auto &node : nodes)
        if (node.position == q)
            throw std::domain_error("select_config: estimate coincides with a node");
    const auto info = detail::pair_information(nodes, q, radio, params);
    const auto fim = [&](int i, int j) -> const Eigen::Matrix2d & {
        return info[static_cast<std::size_t>(i) * n + j];
    };
    ScoredConfig best;
    const bool exhaustive =
        static_cast<long double>(n) * binomial(n - 1, params.num_rx) <= params.exhaustive_config_limit;
    std::vector<int> pool;
    for (int i = 0; i < n; ++i)
    {
        pool.clear();
        for (int j = 0; j < n; ++j)
            if (j != i)
                pool.push_back(j);
        const auto consider = [&](std::span<const int> subset, double score) {
            const bool skip = std::any_of(excluded.begin(), excluded.end(), [&](const SensingConfig &e) {
                return e.tx == i && std::equal(e.rx_set.begin(), e.rx_set.end(), subset.begin(), subset.end());
            });
            if (skip)
                return;
            if (best.config.tx < 0 || detail::strictly_better(score, best.peb))
            {
                best.config.tx = i;
                best.config.rx_set.assign(subset.begin(), subset.end());
                best.peb = score;
            }
        };
        if (exhaustive)
        {
            for_each_subset(std::span<const int>(pool), params.num_rx, [&](std::span<const int> subset) {
                Eigen::Matrix2d sum = Eigen::Matrix2d::Zero();
                for (int j : subset)
                    sum += fim(i, j);
                consider(subset, peb_from_information(sum, params.mu_reg));
            });
        }
        else
        {
            std::vector<int> chosen;
            Eigen::Matrix2d sum = Eigen::Matrix2d::Zero();
            double score = 0.0;
            for (int round = 0; round < params.num_rx; ++round)
            {
                int pick = -1;
                double pick_score = std::numeric_limits<double>::infinity();
                for (int j : pool)
                {
                    if (std::find(chosen.begin(), chosen.end(), j) != chosen.end())
                        continue;
                    const double s = peb_from_information(sum + fim(i, j), params.mu_reg);
                    if (pick < 0 || detail::strictly_better(s, pick_score))
                    {
                        pick = j;
                        pick_score = s;
                    }
                }
                chosen.push_back(pick);
                sum += fim(i, pick);
                score = pick_score;
            }
            std::sort(chosen.begin(), chosen.end());
            consider(chosen, score);
        }
    }
    if (best.config.tx < 0 && !excluded.empty())
        return select_config_scored(q, nodes, radio, params);
    return best;
}

inline SensingConfig select_config(const Point2 &q, const std::vector<NodePose> &nodes, const RadioParams &radio,
                                   const PlannerParams &params, std::span<const SensingConfig> excluded = {})
{
    return select_config_scored(q, nodes, radio, params, excluded).config;
}

/// Uniformly random configuration (used by baselines).
inline SensingConfig random_config(int num_nodes, int num_rx, Rng &rng)
{
    if (num_rx < 1 || num_rx >= num_nodes)
        throw std::invalid_argument("random_config: need 1 <= N_r < N");
    std::vector<int> ids(num_nodes);
    std::iota(ids.begin(), ids.end(), 0);
    // Partial Fisher-Yates with explicit index draws so the sequence does not
    // depend on the standard library's shuffle.
    for (int k = 0; k <= num_rx; ++k)
    {
        const auto span = static_cast<std::uint64_t>(num_nodes - k);
        const int pick = k + static_cast<int>(rng() % span);
        std::swap(ids[k], ids[pick]);
    }
    SensingConfig cfg;
    cfg.tx = ids[0];
    cfg.rx_set.assign(ids.begin() + 1, ids.begin() + 1 + num_rx);
    std::sort(cfg.rx_set.begin(), cfg.rx_set.end());
    return cfg;
}

}  // namespace mslocal

#endif
