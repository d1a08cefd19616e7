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

#ifndef MSLOCAL_FUSION_HPP
#define MSLOCAL_FUSION_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "mslocal/detector.hpp"
#include "mslocal/geometry.hpp"
#include "mslocal/scene.hpp"

namespace mslocal
{

/// Weighted ToA/AoA localization problem for one sensing iteration.
/// toa_set / aoa_set hold receiver node ids whose measurement contributes the
/// respective residual.
struct FusionProblem
{
    std::vector<NodePose> nodes;
    std::vector<LinkMeasurement> measurements;
    std::vector<int> toa_set;
    std::vector<int> aoa_set;
    Point2 initial_guess;

    void validate() const
    {
        const auto check_set = [&](const std::vector<int> &set) {
            for (int id : set)
            {
                const auto it = std::find_if(measurements.begin(), measurements.end(),
                                             [&](const LinkMeasurement &m) { return m.rx == id; });
                if (it == measurements.end())
                    throw std::invalid_argument("admitted receiver has no measurement");
            }
        };
        check_set(toa_set);
        check_set(aoa_set);
        for (const auto &m : measurements)
        {
            if (m.tx < 0 || m.rx < 0 || m.tx >= static_cast<int>(nodes.size()) ||
                m.rx >= static_cast<int>(nodes.size()))
                throw std::invalid_argument("measurement references unknown node");
            if (!(m.toa_variance > 0.0 && m.aoa_variance > 0.0))
                throw std::invalid_argument("measurement variances must be positive");
        }
    }

    std::size_t num_residuals() const { return toa_set.size() + aoa_set.size(); }
};

/// Builds a problem from raw detector output, admitting a link (both ToA and
/// AoA) iff its SNR proxy reaches `min_snr`.
inline FusionProblem make_problem(std::vector<NodePose> nodes, std::span<const LinkMeasurement> measurements,
                                  double min_snr, Point2 initial_guess)
{
    FusionProblem p;
    p.nodes = std::move(nodes);
    p.initial_guess = initial_guess;
    for (const auto &m : measurements)
    {
        if (!(m.snr_proxy >= min_snr))
            continue;
        p.measurements.push_back(m);
        p.toa_set.push_back(m.rx);
        p.aoa_set.push_back(m.rx);
    }
    return p;
}

/// Normalized residuals and their Jacobian rows (d r / d q) at q.
struct Linearization
{
    std::vector<double> residuals;
    std::vector<Point2> rows;
};

namespace detail
{

inline const LinkMeasurement &measurement_for(const FusionProblem &prob, int rx)
{
    for (const auto &m : prob.measurements)
        if (m.rx == rx)
            return m;
    throw std::invalid_argument("admitted receiver has no measurement");
}

}  // namespace detail

inline Linearization linearize(const Point2 &q, const FusionProblem &prob)
{
    Linearization lin;
    lin.residuals.reserve(prob.num_residuals());
    lin.rows.reserve(prob.num_residuals());
    for (int id : prob.toa_set)
    {
        const auto &m = detail::measurement_for(prob, id);
        const auto &tx = prob.nodes.at(m.tx).position;
        const auto &rx = prob.nodes.at(m.rx).position;
        const double s = std::sqrt(m.toa_variance);
        lin.residuals.push_back((m.toa - bistatic_delay(tx, rx, q)) / s);
        lin.rows.push_back(-1.0 / s * grad_bistatic_delay(tx, rx, q));
    }
    for (int id : prob.aoa_set)
    {
        const auto &m = detail::measurement_for(prob, id);
        const auto &rx = prob.nodes.at(m.rx);
        const double s = std::sqrt(m.aoa_variance);
        lin.residuals.push_back(wrap_pi(m.aoa - aoa_boresight(rx, q)) / s);
        lin.rows.push_back(-1.0 / s * grad_aoa(rx.position, q));
    }
    return lin;
}

/// Weighted least-squares objective. Throws std::domain_error when q
/// coincides with a node used by an admitted link.
inline double wls_cost(const Point2 &q, const FusionProblem &prob)
{
    const auto lin = linearize(q, prob);
    double c = 0.0;
    for (double r : lin.residuals)
        c += r * r;
    return c;
}

/// One damped Gauss-Newton update q - (J^T J + damping I)^-1 J^T r.
inline Point2 gauss_newton_step(const Point2 &q, const FusionProblem &prob, double damping)
{
    if (damping < 0.0)
        throw std::invalid_argument("damping must be non-negative");
    const auto lin = linearize(q, prob);
    double a = damping, b = 0.0, d = damping, gx = 0.0, gy = 0.0;
    for (std::size_t i = 0; i < lin.rows.size(); ++i)
    {
        const Point2 &j = lin.rows[i];
        a += j.x * j.x;
        b += j.x * j.y;
        d += j.y * j.y;
        gx += j.x * lin.residuals[i];
        gy += j.y * lin.residuals[i];
    }
    const double det = a * d - b * b;
    if (!(std::abs(det) > 0.0) || !std::isfinite(det))
        throw std::runtime_error("gauss_newton_step: singular normal matrix");
    const Point2 delta{(d * gx - b * gy) / det, (a * gy - b * gx) / det};
    return q - delta;
}

struct SolverOptions
{
    int max_iterations = 50;       // L_max
    double tolerance = 1e-4;       // eps, meters
    double initial_damping = 1e-6;
    double min_damping = 1e-12;
    double damping_factor = 10.0;
    int max_rejections = 30;       // per outer iteration
};

struct Estimate
{
    Point2 position;
    double objective = 0.0;
    int iterations_used = 0;
    bool converged = false;
};

namespace detail
{

inline double cost_or_inf(const Point2 &q, const FusionProblem &prob)
{
    if (!is_finite(q))
        return std::numeric_limits<double>::infinity();
    try
    {
        return wls_cost(q, prob);
    }
    catch (const std::domain_error &)
    {
        return std::numeric_limits<double>::infinity();
    }
}

}  // namespace detail

/// Levenberg-damped Gauss-Newton from prob.initial_guess. A step that raises
/// the cost is rejected and retried with more damping; the final cost never
/// exceeds the starting cost.
inline Estimate solve_wls(const FusionProblem &prob, const SolverOptions &opt = {})
{
    Estimate est;
    est.position = prob.initial_guess;
    est.objective = detail::cost_or_inf(est.position, prob);
    if (prob.num_residuals() < 2)
        return est;
    double mu = opt.initial_damping;
    for (int it = 0; it < opt.max_iterations; ++it)
    {
        bool accepted = false;
        double step_norm = std::numeric_limits<double>::infinity();
        for (int rej = 0; rej <= opt.max_rejections; ++rej)
        {
            Point2 next;
            try
            {
                next = gauss_newton_step(est.position, prob, mu);
            }
            catch (const std::exception &)
            {
                mu = std::max(mu, opt.min_damping) * opt.damping_factor;
                continue;
            }
            step_norm = distance(next, est.position);
            const double c = detail::cost_or_inf(next, prob);
            if (c <= est.objective)
            {
                est.position = next;
                est.objective = c;
                mu = std::max(mu / opt.damping_factor, opt.min_damping);
                accepted = true;
                break;
            }
            if (step_norm <= opt.tolerance)
                break;
            mu *= opt.damping_factor;
        }
        if (accepted)
            ++est.iterations_used;
        // A rejected step that has shrunk below tolerance means no descent is
        // left at this resolution.
        if (step_norm <= opt.tolerance)
        {
            est.converged = true;
            break;
        }
        if (!accepted)
            break;
    }
    // Rank check: a single informative direction cannot pin down q.
    if (est.converged)
    {
        const auto lin = linearize(est.position, prob);
        double a = 0.0, b = 0.0, d = 0.0;
        for (const auto &j : lin.rows)
        {
            a += j.x * j.x;
            b += j.x * j.y;
            d += j.y * j.y;
        }
        if (!(a * d - b * b > 1e-12 * (a + d) * (a + d)))
            est.converged = false;
    }
    return est;
}

/// Grid search for the Gauss-Newton starting point. Rows run along y, columns
/// along x; the first strict minimum in (row, column) order wins.
inline Point2 coarse_init(const FusionProblem &prob, const Area &area, double grid_step = 0.0)
{
    if (!(area.width() > 0.0 && area.height() > 0.0))
        throw std::invalid_argument("coarse_init: empty area");
    const double step = grid_step > 0.0 ? grid_step : area.width() / 50.0;
    const int cols = static_cast<int>(std::floor(area.width() / step + 1e-9)) + 1;
    const int rows = static_cast<int>(std::floor(area.height() / step + 1e-9)) + 1;
    Point2 best = area.centre();
    double best_cost = std::numeric_limits<double>::infinity();
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
        {
            const Point2 p{area.x_min + c * step, area.y_min + r * step};
            const double v = detail::cost_or_inf(p, prob);
            if (v < best_cost)
            {
                best_cost = v;
                best = p;
            }
        }
    return best;
}

}  // namespace mslocal

#endif
