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

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "mslocal/fusion.hpp"

using namespace mslocal;

namespace
{

constexpr double kSigmaToa = 1e-10;  // s, about 3 cm of bistatic range
constexpr double kSigmaAoa = 1e-2;   // rad

struct Instance
{
    std::vector<NodePose> nodes;
    Point2 truth;
};

Instance random_instance(std::mt19937_64 &rng, int num_nodes)
{
    std::uniform_real_distribution<double> u(0.0, 200.0), ang(0.0, kTwoPi);
    Instance inst;
    for (int i = 0; i < num_nodes; ++i)
    {
        NodePose n;
        n.position = {u(rng), u(rng)};
        n.boresight = wrap_two_pi(ang(rng));
        n.location_id = i;
        inst.nodes.push_back(n);
    }
    while (true)
    {
        inst.truth = {u(rng), u(rng)};
        bool clear = true;
        for (const auto &n : inst.nodes)
            clear = clear && distance(n.position, inst.truth) > 5.0;
        if (clear)
            return inst;
    }
}

LinkMeasurement exact(const Instance &inst, int tx, int rx, double var_toa = kSigmaToa * kSigmaToa,
                      double var_aoa = kSigmaAoa * kSigmaAoa)
{
    LinkMeasurement m;
    m.tx = tx;
    m.rx = rx;
    m.toa = bistatic_delay(inst.nodes[tx].position, inst.nodes[rx].position, inst.truth);
    m.aoa = aoa_boresight(inst.nodes[rx], inst.truth);
    m.toa_variance = var_toa;
    m.aoa_variance = var_aoa;
    m.snr_proxy = 100.0;
    return m;
}

// Transmitter 0 and receivers 1..num_rx, both residual types admitted.
FusionProblem full_problem(const Instance &inst, int num_rx, Point2 guess)
{
    std::vector<LinkMeasurement> ms;
    for (int r = 1; r <= num_rx; ++r)
        ms.push_back(exact(inst, 0, r));
    return make_problem(inst.nodes, ms, 2.0, guess);
}

std::vector<double> residual_vector(const Point2 &q, const FusionProblem &prob)
{
    return linearize(q, prob).residuals;
}

}  // namespace

TEST(WlsCost, Examples)
{
    std::mt19937_64 rng(1);
    const Instance inst = random_instance(rng, 4);
    const auto prob = full_problem(inst, 3, {});
    EXPECT_EQ(wls_cost(inst.truth, prob), 0.0);

    FusionProblem one;
    one.nodes = inst.nodes;
    LinkMeasurement m = exact(inst, 0, 1);
    m.toa += kSigmaToa;
    one.measurements = {m};
    one.toa_set = {1};
    EXPECT_NEAR(wls_cost(inst.truth, one), 1.0, 1e-9);

    FusionProblem ang;
    ang.nodes = inst.nodes;
    LinkMeasurement a = exact(inst, 0, 2);
    const double delta = 0.01;
    a.aoa += kPi + delta;
    ang.measurements = {a};
    ang.aoa_set = {2};
    const double wrapped = -kPi + delta;
    EXPECT_NEAR(wls_cost(inst.truth, ang), wrapped * wrapped / (kSigmaAoa * kSigmaAoa), 1e-6);

    EXPECT_THROW(wls_cost(inst.nodes[1].position, prob), std::domain_error);
}

TEST(MakeProblem, AdmitsOnSnr)
{
    std::mt19937_64 rng(2);
    const Instance inst = random_instance(rng, 4);
    std::vector<LinkMeasurement> ms{exact(inst, 0, 1), exact(inst, 0, 2), exact(inst, 0, 3)};
    ms[1].snr_proxy = 1.99;
    ms[2].snr_proxy = 2.0;
    const auto prob = make_problem(inst.nodes, ms, 2.0, {});
    EXPECT_EQ(prob.toa_set, (std::vector<int>{1, 3}));
    EXPECT_EQ(prob.aoa_set, (std::vector<int>{1, 3}));
    EXPECT_EQ(prob.num_residuals(), 4u);
    EXPECT_NO_THROW(prob.validate());
    FusionProblem broken = prob;
    broken.toa_set.push_back(2);
    EXPECT_THROW(broken.validate(), std::invalid_argument);
}

TEST(GaussNewton, ZeroStepAtSolution)
{
    std::mt19937_64 rng(3);
    const Instance inst = random_instance(rng, 4);
    const auto prob = full_problem(inst, 3, {});
    EXPECT_EQ(gauss_newton_step(inst.truth, prob, 0.0), inst.truth);
    EXPECT_EQ(gauss_newton_step(inst.truth, prob, 1e-3), inst.truth);
}

TEST(GaussNewton, PureToaStepAlongGradient)
{
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 20; ++trial)
    {
        const Instance inst = random_instance(rng, 2);
        FusionProblem prob;
        prob.nodes = inst.nodes;
        prob.measurements = {exact(inst, 0, 1)};
        prob.toa_set = {1};
        const Point2 q = inst.truth + Point2{3.0, -2.0};
        const Point2 step = gauss_newton_step(q, prob, 1e-6) - q;
        const Point2 g = grad_bistatic_delay(inst.nodes[0].position, inst.nodes[1].position, q);
        const double cross = step.x * g.y - step.y * g.x;
        EXPECT_LT(std::abs(cross) / (norm(step) * norm(g)), 1e-6);
    }
}

TEST(GaussNewton, QuadraticLocalConvergence)
{
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 10; ++trial)
    {
        const Instance inst = random_instance(rng, 4);
        const auto prob = full_problem(inst, 3, {});
        Point2 q = inst.truth + Point2{0.8, -0.6};
        std::vector<double> err{distance(q, inst.truth)};
        for (int it = 0; it < 8 && err.back() > 1e-9; ++it)
        {
            q = gauss_newton_step(q, prob, 0.0);
            err.push_back(distance(q, inst.truth));
        }
        ASSERT_LT(err.back(), 1e-9);
        for (std::size_t i = 1; i < err.size(); ++i)
            if (err[i - 1] > 1e-6)
                EXPECT_LT(err[i] / (err[i - 1] * err[i - 1]), 1.0) << "iteration " << i;
    }
}

TEST(SolveWls, NoiselessTwoReceivers)
{
    std::mt19937_64 rng(6);
    const Area area{0, 0, 200, 200};
    for (int trial = 0; trial < 50; ++trial)
    {
        const Instance inst = random_instance(rng, 3);
        auto prob = full_problem(inst, 2, {});
        prob.initial_guess = coarse_init(prob, area);
        const Estimate est = solve_wls(prob);
        EXPECT_LT(distance(est.position, inst.truth), 1e-6) << "trial " << trial;
        EXPECT_TRUE(est.converged);
        EXPECT_GE(est.objective, 0.0);
    }
}

TEST(SolveWls, SingleAoaIsUnobservable)
{
    std::mt19937_64 rng(7);
    const Instance inst = random_instance(rng, 2);
    FusionProblem prob;
    prob.nodes = inst.nodes;
    prob.measurements = {exact(inst, 0, 1)};
    prob.aoa_set = {1};
    prob.initial_guess = inst.truth + Point2{4.0, 4.0};
    EXPECT_FALSE(solve_wls(prob).converged);

    FusionProblem toa_only;
    toa_only.nodes = inst.nodes;
    toa_only.measurements = {exact(inst, 0, 1)};
    toa_only.toa_set = {1};
    toa_only.initial_guess = inst.truth + Point2{1.0, 0.0};
    EXPECT_FALSE(solve_wls(toa_only).converged);
}

TEST(SolveWls, StartAtSolution)
{
    std::mt19937_64 rng(8);
    const Instance inst = random_instance(rng, 3);
    const auto prob = full_problem(inst, 2, inst.truth);
    const Estimate est = solve_wls(prob);
    EXPECT_LE(est.iterations_used, 1);
    EXPECT_TRUE(est.converged);
    EXPECT_EQ(est.position, inst.truth);
}

TEST(SolveWls, NeverIncreasesCost)
{
    std::mt19937_64 rng(9);
    std::normal_distribution<double> n01(0.0, 1.0);
    std::uniform_real_distribution<double> u(0.0, 200.0);
    for (int trial = 0; trial < 200; ++trial)
    {
        const Instance inst = random_instance(rng, 4);
        std::vector<LinkMeasurement> ms;
        for (int r = 1; r <= 1 + trial % 3; ++r)
        {
            auto m = exact(inst, 0, r, 1e-16, 1e-2);
            m.toa += 1e-8 * n01(rng);
            m.aoa += 0.3 * n01(rng);
            ms.push_back(m);
        }
        const Point2 start{u(rng), u(rng)};
        const auto prob = make_problem(inst.nodes, ms, 2.0, start);
        double start_cost;
        try
        {
            start_cost = wls_cost(start, prob);
        }
        catch (const std::domain_error &)
        {
            continue;
        }
        const Estimate est = solve_wls(prob);
        EXPECT_LE(est.objective, start_cost);
        EXPECT_NEAR(est.objective, wls_cost(est.position, prob), 1e-9 * std::max(1.0, est.objective));
    }
}

TEST(Jacobian, MatchesFiniteDifferences)
{
    std::mt19937_64 rng(10);
    const double h = 1e-4;
    int checked = 0;
    for (int trial = 0; trial < 100; ++trial)
    {
        const Instance inst = random_instance(rng, 4);
        // Evaluate away from the truth so residuals are nonzero.
        const Point2 q = inst.truth + Point2{2.0, -1.5};
        const auto prob = full_problem(inst, 3, {});
        bool near_wrap = false;
        for (const auto &m : prob.measurements)
            near_wrap = near_wrap || std::abs(wrap_pi(m.aoa - aoa_boresight(prob.nodes[m.rx], q))) > 3.0;
        if (near_wrap)
            continue;
        const auto lin = linearize(q, prob);
        const auto rxp = residual_vector(q + Point2{h, 0}, prob), rxm = residual_vector(q - Point2{h, 0}, prob);
        const auto ryp = residual_vector(q + Point2{0, h}, prob), rym = residual_vector(q - Point2{0, h}, prob);
        for (std::size_t i = 0; i < lin.rows.size(); ++i)
        {
            const Point2 fd{(rxp[i] - rxm[i]) / (2 * h), (ryp[i] - rym[i]) / (2 * h)};
            EXPECT_LT(norm(fd - lin.rows[i]) / norm(lin.rows[i]), 1e-5);
        }
        ++checked;
    }
    EXPECT_GT(checked, 90);
}

TEST(SolveWls, VarianceScalingKeepsArgmin)
{
    std::mt19937_64 rng(11);
    std::normal_distribution<double> n01(0.0, 1.0);
    for (int trial = 0; trial < 20; ++trial)
    {
        const Instance inst = random_instance(rng, 4);
        std::vector<LinkMeasurement> ms;
        for (int r = 1; r <= 3; ++r)
        {
            auto m = exact(inst, 0, r);
            m.toa += kSigmaToa * n01(rng);
            m.aoa += kSigmaAoa * n01(rng);
            ms.push_back(m);
        }
        auto scaled = ms;
        for (auto &m : scaled)
        {
            m.toa_variance *= 37.0;
            m.aoa_variance *= 37.0;
        }
        const Point2 start = inst.truth + Point2{1.0, 1.0};
        const Estimate a = solve_wls(make_problem(inst.nodes, ms, 2.0, start));
        const Estimate b = solve_wls(make_problem(inst.nodes, scaled, 2.0, start));
        EXPECT_LT(distance(a.position, b.position), 1e-6);
        EXPECT_NEAR(a.objective / b.objective, 37.0, 1e-3 * 37.0);
    }
}

TEST(SolveWls, ErrorShrinksWithMeasurementNoise)
{
    std::mt19937_64 rng(12);
    const Instance inst = random_instance(rng, 4);
    const auto rmse = [&](double scale, std::uint64_t seed) {
        std::mt19937_64 nrng(seed);
        std::normal_distribution<double> n01(0.0, 1.0);
        double acc = 0.0;
        for (int trial = 0; trial < 200; ++trial)
        {
            std::vector<LinkMeasurement> ms;
            for (int r = 1; r <= 3; ++r)
            {
                auto m = exact(inst, 0, r, scale * 1e-18, scale * 1e-4);
                m.toa += std::sqrt(m.toa_variance) * n01(nrng);
                m.aoa += std::sqrt(m.aoa_variance) * n01(nrng);
                ms.push_back(m);
            }
            const Estimate est = solve_wls(make_problem(inst.nodes, ms, 2.0, inst.truth));
            acc += std::pow(distance(est.position, inst.truth), 2);
        }
        return std::sqrt(acc / 200.0);
    };
    const double ratio = rmse(1.0, 100) / rmse(0.01, 200);
    EXPECT_GT(ratio, 5.0);
    EXPECT_LT(ratio, 15.0);
}

TEST(CoarseInit, GridArgmin)
{
    std::mt19937_64 rng(13);
    const Area area{0, 0, 200, 200};
    // Truth on a grid node (step 4 m).
    Instance inst = random_instance(rng, 4);
    inst.truth = {124.0, 36.0};
    for (const auto &n : inst.nodes)
        ASSERT_GT(distance(n.position, inst.truth), 1.0);
    const auto on_grid = full_problem(inst, 3, {});
    EXPECT_EQ(coarse_init(on_grid, area), inst.truth);

    // Roughly isotropic weighting: 0.3 m of range against 3 mrad of angle.
    for (int trial = 0; trial < 20; ++trial)
    {
        const Instance other = random_instance(rng, 4);
        std::vector<LinkMeasurement> ms;
        for (int r = 1; r <= 3; ++r)
            ms.push_back(exact(other, 0, r, 1e-18, 9e-6));
        const auto prob = make_problem(other.nodes, ms, 2.0, {});
        const Point2 p = coarse_init(prob, area);
        EXPECT_LE(std::abs(p.x - other.truth.x), 4.0 + 1e-9);
        EXPECT_LE(std::abs(p.y - other.truth.y), 4.0 + 1e-9);
    }
}

TEST(CoarseInit, MatchesExhaustiveOracle)
{
    std::mt19937_64 rng(14);
    const Area area{-10, 5, 190, 165};
    for (int trial = 0; trial < 10; ++trial)
    {
        const Instance inst = random_instance(rng, 4);
        const auto prob = full_problem(inst, 3, {});
        Point2 best{};
        double best_cost = std::numeric_limits<double>::infinity();
        for (double y = 5.0; y <= 165.0 + 1e-9; y += 8.0)
            for (double x = -10.0; x <= 190.0 + 1e-9; x += 8.0)
            {
                double c = std::numeric_limits<double>::infinity();
                try
                {
                    c = wls_cost({x, y}, prob);
                }
                catch (const std::domain_error &)
                {
                }
                if (c < best_cost)
                {
                    best_cost = c;
                    best = {x, y};
                }
            }
        const Point2 p = coarse_init(prob, area, 8.0);
        EXPECT_NEAR(p.x, best.x, 1e-9);
        EXPECT_NEAR(p.y, best.y, 1e-9);
    }
}

TEST(CoarseInit, TiesGoToFirstRowAndColumn)
{
    FusionProblem empty;
    const Area area{10, 20, 110, 120};
    EXPECT_EQ(coarse_init(empty, area), (Point2{10.0, 20.0}));
    EXPECT_THROW(coarse_init(empty, Area{0, 0, 0, 10}), std::invalid_argument);
}
