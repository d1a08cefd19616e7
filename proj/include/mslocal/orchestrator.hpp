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

#ifndef MSLOCAL_ORCHESTRATOR_HPP
#define MSLOCAL_ORCHESTRATOR_HPP

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <iomanip>
#include <limits>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "mslocal/clutter.hpp"
#include "mslocal/detector.hpp"
#include "mslocal/fusion.hpp"
#include "mslocal/geometry.hpp"
#include "mslocal/planner.hpp"
#include "mslocal/random.hpp"
#include "mslocal/scene.hpp"
#include "mslocal/stats.hpp"

namespace mslocal
{

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
inline double dbm_to_watts(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }

struct ScenarioConfig
{
    double area_size = 200.0;  // square side, m
    int num_nodes = 40;
    int num_clutter = 30;
    bool nodes_as_clutter = true;
    bool include_los = true;
    double min_separation = 1.0;  // m, between any two placed objects

    double carrier_frequency = 10e9;
    double bandwidth = 100e6;
    double subcarrier_spacing = 15e3;
    int num_subcarriers = 6667;
    int num_elements = 32;
    double element_spacing = 0.0;  // m; 0 selects half a wavelength

    double tx_power_dbm = 23.0;
    double tx_gain_dbi = 0.0;
    double rx_gain_dbi = 0.0;
    double mean_rcs_dbsm = 0.0;
    double noise_psd_dbm_hz = -174.0;
    double noise_figure_db = 0.0;
    int num_background_snapshots = 70;
    double coherence_time = 0.0;  // s, recorded only

    int num_rx = 1;
    int planner_samples = 500;
    double fov_half_angle = 0.5 * kPi;
    bool receiver_fov_limited = true;  // receivers see only their field of view
    double mu_reg = 1e-6;

    int angle_oversampling = 2;
    double cfar_pfa = 1e-6;
    double min_snr_db = 3.0;
    bool gate_fallback = true;

    int j_max = 6;
    int l_max = 50;
    double tolerance = 1e-4;

    int trials = 100;
    std::uint64_t seed = 1;
    bool fixed_geometry = false;

    double wavelength() const { return kSpeedOfLight / carrier_frequency; }
    double spacing() const { return element_spacing > 0.0 ? element_spacing : 0.5 * wavelength(); }
    OfdmGrid grid() const { return OfdmGrid::centered(carrier_frequency, subcarrier_spacing, num_subcarriers); }
    UlaConfig ula() const { return {num_elements, spacing()}; }
    Area area() const { return {0.0, 0.0, area_size, area_size}; }

    NoiseSpec noise() const
    {
        NoiseSpec n;
        n.noise_temperature = dbm_to_watts(noise_psd_dbm_hz) / kBoltzmann;
        n.noise_figure = db_to_linear(noise_figure_db);
        n.pilot_power_per_tone = dbm_to_watts(tx_power_dbm) / num_subcarriers;
        return n;
    }

    double noise_variance() const { return channel_error_variance(subcarrier_spacing, noise()); }

    void validate() const
    {
        const auto positive = [](double v, const char *what) {
            if (!(v > 0.0) || !std::isfinite(v))
                throw std::invalid_argument(std::string(what) + " must be positive");
        };
        positive(area_size, "area_size");
        positive(carrier_frequency, "carrier_frequency");
        positive(bandwidth, "bandwidth");
        positive(subcarrier_spacing, "subcarrier_spacing");
        positive(fov_half_angle, "fov_half_angle");
        positive(mu_reg, "mu_reg");
        positive(tolerance, "tolerance");
        positive(cfar_pfa, "cfar_pfa");
        if (num_subcarriers < 2)
            throw std::invalid_argument("num_subcarriers must be at least 2");
        if (std::abs(num_subcarriers * subcarrier_spacing - bandwidth) > subcarrier_spacing)
            throw std::invalid_argument("bandwidth must equal num_subcarriers * subcarrier_spacing");
        if (num_nodes < 2 || num_clutter < 0 || num_elements < 1)
            throw std::invalid_argument("node, clutter and element counts out of range");
        if (num_rx < 1 || num_rx >= num_nodes)
            throw std::invalid_argument("num_rx must lie in [1, num_nodes)");
        if (num_background_snapshots < 1 || planner_samples < 1 || angle_oversampling < 1)
            throw std::invalid_argument("snapshot, sample and oversampling counts must be positive");
        if (j_max < 1 || l_max < 1 || trials < 1)
            throw std::invalid_argument("j_max, l_max and trials must be positive");
        if (spacing() > 0.5 * wavelength() * (1.0 + 1e-12))
            throw std::invalid_argument("element spacing exceeds half a wavelength");
        if (!(cfar_pfa < 1.0))
            throw std::invalid_argument("cfar_pfa must be below 1");
    }
};

inline void to_json(nlohmann::json &j, const ScenarioConfig &c)
{
    j = nlohmann::json{
        {"area_size", c.area_size},
        {"num_nodes", c.num_nodes},
        {"num_clutter", c.num_clutter},
        {"nodes_as_clutter", c.nodes_as_clutter},
        {"include_los", c.include_los},
        {"min_separation", c.min_separation},
        {"carrier_frequency", c.carrier_frequency},
        {"bandwidth", c.bandwidth},
        {"subcarrier_spacing", c.subcarrier_spacing},
        {"num_subcarriers", c.num_subcarriers},
        {"num_elements", c.num_elements},
        {"element_spacing", c.element_spacing},
        {"tx_power_dbm", c.tx_power_dbm},
        {"tx_gain_dbi", c.tx_gain_dbi},
        {"rx_gain_dbi", c.rx_gain_dbi},
        {"mean_rcs_dbsm", c.mean_rcs_dbsm},
        {"noise_psd_dbm_hz", c.noise_psd_dbm_hz},
        {"noise_figure_db", c.noise_figure_db},
        {"num_background_snapshots", c.num_background_snapshots},
        {"coherence_time", c.coherence_time},
        {"num_rx", c.num_rx},
        {"planner_samples", c.planner_samples},
        {"fov_half_angle", c.fov_half_angle},
        {"receiver_fov_limited", c.receiver_fov_limited},
        {"mu_reg", c.mu_reg},
        {"angle_oversampling", c.angle_oversampling},
        {"cfar_pfa", c.cfar_pfa},
        {"min_snr_db", c.min_snr_db},
        {"gate_fallback", c.gate_fallback},
        {"j_max", c.j_max},
        {"l_max", c.l_max},
        {"tolerance", c.tolerance},
        {"trials", c.trials},
        {"seed", c.seed},
        {"fixed_geometry", c.fixed_geometry},
    };
}

/// Missing keys keep their defaults; unknown keys are rejected.
inline void from_json(const nlohmann::json &j, ScenarioConfig &c)
{
    const nlohmann::json defaults = ScenarioConfig{};
    for (const auto &[key, _] : j.items())
        if (!defaults.contains(key))
            throw std::invalid_argument("unknown scenario key: " + key);
    const auto get = [&](const char *key, auto &field) {
        if (j.contains(key))
            j.at(key).get_to(field);
    };
    get("area_size", c.area_size);
    get("num_nodes", c.num_nodes);
    get("num_clutter", c.num_clutter);
    get("nodes_as_clutter", c.nodes_as_clutter);
    get("include_los", c.include_los);
    get("min_separation", c.min_separation);
    get("carrier_frequency", c.carrier_frequency);
    get("bandwidth", c.bandwidth);
    get("subcarrier_spacing", c.subcarrier_spacing);
    get("num_subcarriers", c.num_subcarriers);
    get("num_elements", c.num_elements);
    get("element_spacing", c.element_spacing);
    get("tx_power_dbm", c.tx_power_dbm);
    get("tx_gain_dbi", c.tx_gain_dbi);
    get("rx_gain_dbi", c.rx_gain_dbi);
    get("mean_rcs_dbsm", c.mean_rcs_dbsm);
    get("noise_psd_dbm_hz", c.noise_psd_dbm_hz);
    get("noise_figure_db", c.noise_figure_db);
    get("num_background_snapshots", c.num_background_snapshots);
    get("coherence_time", c.coherence_time);
    get("num_rx", c.num_rx);
    get("planner_samples", c.planner_samples);
    get("fov_half_angle", c.fov_half_angle);
    get("receiver_fov_limited", c.receiver_fov_limited);
    get("mu_reg", c.mu_reg);
    get("angle_oversampling", c.angle_oversampling);
    get("cfar_pfa", c.cfar_pfa);
    get("min_snr_db", c.min_snr_db);
    get("gate_fallback", c.gate_fallback);
    get("j_max", c.j_max);
    get("l_max", c.l_max);
    get("tolerance", c.tolerance);
    get("trials", c.trials);
    get("seed", c.seed);
    get("fixed_geometry", c.fixed_geometry);
}

inline ScenarioConfig parse_scenario(const std::string &text)
{
    ScenarioConfig c = nlohmann::json::parse(text).get<ScenarioConfig>();
    c.validate();
    return c;
}

enum class Variant
{
    ps,
    ps_ncs,
    ps_cf,
    ps_nsfi,
    rsa,
    fis,
    obs,
};

inline constexpr Variant kAllVariants[] = {Variant::ps,  Variant::ps_ncs, Variant::ps_cf, Variant::ps_nsfi,
                                           Variant::rsa, Variant::fis,    Variant::obs};

inline const char *to_string(Variant v)
{
    switch (v)
    {
    case Variant::ps:
        return "PS";
    case Variant::ps_ncs:
        return "PS-NCS";
    case Variant::ps_cf:
        return "PS-CF";
    case Variant::ps_nsfi:
        return "PS-NSFI";
    case Variant::rsa:
        return "RSA";
    case Variant::fis:
        return "FIS";
    case Variant::obs:
        return "OBS";
    }
    return "?";
}

inline Variant parse_variant(std::string name)
{
    for (auto &ch : name)
        ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    std::replace(name.begin(), name.end(), '_', '-');
    for (Variant v : kAllVariants)
        if (name == to_string(v))
            return v;
    throw std::invalid_argument("unknown variant: " + name);
}

enum class StopReason
{
    config_repeat,
    j_max,
    measurement_starvation,
};

inline const char *to_string(StopReason r)
{
    switch (r)
    {
    case StopReason::config_repeat:
        return "config-repeat";
    case StopReason::j_max:
        return "J_max";
    case StopReason::measurement_starvation:
        return "measurement-starvation";
    }
    return "?";
}

struct IterationRecord
{
    int iteration = 0;  // 1-based
    SensingConfig config;
    std::vector<LinkMeasurement> measurements;  // every link that produced a detection
    int admitted = 0;
    bool starved = false;
    Point2 estimate;
    double cost = 0.0;
    bool converged = false;
    double peb = std::numeric_limits<double>::quiet_NaN();          // executed config at the estimate
    double planned_peb = std::numeric_limits<double>::quiet_NaN();  // P2 minimum at the estimate
};

struct RunTrace
{
    std::vector<IterationRecord> records;
    SensingConfig final_config;
    Point2 final_estimate;
    double final_cost = 0.0;
    int iterations_used = 0;
    int symbols_used = 0;  // sensing OFDM symbols consumed
    StopReason stop_reason = StopReason::j_max;
};

/// Everything the localization loop needs besides the scene and background.
struct RunParams
{
    RadioParams radio;
    NoiseSpec noise;
    DetectorParams detector;
    PlannerParams planner;
    SolverOptions solver;
    Area area;
    int j_max = 6;
    double min_snr = 2.0;  // linear admission threshold on the SNR proxy
    bool gate_fallback = true;
    double noise_scale = 1.0;  // multiplies the sensing-noise variance; 0 gives noiseless sensing
    double explore_snr = 100.0;  // predicted SNR above which a starved link rules a region out
    std::uint64_t seed = 0;    // sensing and planner streams
    std::function<void(int iteration, const RangeAngleMap &)> map_sink;
};

inline RunParams make_run_params(const ScenarioConfig &c, std::uint64_t seed)
{
    RunParams p;
    p.radio.grid = c.grid();
    p.radio.ula = c.ula();
    p.radio.noise_variance = c.noise_variance();
    p.radio.mean_rcs = db_to_linear(c.mean_rcs_dbsm);
    p.noise = c.noise();
    p.detector.angle_oversampling = c.angle_oversampling;
    p.detector.pfa = c.cfar_pfa;
    p.radio.aoa_variance_cap = p.detector.aoa_variance_cap;
    p.planner.num_rx = c.num_rx;
    p.planner.num_samples = c.planner_samples;
    p.planner.fov_half_angle = c.fov_half_angle;
    p.planner.mu_reg = c.mu_reg;
    p.planner.seed = seed;
    p.solver.max_iterations = c.l_max;
    p.solver.tolerance = c.tolerance;
    p.area = c.area();
    p.j_max = c.j_max;
    p.min_snr = db_to_linear(c.min_snr_db);
    p.gate_fallback = c.gate_fallback;
    p.seed = seed;
    return p;
}

/// Random deployment: nodes, boresights, clutter, target and RCS draws.
/// Location ids equal node indices.
inline Scene make_scene(const ScenarioConfig &c, std::uint64_t seed)
{
    c.validate();
    Rng rng = make_rng(seed, Stream::scene);
    const Area area = c.area();
    std::uniform_real_distribution<double> ux(area.x_min, area.x_max), uy(area.y_min, area.y_max);
    std::uniform_real_distribution<double> uang(0.0, kTwoPi);
    std::vector<Point2> placed;
    const auto place = [&] {
        for (int attempt = 0; attempt < 10000; ++attempt)
        {
            const Point2 p{ux(rng), uy(rng)};
            const bool clear = std::all_of(placed.begin(), placed.end(),
                                           [&](const Point2 &o) { return distance(o, p) >= c.min_separation; });
            if (clear)
            {
                placed.push_back(p);
                return p;
            }
        }
        throw std::runtime_error("make_scene: area too crowded for the minimum separation");
    };
    Scene s;
    s.grid = c.grid();
    s.ula = c.ula();
    s.area = area;
    s.include_los = c.include_los;
    s.rx_half_angle = c.receiver_fov_limited ? std::min(c.fov_half_angle, kPi) : kPi;
    const double tx_gain = db_to_linear(c.tx_gain_dbi);
    const double rx_gain = db_to_linear(c.rx_gain_dbi);
    const double mean_rcs = db_to_linear(c.mean_rcs_dbsm);
    for (int n = 0; n < c.num_nodes; ++n)
    {
        NodePose node;
        node.position = place();
        node.boresight = wrap_two_pi(uang(rng));
        node.tx_gain = tx_gain;
        node.rx_gain = rx_gain;
        node.location_id = n;
        s.nodes.push_back(node);
    }
    const Point2 target = place();
    s.target = Scatterer{target, mean_rcs, draw_rcs(mean_rcs, rng)};
    for (int k = 0; k < c.num_clutter; ++k)
    {
        const Point2 p = place();
        s.clutter.push_back({p, mean_rcs, draw_rcs(mean_rcs, rng)});
    }
    if (c.nodes_as_clutter)
        for (const auto &node : s.nodes)
            s.node_clutter.push_back({node.position, mean_rcs, draw_rcs(mean_rcs, rng)});
    s.validate();
    return s;
}

/// The same deployment without clutter or direct path.
inline Scene clutter_free(Scene s)
{
    s.clutter.clear();
    s.node_clutter.clear();
    s.include_los = false;
    return s;
}

namespace detail
{

struct SenseOptions
{
    bool suppress = true;
    double budget = 1.0;  // coherently averaged symbols
};

inline bool has_clutter(const Scene &s)
{
    return s.include_los || !s.clutter.empty() || !s.node_clutter.empty();
}

inline std::optional<PriorGate> gate_for(const Scene &scene, int tx, int rx, const std::optional<Point2> &q)
{
    if (!q)
        return std::nullopt;
    const auto &t = scene.nodes[tx];
    const auto &r = scene.nodes[rx];
    if (*q == t.position || *q == r.position)
        return std::nullopt;
    PriorGate g;
    g.toa = bistatic_delay(t.position, r.position, *q);
    g.aoa = fold_to_front(aoa_boresight(r, *q));
    return g;
}

// Direct-path delay to the largest bistatic delay inside the area (attained at
// a corner, the delay being convex in the scatterer position).
inline DelayWindow delay_window(const Scene &scene, int tx, int rx)
{
    const Point2 a = scene.nodes[tx].position;
    const Point2 b = scene.nodes[rx].position;
    const Area &r = scene.area;
    double hi = 0.0;
    for (const Point2 &c : {Point2{r.x_min, r.y_min}, Point2{r.x_max, r.y_min}, Point2{r.x_min, r.y_max},
                            Point2{r.x_max, r.y_max}})
        hi = std::max(hi, bistatic_delay(a, b, c));
    return {distance(a, b) / kSpeedOfLight, hi};
}

template <class Background>
std::vector<LinkMeasurement> sense(const Scene &scene, const Background *background, const SensingConfig &cfg,
                                   int iteration, const std::optional<Point2> &prior, const RunParams &params,
                                   const SenseOptions &opt)
{
    std::vector<LinkMeasurement> out;
    const double variance = params.radio.noise_variance * params.noise_scale / opt.budget;
    for (int rx : cfg.rx_set)
    {
        ChannelMatrix truth = target_channel(scene, cfg.tx, rx);
        if (has_clutter(scene))
            truth.entries += clutter_channel(scene, cfg.tx, rx).entries;
        Rng rng = make_rng(params.seed, Stream::sensing,
                           {static_cast<std::uint64_t>(iteration), static_cast<std::uint64_t>(cfg.tx),
                            static_cast<std::uint64_t>(rx)});
        ChannelMatrix residual = observe_with_variance(truth, variance, rng);
        if (opt.suppress && background)
            residual = suppress(residual, *background, scene.nodes[cfg.tx].location_id,
                                scene.nodes[rx].location_id);
        residual.kind = ChannelKind::residual;
        RangeAngleMap map;
        RangeAngleMap *map_ptr = params.map_sink ? &map : nullptr;
        const auto gate = gate_for(scene, cfg.tx, rx, prior);
        const auto window = delay_window(scene, cfg.tx, rx);
        auto m = measure_link(residual, scene.grid, scene.ula, params.detector, gate, cfg.tx, rx, map_ptr, window);
        if (!m && gate && params.gate_fallback)
            m = measure_link(residual, scene.grid, scene.ula, params.detector, std::nullopt, cfg.tx, rx, map_ptr,
                             window);
        if (params.map_sink)
            params.map_sink(iteration, map);
        if (m)
            out.push_back(*m);
    }
    return out;
}

inline double safe_peb(const std::vector<NodePose> &nodes, const SensingConfig &cfg, const Point2 &q,
                       const RunParams &params)
{
    try
    {
        return peb_score(nodes, cfg.tx, cfg.rx_set, q, params.radio, params.planner);
    }
    catch (const std::domain_error &)
    {
        return std::numeric_limits<double>::infinity();
    }
}

// Nudges an estimate off a node position so the planner's geometry is defined.
inline Point2 off_nodes(Point2 q, const std::vector<NodePose> &nodes)
{
    for (const auto &n : nodes)
        if (n.position == q)
            q.x += 1e-6;
    return q;
}

}  // namespace detail

/// How one run chooses configurations and processes observations.
struct LoopPolicy
{
    enum class First
    {
        sfi,
        random,
        oracle,
    };
    enum class Next
    {
        peb,
        random,
    };
    First first = First::sfi;
    Next next = Next::peb;
    bool early_stop = true;
    bool suppress = true;
    bool average_estimates = false;
    int iterations = 0;   // 0: use params.j_max
    double budget = 1.0;  // symbols averaged per sensing
};

template <class Background>
RunTrace run_loop(const Scene &scene, const Background *background, const RunParams &params,
                  const LoopPolicy &policy)
{
    const int j_limit = policy.iterations > 0 ? policy.iterations : params.j_max;
    if (j_limit < 1)
        throw std::invalid_argument("run_localization: J_max must be at least 1");
    Rng variant_rng = make_rng(params.seed, Stream::variant);
    const int n = static_cast<int>(scene.nodes.size());

    std::vector<Point2> unexplored = sample_points(params.area, params.planner.num_samples, params.planner.seed);
    SensingConfig cfg;
    switch (policy.first)
    {
    case LoopPolicy::First::sfi:
        cfg = sfi_config(scene.nodes, unexplored, params.radio, params.planner);
        break;
    case LoopPolicy::First::random:
        cfg = random_config(n, params.planner.num_rx, variant_rng);
        break;
    case LoopPolicy::First::oracle:
        if (!scene.target)
            throw std::invalid_argument("oracle planning needs a target");
        cfg = select_config(scene.target->position, scene.nodes, params.radio, params.planner);
        break;
    }

    RunTrace trace;
    std::vector<SensingConfig> starved_configs;  // yielded nothing; not planned again
    std::optional<Point2> estimate;
    Point2 sum{0.0, 0.0};
    int estimates = 0;
    for (int j = 1; j <= j_limit; ++j)
    {
        IterationRecord rec;
        rec.iteration = j;
        rec.config = cfg;
        rec.measurements = detail::sense(scene, background, cfg, j, estimate, params,
                                         detail::SenseOptions{policy.suppress, policy.budget});
        FusionProblem prob = make_problem(scene.nodes, rec.measurements, params.min_snr,
                                          estimate.value_or(params.area.centre()));
        rec.admitted = static_cast<int>(prob.measurements.size());
        trace.symbols_used += static_cast<int>(std::lround(policy.budget));
        if (prob.num_residuals() == 0)
        {
            rec.starved = true;
            starved_configs.push_back(cfg);
            rec.estimate = estimate.value_or(params.area.centre());
            rec.cost = 0.0;
        }
        else
        {
            if (!estimate)
                prob.initial_guess = coarse_init(prob, params.area);
            const Estimate est = solve_wls(prob, params.solver);
            estimate = detail::off_nodes(est.position, scene.nodes);
            rec.estimate = *estimate;
            rec.cost = est.objective;
            rec.converged = est.converged;
            sum += *estimate;
            ++estimates;
        }
        const Point2 q = rec.estimate;
        rec.peb = detail::safe_peb(scene.nodes, cfg, q, params);
        trace.iterations_used = j;

        const bool last = j == j_limit;
        if (!last)
        {
            SensingConfig next;
            const bool exploring = !estimate && policy.next == LoopPolicy::Next::peb &&
                                   policy.first == LoopPolicy::First::sfi;
            if (exploring)
                prune_explored(unexplored, scene.nodes, cfg, params.radio, params.planner, params.explore_snr);
            if (exploring && !unexplored.empty())
            {
                // Nothing seen yet: re-run the initialization on the area not ruled out.
                next = sfi_config(scene.nodes, unexplored, params.radio, params.planner);
                if (std::find(starved_configs.begin(), starved_configs.end(), next) != starved_configs.end())
                    next = select_config(q, scene.nodes, params.radio, params.planner, starved_configs);
            }
            else if (policy.next == LoopPolicy::Next::peb)
            {
                const auto scored = select_config_scored(detail::off_nodes(q, scene.nodes), scene.nodes,
                                                         params.radio, params.planner, starved_configs);
                next = scored.config;
                rec.planned_peb = scored.peb;
            }
            else
                next = random_config(n, params.planner.num_rx, variant_rng);
            trace.records.push_back(std::move(rec));
            if (policy.early_stop && next == cfg)
            {
                trace.stop_reason = trace.records.back().starved ? StopReason::measurement_starvation
                                                                  : StopReason::config_repeat;
                break;
            }
            cfg = next;
        }
        else
        {
            trace.stop_reason = rec.starved ? StopReason::measurement_starvation : StopReason::j_max;
            trace.records.push_back(std::move(rec));
        }
    }
    trace.final_config = trace.records.back().config;
    if (policy.average_estimates && estimates > 0)
        trace.final_estimate = sum / static_cast<double>(estimates);
    else
        trace.final_estimate = trace.records.back().estimate;
    trace.final_cost = trace.records.back().cost;
    return trace;
}

/// Sensing-reconfiguration loop: SFI start, P1 fusion, P2 re-planning, stop on
/// a repeated configuration or after J_max sensing iterations.
template <class Background>
RunTrace run_localization(const Scene &scene, const Background &background, const RunParams &params)
{
    return run_loop(scene, &background, params, LoopPolicy{});
}

inline LoopPolicy policy_for(Variant v, int j_max)
{
    LoopPolicy p;
    switch (v)
    {
    case Variant::ps:
        break;
    case Variant::ps_ncs:
        p.suppress = false;
        break;
    case Variant::ps_cf:
        p.suppress = false;
        break;
    case Variant::ps_nsfi:
        p.first = LoopPolicy::First::random;
        break;
    case Variant::rsa:
        p.next = LoopPolicy::Next::random;
        p.early_stop = false;
        p.average_estimates = true;
        break;
    case Variant::fis:
        p.iterations = 1;
        p.budget = j_max;
        break;
    case Variant::obs:
        p.first = LoopPolicy::First::oracle;
        p.iterations = 1;
        p.budget = j_max;
        break;
    }
    return p;
}

/// Runs one benchmark variant. PS-CF ignores `background` and senses the
/// clutter-free version of `scene`.
template <class Background>
RunTrace run_variant(const Scene &scene, const Background &background, Variant v, const RunParams &params)
{
    const LoopPolicy policy = policy_for(v, params.j_max);
    if (v == Variant::ps_cf)
    {
        const Scene clean = clutter_free(scene);
        return run_loop<Background>(clean, nullptr, params, policy);
    }
    return run_loop(scene, policy.suppress ? &background : nullptr, params, policy);
}

/// Final estimate a PS-type run would have returned with a smaller J_max.
/// Valid for sequential variants because the streams are keyed per iteration.
inline Point2 estimate_at_budget(const RunTrace &trace, int j_max)
{
    if (j_max < 1 || trace.records.empty())
        throw std::invalid_argument("estimate_at_budget: need j_max >= 1 and a nonempty trace");
    const std::size_t idx = std::min<std::size_t>(static_cast<std::size_t>(j_max), trace.records.size()) - 1;
    return trace.records[idx].estimate;
}

/// Communication throughput given up to sensing, in percent: one OFDM symbol
/// per sensing iteration out of a 140-symbol frame.
inline double throughput_loss(int j_max)
{
    if (j_max < 0)
        throw std::invalid_argument("throughput_loss: negative symbol count");
    return static_cast<double>(j_max) / 140.0 * 100.0;
}

/// One Monte Carlo trial: a regenerated deployment and its lazily calibrated
/// background. Not movable (the background refers to the scene).
struct Trial
{
    Trial(const ScenarioConfig &c, std::uint64_t trial_seed, std::uint64_t scene_seed)
        : seed(trial_seed), scene(make_scene(c, scene_seed)),
          background(scene, c.noise(), c.num_background_snapshots, trial_seed)
    {
    }
    Trial(const Trial &) = delete;
    Trial &operator=(const Trial &) = delete;

    std::uint64_t seed;
    Scene scene;
    LazyBackground background;
};

inline std::uint64_t trial_seed(std::uint64_t master, int index)
{
    return derive_seed(master, {static_cast<std::uint64_t>(Stream::trial), static_cast<std::uint64_t>(index)});
}

inline std::unique_ptr<Trial> make_trial(const ScenarioConfig &c, int index)
{
    const std::uint64_t ts = trial_seed(c.seed, index);
    const std::uint64_t scene_seed = c.fixed_geometry ? trial_seed(c.seed, -1) : ts;
    return std::make_unique<Trial>(c, ts, scene_seed);
}

struct TrialResult
{
    int trial = 0;
    Variant variant = Variant::ps;
    int num_elements = 0;
    int num_rx = 0;
    int iterations_used = 0;
    int symbols_used = 0;
    double error = 0.0;  // m
    double cost = 0.0;
    StopReason stop_reason = StopReason::j_max;
};

inline TrialResult summarize_trial(const ScenarioConfig &c, const Trial &t, Variant v, const RunTrace &trace,
                                   int index)
{
    TrialResult r;
    r.trial = index;
    r.variant = v;
    r.num_elements = c.num_elements;
    r.num_rx = c.num_rx;
    r.iterations_used = trace.iterations_used;
    r.symbols_used = trace.symbols_used;
    r.error = distance(trace.final_estimate, t.scene.target->position);
    r.cost = trace.final_cost;
    r.stop_reason = trace.stop_reason;
    return r;
}

inline TrialResult run_trial(const ScenarioConfig &c, Variant v, int index)
{
    const auto t = make_trial(c, index);
    const RunTrace trace = run_variant(t->scene, t->background, v, make_run_params(c, t->seed));
    const int expected = (v == Variant::fis || v == Variant::obs) ? c.j_max : trace.iterations_used;
    if (trace.symbols_used != expected)
        throw std::logic_error("sensing budget accounting mismatch");
    return summarize_trial(c, *t, v, trace, index);
}

struct MonteCarloSummary
{
    Variant variant = Variant::ps;
    int num_elements = 0;
    int num_rx = 0;
    int j_max = 0;
    std::vector<double> errors;  // per trial, trial order
    double rmse = 0.0;
    double p25 = 0.0, p50 = 0.0, p75 = 0.0, p90 = 0.0, p95 = 0.0;
    double mean_iterations = 0.0;
    double throughput_loss_pct = 0.0;
};

inline MonteCarloSummary summarize(const ScenarioConfig &c, Variant v, std::span<const TrialResult> results)
{
    MonteCarloSummary s;
    s.variant = v;
    s.num_elements = c.num_elements;
    s.num_rx = c.num_rx;
    s.j_max = c.j_max;
    double iters = 0.0;
    for (const auto &r : results)
    {
        s.errors.push_back(r.error);
        iters += r.iterations_used;
    }
    if (s.errors.empty())
        return s;
    s.rmse = root_mean_square(s.errors);
    std::vector<double> sorted = s.errors;
    std::sort(sorted.begin(), sorted.end());
    s.p25 = percentile_sorted(sorted, 25.0);
    s.p50 = percentile_sorted(sorted, 50.0);
    s.p75 = percentile_sorted(sorted, 75.0);
    s.p90 = percentile_sorted(sorted, 90.0);
    s.p95 = percentile_sorted(sorted, 95.0);
    s.mean_iterations = iters / static_cast<double>(results.size());
    s.throughput_loss_pct = throughput_loss(c.j_max);
    return s;
}

/// Runs `c.trials` independent trials on `threads` workers. Results land in
/// trial order, so the output does not depend on scheduling.
inline std::vector<TrialResult> run_trials(const ScenarioConfig &c, Variant v, unsigned threads = 0)
{
    c.validate();
    std::vector<TrialResult> results(c.trials);
    if (threads == 0)
        threads = std::max(1u, std::thread::hardware_concurrency());
    threads = std::min<unsigned>(threads, static_cast<unsigned>(c.trials));
    std::atomic<int> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    const auto worker = [&] {
        for (int i = next++; i < c.trials; i = next++)
        {
            try
            {
                results[i] = run_trial(c, v, i);
            }
            catch (...)
            {
                std::lock_guard lock(failure_mutex);
                if (!failure)
                    failure = std::current_exception();
            }
        }
    };
    if (threads <= 1)
        worker();
    else
    {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < threads; ++t)
            pool.emplace_back(worker);
        for (auto &th : pool)
            th.join();
    }
    if (failure)
        std::rethrow_exception(failure);
    return results;
}

inline MonteCarloSummary monte_carlo(const ScenarioConfig &c, Variant v, unsigned threads = 0)
{
    const auto results = run_trials(c, v, threads);
    return summarize(c, v, results);
}

namespace detail
{

inline std::string fmt(double v)
{
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

}  // namespace detail

/// Columns: trial_id, variant, M_a, N_r, J_used, final_error_m, wls_cost, stop_reason.
inline void write_trials_csv(std::ostream &os, std::span<const TrialResult> rows, bool header = true)
{
    if (header)
        os << "trial_id,variant,M_a,N_r,J_used,final_error_m,wls_cost,stop_reason\n";
    for (const auto &r : rows)
        os << r.trial << ',' << to_string(r.variant) << ',' << r.num_elements << ',' << r.num_rx << ','
           << r.iterations_used << ',' << detail::fmt(r.error) << ',' << detail::fmt(r.cost) << ','
           << to_string(r.stop_reason) << '\n';
}

/// Columns: variant, M_a, N_r, trials, rmse_m, p25, p50, p75, p90, p95,
/// mean_iterations, throughput_loss_pct.
inline void write_summary_csv(std::ostream &os, std::span<const MonteCarloSummary> rows, bool header = true)
{
    if (header)
        os << "variant,M_a,N_r,trials,rmse_m,p25,p50,p75,p90,p95,mean_iterations,throughput_loss_pct\n";
    for (const auto &s : rows)
        os << to_string(s.variant) << ',' << s.num_elements << ',' << s.num_rx << ',' << s.errors.size() << ','
           << detail::fmt(s.rmse) << ',' << detail::fmt(s.p25) << ',' << detail::fmt(s.p50) << ','
           << detail::fmt(s.p75) << ',' << detail::fmt(s.p90) << ',' << detail::fmt(s.p95) << ','
           << detail::fmt(s.mean_iterations) << ',' << detail::fmt(s.throughput_loss_pct) << '\n';
}

}  // namespace mslocal

#endif
