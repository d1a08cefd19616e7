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

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mslocal/mslocal.hpp"

namespace
{

using namespace mslocal;

struct Common
{
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<int> trials;
    std::optional<int> j_max;
    std::optional<int> num_elements;
    std::optional<int> num_rx;
};

void add_common(CLI::App *app, Common &c)
{
    app->add_option("--config", c.config_path, "Scenario JSON file (defaults apply to missing keys)");
    app->add_option("--seed", c.seed, "Master seed");
    app->add_option("--trials", c.trials, "Monte Carlo trial count");
    app->add_option("--jmax", c.j_max, "Maximum sensing iterations");
    app->add_option("--ma", c.num_elements, "Receive array elements");
    app->add_option("--nr", c.num_rx, "Receivers per configuration");
}

ScenarioConfig load_config(const Common &c)
{
    ScenarioConfig cfg;
    if (!c.config_path.empty())
    {
        std::ifstream in(c.config_path);
        if (!in)
            throw std::runtime_error("cannot open " + c.config_path);
        std::stringstream ss;
        ss << in.rdbuf();
        cfg = parse_scenario(ss.str());
    }
    if (c.seed)
        cfg.seed = *c.seed;
    if (c.trials)
        cfg.trials = *c.trials;
    if (c.j_max)
        cfg.j_max = *c.j_max;
    if (c.num_elements)
        cfg.num_elements = *c.num_elements;
    if (c.num_rx)
        cfg.num_rx = *c.num_rx;
    cfg.validate();
    return cfg;
}

std::vector<Variant> parse_variants(const std::vector<std::string> &names)
{
    std::vector<Variant> out;
    for (const auto &n : names)
        out.push_back(parse_variant(n));
    return out;
}

std::ofstream open_out(const std::string &path)
{
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw std::runtime_error("cannot write " + path);
    return os;
}

void print_trace(const RunTrace &trace, const Scene &scene)
{
    for (const auto &r : trace.records)
    {
        std::cout << "iter " << r.iteration << " tx " << r.config.tx << " rx {";
        for (std::size_t k = 0; k < r.config.rx_set.size(); ++k)
            std::cout << (k ? "," : "") << r.config.rx_set[k];
        std::cout << "} admitted " << r.admitted << " q=(" << r.estimate.x << ", " << r.estimate.y << ")"
                  << " err " << distance(r.estimate, scene.target->position) << " m peb " << r.peb << " m\n";
        for (const auto &m : r.measurements)
        {
            const auto &tx = scene.nodes[m.tx];
            const auto &rx = scene.nodes[m.rx];
            const Point2 q = scene.target->position;
            std::cout << "  rx " << m.rx << " toa " << m.toa * kSpeedOfLight << " m (true "
                      << bistatic_delay(tx.position, rx.position, q) * kSpeedOfLight << ") aoa " << m.aoa
                      << " (true " << aoa_boresight(rx, q) << ") snr " << 10.0 * std::log10(m.snr_proxy)
                      << " dB cell " << m.cell.angle_index << "/" << m.cell.delay_index << "\n";
        }
    }
    std::cout << "stop " << to_string(trace.stop_reason) << " after " << trace.iterations_used
              << " iterations, final error " << distance(trace.final_estimate, scene.target->position) << " m\n";
}

}  // namespace

int main(int argc, char **argv)
{
    CLI::App app{"Multistatic OFDM sensing and localization"};
    app.require_subcommand(1);

    Common cal_opts, run_opts, bench_opts;
    int cal_trial = 0;
    std::string cal_out;
    auto *cal = app.add_subcommand("calibrate", "Learn the background dictionary of one trial's deployment");
    add_common(cal, cal_opts);
    cal->add_option("--trial", cal_trial, "Trial index whose deployment is calibrated");
    cal->add_option("--out", cal_out, "Dictionary output path")->required();

    int run_trial_index = 0;
    std::vector<std::string> run_variants{"PS"};
    std::string run_out, run_dump, run_dict;
    auto *run = app.add_subcommand("run", "Run variants on a single trial and print the iteration trace");
    add_common(run, run_opts);
    run->add_option("--trial", run_trial_index, "Trial index");
    run->add_option("--variant", run_variants, "Variant name(s)")->delimiter(',');
    run->add_option("--out", run_out, "Per-trial CSV output");
    run->add_option("--dump-maps", run_dump, "Directory for range-angle map dumps");
    run->add_option("--dict", run_dict, "Precomputed dictionary (otherwise calibrated on demand)");

    std::vector<std::string> bench_variants{"PS"};
    std::string bench_out, bench_summary;
    unsigned threads = 0;
    auto *bench = app.add_subcommand("bench", "Monte Carlo benchmark");
    add_common(bench, bench_opts);
    bench->add_option("--variant", bench_variants, "Variant name(s)")->delimiter(',');
    bench->add_option("--out", bench_out, "Per-trial CSV output");
    bench->add_option("--summary", bench_summary, "Summary CSV output");
    bench->add_option("--threads", threads, "Worker threads (0: hardware concurrency)");

    CLI11_PARSE(app, argc, argv);

    try
    {
        if (*cal)
        {
            const ScenarioConfig cfg = load_config(cal_opts);
            const auto trial = make_trial(cfg, cal_trial);
            const auto dict = calibrate(trial->scene, cfg.noise(), cfg.num_background_snapshots, trial->seed);
            auto os = open_out(cal_out);
            dict.save(os);
            std::cout << "calibrated " << dict.size() << " pairs\n";
        }
        else if (*run)
        {
            const ScenarioConfig cfg = load_config(run_opts);
            const auto trial = make_trial(cfg, run_trial_index);
            std::optional<BackgroundDictionary> dict;
            if (!run_dict.empty())
            {
                std::ifstream in(run_dict, std::ios::binary);
                if (!in)
                    throw std::runtime_error("cannot open " + run_dict);
                dict = BackgroundDictionary::load(in);
            }
            std::vector<TrialResult> rows;
            for (Variant v : parse_variants(run_variants))
            {
                RunParams params = make_run_params(cfg, trial->seed);
                if (!run_dump.empty())
                {
                    std::filesystem::create_directories(run_dump);
                    params.map_sink = [&, v](int iteration, const RangeAngleMap &map) {
                        std::ostringstream name;
                        name << to_string(v) << "_it" << iteration << "_tx" << map.tx << "_rx" << map.rx << ".bin";
                        auto os = open_out((std::filesystem::path(run_dump) / name.str()).string());
                        write_map(os, map);
                    };
                }
                const RunTrace trace = dict ? run_variant(trial->scene, *dict, v, params)
                                            : run_variant(trial->scene, trial->background, v, params);
                std::cout << "== " << to_string(v) << "\n";
                print_trace(trace, trial->scene);
                rows.push_back(summarize_trial(cfg, *trial, v, trace, run_trial_index));
            }
            if (!run_out.empty())
            {
                auto os = open_out(run_out);
                write_trials_csv(os, rows);
            }
        }
        else if (*bench)
        {
            const ScenarioConfig cfg = load_config(bench_opts);
            std::vector<TrialResult> all;
            std::vector<MonteCarloSummary> summaries;
            for (Variant v : parse_variants(bench_variants))
            {
                const auto results = run_trials(cfg, v, threads);
                all.insert(all.end(), results.begin(), results.end());
                summaries.push_back(summarize(cfg, v, results));
            }
            write_summary_csv(std::cout, summaries);
            if (!bench_out.empty())
            {
                auto os = open_out(bench_out);
                write_trials_csv(os, all);
            }
            if (!bench_summary.empty())
            {
                auto os = open_out(bench_summary);
                write_summary_csv(os, summaries);
            }
        }
    }
    catch (const std::exception &e)
    {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
