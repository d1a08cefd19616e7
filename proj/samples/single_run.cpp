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

// Localizes one target in a small deployment and prints the iteration trace.

#include <iostream>

#include "mslocal/mslocal.hpp"

int main()
{
    using namespace mslocal;

    ScenarioConfig cfg;
    cfg.num_nodes = 12;
    cfg.num_clutter = 10;
    cfg.num_elements = 16;
    cfg.j_max = 4;
    cfg.seed = 7;

    const auto trial = make_trial(cfg, 0);
    const RunTrace trace = run_localization(trial->scene, trial->background, make_run_params(cfg, trial->seed));

    const Point2 truth = trial->scene.target->position;
    std::cout << "target at (" << truth.x << ", " << truth.y << ")\n";
    for (const auto &rec : trace.records)
        std::cout << "iteration " << rec.iteration << ": tx " << rec.config.tx << ", estimate (" << rec.estimate.x
                  << ", " << rec.estimate.y << "), error " << distance(rec.estimate, truth) << " m\n";
    std::cout << "stopped: " << to_string(trace.stop_reason) << ", background pairs calibrated: "
              << trial->background.calibrated_pairs() << "\n";
}
