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

#ifndef MSLOCAL_MSLOCAL_HPP
#define MSLOCAL_MSLOCAL_HPP

#include "mslocal/channel.hpp"
#include "mslocal/clutter.hpp"
#include "mslocal/detector.hpp"
#include "mslocal/fft.hpp"
#include "mslocal/fusion.hpp"
#include "mslocal/geometry.hpp"
#include "mslocal/orchestrator.hpp"
#include "mslocal/planner.hpp"
#include "mslocal/random.hpp"
#include "mslocal/scene.hpp"
#include "mslocal/stats.hpp"

#endif
