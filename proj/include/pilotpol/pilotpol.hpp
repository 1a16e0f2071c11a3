// SPDX-License-Identifier: Apache-2.0
//
// pilotpol - pilot-tone polarization tracking for CV-QKD receivers
// Copyright (C) 2026 The pilotpol authors
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

// Umbrella header
#pragma once

#include "pilotpol/common.hpp"
#include "pilotpol/fft.hpp"
#include "pilotpol/random.hpp"
#include "pilotpol/jones.hpp"
#include "pilotpol/txgen.hpp"
#include "pilotpol/channel.hpp"
#include "pilotpol/frontend.hpp"
#include "pilotpol/dsp/bandsplit.hpp"
#include "pilotpol/dsp/tracker.hpp"
#include "pilotpol/dsp/equalizer.hpp"
#include "pilotpol/baselines.hpp"
#include "pilotpol/metrics.hpp"
#include "pilotpol/experiment.hpp"
#include "pilotpol/plot.hpp"
