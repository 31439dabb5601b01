// Copyright 2026 The biotune Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "biotune/artifacts.hpp"
#include "biotune/checkpoint.hpp"
#include "biotune/endpoint.hpp"
#include "biotune/engine.hpp"
#include "biotune/errors.hpp"
#include "biotune/fitness.hpp"
#include "biotune/genotype.hpp"
#include "biotune/orchestrator.hpp"
#include "biotune/partitioner.hpp"
#include "biotune/process.hpp"
#include "biotune/protocol.hpp"
#include "biotune/random.hpp"
#include "biotune/run_config.hpp"
#include "biotune/surrogate.hpp"
