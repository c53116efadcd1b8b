/*
 * Copyright 2026 The hafr Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include "hafr/checkpoint.hpp"
#include "hafr/config.hpp"
#include "hafr/dataset.hpp"
#include "hafr/evaluation.hpp"
#include "hafr/io.hpp"
#include "hafr/model/baselines.hpp"
#include "hafr/model/hafr.hpp"
#include "hafr/numeric.hpp"
#include "hafr/pipeline.hpp"
#include "hafr/rng.hpp"
#include "hafr/stats.hpp"
#include "hafr/synth.hpp"
#include "hafr/training.hpp"
