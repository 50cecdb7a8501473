// Copyright 2026 The Veritas Authors. All Rights Reserved.
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

#include "veritas/calibration.hpp"
#include "veritas/dataset.hpp"
#include "veritas/decoding.hpp"
#include "veritas/error.hpp"
#include "veritas/model/cognitive_model.hpp"
#include "veritas/model/planted_model.hpp"
#include "veritas/model/replay_model.hpp"
#include "veritas/model/tiny_transformer.hpp"
#include "veritas/model/trace_io.hpp"
#include "veritas/predictor.hpp"
#include "veritas/probing.hpp"
#include "veritas/sha256.hpp"
#include "veritas/synthetic.hpp"
#include "veritas/util.hpp"
