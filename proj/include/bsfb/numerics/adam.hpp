// SPDX-License-Identifier: Apache-2.0
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
#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>

#include "bsfb/numerics/layers.hpp"

namespace bsfb::nn {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Moment estimates for every parameter updated so far.
struct AdamState {
    AdamConfig config;
    std::uint64_t step = 0;
    std::unordered_map<std::string, Tensor> first;
    std::unordered_map<std::string, Tensor> second;
};

// One bias-corrected Adam update of every trainable parameter. Gradients are
// validated before anything is written: a non-finite entry throws
// TrainingError naming the parameter and leaves params and state untouched.
void adam_step(ParameterSet& params, const ParameterSet& grads, AdamState& state, double lr,
               const TrainablePredicate& trainable = {});

}  // namespace bsfb::nn
