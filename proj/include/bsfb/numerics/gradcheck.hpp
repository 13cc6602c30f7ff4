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

#include <cstddef>
#include <cstdint>
#include <functional>

#include "bsfb/numerics/layers.hpp"

namespace bsfb::nn {

// Builds a scalar loss on the tape from bound parameters.
using LossBuilder = std::function<Var(const Binding&)>;

struct GradCheckResult {
    double max_relative_error = 0.0;
    std::string worst_parameter;
    std::size_t worst_index = 0;
    std::size_t checked = 0;
};

// Compares reverse-mode gradients with central differences
// (L(p + eps) - L(p - eps)) / (2 eps) on up to `samples_per_tensor` randomly
// chosen entries of every trainable tensor. The error per entry is
// |analytic - fd| / (|analytic| + |fd| + 1e-12).
//
// Throws ConfigError if epsilon is outside [1e-7, 1e-4] or a parameter is
// not finite.
GradCheckResult grad_check(const ParameterSet& params, const LossBuilder& loss, double epsilon,
                           std::size_t samples_per_tensor = 16, std::uint64_t seed = 1,
                           const TrainablePredicate& trainable = {});

}  // namespace bsfb::nn
