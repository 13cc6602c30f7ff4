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

#include "bsfb/numerics/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "bsfb/errors.hpp"

namespace bsfb::nn {

namespace {

double evaluate(const ParameterSet& params, const LossBuilder& loss)
{
    Tape tape;
    Binding bind(tape, params, [](const std::string&) { return false; });
    return tape.value(loss(bind))[0];
}

}  // namespace

GradCheckResult grad_check(const ParameterSet& params, const LossBuilder& loss, double epsilon,
                           std::size_t samples_per_tensor, std::uint64_t seed, const TrainablePredicate& trainable)
{
    if (!(epsilon >= 1e-7 && epsilon <= 1e-4)) {
        throw ConfigError("grad_check epsilon must lie in [1e-7, 1e-4]");
    }
    for (const auto& p : params) {
        for (double x : p.value.data()) {
            if (!std::isfinite(x)) {
                throw ConfigError("grad_check: parameter '" + p.name + "' is not finite");
            }
        }
    }

    Tape tape;
    Binding bind(tape, params, trainable);
    Var root = loss(bind);
    tape.backward(root);
    const ParameterSet analytic = bind.gradients();

    GradCheckResult result;
    std::mt19937_64 rng(seed);
    ParameterSet probe = params;
    for (const auto& p : params) {
        if (trainable && !trainable(p.name)) {
            continue;
        }
        std::vector<std::size_t> order(p.value.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), rng);
        order.resize(std::min(order.size(), samples_per_tensor));
        Tensor& slot = probe.at(p.name);
        for (std::size_t idx : order) {
            const double saved = slot[idx];
            slot[idx] = saved + epsilon;
            const double up = evaluate(probe, loss);
            slot[idx] = saved - epsilon;
            const double down = evaluate(probe, loss);
            slot[idx] = saved;
            const double fd = (up - down) / (2.0 * epsilon);
            const double an = analytic.at(p.name)[idx];
            const double err = std::abs(an - fd) / (std::abs(an) + std::abs(fd) + 1e-12);
            ++result.checked;
            if (err > result.max_relative_error || result.checked == 1) {
                result.max_relative_error = std::max(err, result.max_relative_error);
                result.worst_parameter = p.name;
                result.worst_index = idx;
            }
        }
    }
    return result;
}

}  // namespace bsfb::nn
