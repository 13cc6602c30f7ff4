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

#include "bsfb/numerics/adam.hpp"

#include <cmath>

#include "bsfb/errors.hpp"

namespace bsfb::nn {

void adam_step(ParameterSet& params, const ParameterSet& grads, AdamState& state, double lr,
               const TrainablePredicate& trainable)
{
    for (const auto& p : params) {
        if (trainable && !trainable(p.name)) {
            continue;
        }
        const Tensor& g = grads.at(p.name);
        if (!g.same_shape(p.value)) {
            throw DimensionError("gradient for '" + p.name + "' has shape " + shape_string(g.shape()) +
                                 ", parameter has " + shape_string(p.value.shape()));
        }
        for (double x : g.data()) {
            if (!std::isfinite(x)) {
                throw TrainingError("non-finite gradient for parameter '" + p.name + "'");
            }
        }
    }

    const AdamConfig& c = state.config;
    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double correct1 = 1.0 - std::pow(c.beta1, t);
    const double correct2 = 1.0 - std::pow(c.beta2, t);
    for (auto& p : params) {
        if (trainable && !trainable(p.name)) {
            continue;
        }
        const Tensor& g = grads.at(p.name);
        auto m_it = state.first.try_emplace(p.name, p.value.shape(), 0.0).first;
        auto v_it = state.second.try_emplace(p.name, p.value.shape(), 0.0).first;
        Tensor& m = m_it->second;
        Tensor& v = v_it->second;
        for (std::size_t i = 0; i < g.size(); ++i) {
            m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
            v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
            const double m_hat = m[i] / correct1;
            const double v_hat = v[i] / correct2;
            p.value[i] -= lr * m_hat / (std::sqrt(v_hat) + c.epsilon);
        }
    }
}

}  // namespace bsfb::nn
