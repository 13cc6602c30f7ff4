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

// Internal helpers shared by the model sources.

#include <cstddef>

#include <Eigen/Dense>

#include "bsfb/beamspace/beamspace.hpp"

namespace bsfb::models::detail {

// Sparse beam-domain vector holding the quantized responses of the top-l
// beams ranked by `select_mag`.
Eigen::VectorXcd selected_feedback_estimate(const Eigen::VectorXcd& h_bs, const Eigen::VectorXd& select_mag,
                                            std::size_t l, int bits, beamspace::BeamSource source);

}  // namespace bsfb::models::detail
