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

// Classical DL CSI recovery from fed-back beam responses, and the NMSE metric.

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "bsfb/airlink/airlink.hpp"
#include "bsfb/beamspace/beamspace.hpp"

namespace bsfb::recovery {

// Antenna-domain estimate conj(B_S) values from the selected beams.
Eigen::VectorXcd recover_selected_beams(const Eigen::VectorXcd& values, const beamspace::BeamSelection& selection,
                                        const beamspace::ObmMatrix& obm);

inline constexpr double kDefaultRidge = 1e-8;

// Minimum-norm beam-domain solution of T^T h = g:
//   h = conj(T) (T^T conj(T) + eps I)^{-1} g,  eps = ridge * sigma_max(T)^2,
// evaluated through the SVD of A = T^T. With ridge = 0 a rank-deficient T
// raises SingularityError quoting its condition number.
Eigen::VectorXcd min_norm_recover(const Eigen::VectorXcd& g, const airlink::MergingMatrix& t,
                                  double ridge = kDefaultRidge);

// Projector sum_i v_i v_i^H onto the span of the L right singular vectors of
// A = T^T, so min_norm_recover(T^T h, T, 0) == build_itilde(T) h.
Eigen::MatrixXcd build_itilde(const airlink::MergingMatrix& t);

struct IstaOptions {
    double lambda = 0.5;
    std::size_t max_iters = 3000;
    double tolerance = 1e-10;
    // Geometric continuation: lambda starts at start_fraction * ||A^H g||_inf
    // and is multiplied by `decay` each stage until it reaches `lambda`.
    bool continuation = false;
    double start_fraction = 0.5;
    double decay = 0.5;
    std::size_t stage_iters = 200;
    bool record_objective = false;

    static IstaOptions fixed_lambda();
    static IstaOptions continuation_schedule(double lambda_final = 1e-4);
};

struct IstaResult {
    Eigen::VectorXcd x;
    std::size_t iterations = 0;
    // 0.5 ||A x - g||^2 + lambda ||x||_1 after each iteration at the final
    // lambda, when requested.
    std::vector<double> objective;
};

// Proximal gradient on 0.5 ||T^T x - g||^2 + lambda ||x||_1 with step
// 1 / sigma_max(T)^2 and complex soft-thresholding of the modulus.
IstaResult ista_recover(const Eigen::VectorXcd& g, const airlink::MergingMatrix& t, const IstaOptions& options);

inline constexpr double kNmseFloorDb = -100.0;

// 10 log10 of the mean of ||est - truth||_F^2 / ||truth||_F^2, clamped below
// at -100 dB. UndefinedError on a zero truth or mismatched counts.
double nmse_db(const std::vector<Eigen::MatrixXcd>& estimates, const std::vector<Eigen::MatrixXcd>& truths);
double nmse_linear(const std::vector<Eigen::MatrixXcd>& estimates, const std::vector<Eigen::MatrixXcd>& truths);
double to_db(double linear);

struct RecoveryReport {
    Eigen::MatrixXcd estimate;
    std::string method;
    double nmse_db = 0.0;
    double seconds = 0.0;

    nlohmann::json to_json() const;
};

}  // namespace bsfb::recovery
