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

#include "bsfb/recovery/recovery.hpp"

#include <cmath>

#include "bsfb/errors.hpp"

namespace bsfb::recovery {

Eigen::VectorXcd recover_selected_beams(const Eigen::VectorXcd& values, const beamspace::BeamSelection& selection,
                                        const beamspace::ObmMatrix& obm)
{
    return beamspace::from_beam_domain(beamspace::sparse_map(values, selection, obm.n_b()), obm);
}

namespace {

void check_inputs(const Eigen::VectorXcd& g, const airlink::MergingMatrix& t)
{
    if (!t.t.allFinite()) {
        throw DimensionError("merging matrix has non-finite entries");
    }
    if (static_cast<std::size_t>(g.size()) != t.l()) {
        throw DimensionError("feedback length " + std::to_string(g.size()) + " does not match L = " +
                             std::to_string(t.l()));
    }
}

// Thin SVD of A = T^T (L x N_b).
Eigen::JacobiSVD<Eigen::MatrixXcd> svd_of(const airlink::MergingMatrix& t)
{
    return Eigen::JacobiSVD<Eigen::MatrixXcd>(t.t.transpose(), Eigen::ComputeThinU | Eigen::ComputeThinV);
}

constexpr double kRankTolerance = 1e-12;

void require_full_rank(const Eigen::VectorXd& sigma, std::size_t l)
{
    const double smax = sigma.size() > 0 ? sigma(0) : 0.0;
    const double smin = static_cast<std::size_t>(sigma.size()) >= l && l > 0 ? sigma(static_cast<Eigen::Index>(l) - 1) : 0.0;
    if (!(smax > 0.0) || smin <= kRankTolerance * smax) {
        const double cond = smin > 0.0 ? smax / smin : std::numeric_limits<double>::infinity();
        throw SingularityError("merging matrix is rank deficient (condition number " + std::to_string(cond) + ")");
    }
}

}  // namespace

Eigen::VectorXcd min_norm_recover(const Eigen::VectorXcd& g, const airlink::MergingMatrix& t, double ridge)
{
    check_inputs(g, t);
    if (!(ridge >= 0.0)) {
        throw ConfigError("ridge must be nonnegative");
    }
    const auto svd = svd_of(t);
    const Eigen::VectorXd& sigma = svd.singularValues();
    if (ridge == 0.0) {
        require_full_rank(sigma, t.l());
    }
    const double eps = ridge * (sigma.size() > 0 ? sigma(0) * sigma(0) : 0.0);
    // A^H (A A^H + eps)^{-1} g = V diag(s / (s^2 + eps)) U^H g.
    Eigen::VectorXcd coeff = svd.matrixU().adjoint() * g;
    for (Eigen::Index i = 0; i < coeff.size(); ++i) {
        const double s = sigma(i);
        const double denom = s * s + eps;
        coeff(i) = denom > 0.0 ? coeff(i) * (s / denom) : 0.0;
    }
    return svd.matrixV() * coeff;
}

Eigen::MatrixXcd build_itilde(const airlink::MergingMatrix& t)
{
    if (t.l() > t.n_b()) {
        throw DimensionError("merging matrix has more columns than beams");
    }
    const auto svd = svd_of(t);
    require_full_rank(svd.singularValues(), t.l());
    const Eigen::MatrixXcd v = svd.matrixV().leftCols(static_cast<Eigen::Index>(t.l()));
    return v * v.adjoint();
}

IstaOptions IstaOptions::fixed_lambda()
{
    return IstaOptions{};
}

IstaOptions IstaOptions::continuation_schedule(double lambda_final)
{
    IstaOptions o;
    o.lambda = lambda_final;
    o.max_iters = 20000;
    o.continuation = true;
    return o;
}

namespace {

void soft_threshold(Eigen::VectorXcd& x, double thresh)
{
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double mag = std::abs(x(i));
        x(i) = mag > thresh ? x(i) * ((mag - thresh) / mag) : std::complex<double>(0.0, 0.0);
    }
}

double objective(const Eigen::MatrixXcd& a, const Eigen::VectorXcd& x, const Eigen::VectorXcd& g, double lambda)
{
    return 0.5 * (a * x - g).squaredNorm() + lambda * x.cwiseAbs().sum();
}

}  // namespace

IstaResult ista_recover(const Eigen::VectorXcd& g, const airlink::MergingMatrix& t, const IstaOptions& options)
{
    check_inputs(g, t);
    if (!(options.lambda >= 0.0) || options.max_iters < 1) {
        throw ConfigError("ISTA needs lambda >= 0 and at least one iteration");
    }
    const Eigen::MatrixXcd a = t.t.transpose();
    const Eigen::MatrixXcd ah = a.adjoint();
    IstaResult result;
    result.x = Eigen::VectorXcd::Zero(a.cols());
    const Eigen::JacobiSVD<Eigen::MatrixXcd> svd(a);
    const double smax = svd.singularValues().size() > 0 ? svd.singularValues()(0) : 0.0;
    if (!(smax > 0.0)) {
        return result;
    }
    const double mu = 1.0 / (smax * smax);

    double lambda = options.lambda;
    if (options.continuation) {
        const double start = options.start_fraction * (ah * g).cwiseAbs().maxCoeff();
        lambda = std::max(start, options.lambda);
    }
    std::size_t stage_count = 0;
    for (std::size_t it = 0; it < options.max_iters; ++it) {
        const bool final_stage = lambda <= options.lambda;
        Eigen::VectorXcd next = result.x - mu * (ah * (a * result.x - g));
        soft_threshold(next, mu * lambda);
        const double step = (next - result.x).norm();
        result.x = std::move(next);
        result.iterations = it + 1;
        if (final_stage && options.record_objective) {
            result.objective.push_back(objective(a, result.x, g, lambda));
        }
        ++stage_count;
        if (!final_stage && (stage_count >= options.stage_iters || step < options.tolerance)) {
            lambda = std::max(lambda * options.decay, options.lambda);
            stage_count = 0;
            continue;
        }
        if (final_stage && step < options.tolerance) {
            break;
        }
    }
    return result;
}

double to_db(double linear)
{
    if (!(linear > 0.0)) {
        return kNmseFloorDb;
    }
    return std::max(10.0 * std::log10(linear), kNmseFloorDb);
}

double nmse_linear(const std::vector<Eigen::MatrixXcd>& estimates, const std::vector<Eigen::MatrixXcd>& truths)
{
    if (estimates.size() != truths.size() || truths.empty()) {
        throw UndefinedError("nmse needs equally many estimates and truths, at least one");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < truths.size(); ++i) {
        if (estimates[i].rows() != truths[i].rows() || estimates[i].cols() != truths[i].cols()) {
            throw DimensionError("nmse: estimate " + std::to_string(i) + " has the wrong shape");
        }
        const double power = truths[i].squaredNorm();
        if (!(power > 0.0)) {
            throw UndefinedError("nmse: truth " + std::to_string(i) + " has zero norm");
        }
        acc += (estimates[i] - truths[i]).squaredNorm() / power;
    }
    return acc / static_cast<double>(truths.size());
}

double nmse_db(const std::vector<Eigen::MatrixXcd>& estimates, const std::vector<Eigen::MatrixXcd>& truths)
{
    return to_db(nmse_linear(estimates, truths));
}

nlohmann::json RecoveryReport::to_json() const
{
    nlohmann::json re = nlohmann::json::array();
    nlohmann::json im = nlohmann::json::array();
    for (Eigen::Index c = 0; c < estimate.cols(); ++c) {
        for (Eigen::Index r = 0; r < estimate.rows(); ++r) {
            re.push_back(estimate(r, c).real());
            im.push_back(estimate(r, c).imag());
        }
    }
    return nlohmann::json{{"method", method},
                          {"nmse_db", nmse_db},
                          {"seconds", seconds},
                          {"rows", estimate.rows()},
                          {"cols", estimate.cols()},
                          {"estimate_re", re},
                          {"estimate_im", im}};
}

}  // namespace bsfb::recovery
