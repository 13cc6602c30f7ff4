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
#include <chrono>
#include <random>

#include "bsfb/errors.hpp"
#include "bsfb/models/detail.hpp"
#include "bsfb/models/models.hpp"
#include "bsfb/recovery/recovery.hpp"
#include "bsfb/rng.hpp"

namespace bsfb::models {

namespace {

airlink::MergingMatrix gaussian_merging(std::size_t n_b, std::size_t l, std::uint64_t seed)
{
    std::mt19937_64 rng = derive_rng(seed, 0x49535441);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::MatrixXcd t(static_cast<Eigen::Index>(n_b), static_cast<Eigen::Index>(l));
    for (Eigen::Index j = 0; j < t.cols(); ++j) {
        for (Eigen::Index i = 0; i < t.rows(); ++i) {
            const double re = gauss(rng);
            const double im = gauss(rng);
            t(i, j) = {re, im};
        }
    }
    return airlink::MergingMatrix::normalized(std::move(t));
}

}  // namespace

std::string baseline_name(Baseline b)
{
    switch (b) {
    case Baseline::bs_ul:
        return "bs-ul";
    case Baseline::bs_dl:
        return "bs-dl";
    case Baseline::ista_fixed:
        return "ista";
    case Baseline::ista_continuation:
        return "ista-continuation";
    }
    return "unknown";
}

Baseline parse_baseline(const std::string& name)
{
    for (Baseline b : {Baseline::bs_ul, Baseline::bs_dl, Baseline::ista_fixed, Baseline::ista_continuation}) {
        if (baseline_name(b) == name) {
            return b;
        }
    }
    throw ConfigError("unknown baseline '" + name + "'");
}

Evaluation evaluate_baseline(Baseline baseline, const std::vector<Example>& examples, std::size_t l, int bits,
                             std::uint64_t seed)
{
    if (examples.empty()) {
        throw ConfigError("baseline evaluation needs at least one example");
    }
    const auto start = std::chrono::steady_clock::now();
    const auto n_b = static_cast<std::size_t>(examples.front().h_bs.rows());
    if (l == 0 || l > n_b) {
        throw ConfigError("L must lie in [1, N_b], got " + std::to_string(l));
    }
    std::optional<airlink::MergingMatrix> t;
    recovery::IstaOptions ista;
    if (baseline == Baseline::ista_fixed || baseline == Baseline::ista_continuation) {
        t = gaussian_merging(n_b, l, seed);
        ista = baseline == Baseline::ista_fixed ? recovery::IstaOptions::fixed_lambda()
                                                : recovery::IstaOptions::continuation_schedule();
    }
    Evaluation out;
    for (const Example& e : examples) {
        if (static_cast<std::size_t>(e.h_bs.rows()) != n_b) {
            throw DimensionError("examples disagree on N_b");
        }
        Eigen::MatrixXcd est(e.h_bs.rows(), e.h_bs.cols());
        for (Eigen::Index k = 0; k < e.h_bs.cols(); ++k) {
            switch (baseline) {
            case Baseline::bs_ul:
                est.col(k) = detail::selected_feedback_estimate(e.h_bs.col(k), e.ul_mag.col(k), l, bits,
                                                                beamspace::BeamSource::ul);
                break;
            case Baseline::bs_dl:
                est.col(k) = detail::selected_feedback_estimate(e.h_bs.col(k), e.h_bs.col(k).cwiseAbs(), l, bits,
                                                                beamspace::BeamSource::dl);
                break;
            case Baseline::ista_fixed:
            case Baseline::ista_continuation: {
                const Eigen::VectorXcd g = t->t.transpose() * e.h_bs.col(k);
                const Eigen::MatrixXcd g_bar = airlink::dequantize(airlink::quantize_feedback(g, bits));
                est.col(k) = recovery::ista_recover(g_bar.col(0), *t, ista).x;
                break;
            }
            }
        }
        out.estimates.push_back(std::move(est));
        out.truths.push_back(e.h_bs);
    }
    out.nmse_db = recovery::nmse_db(out.estimates, out.truths);
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
}

}  // namespace bsfb::models
