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

#include <doctest.h>

#include <cmath>
#include <random>

#include "bsfb/errors.hpp"
#include "bsfb/recovery/recovery.hpp"
#include "test_util.hpp"

using namespace bsfb;
using namespace bsfb::recovery;
using airlink::MergingMatrix;

namespace {

MergingMatrix random_t(std::size_t n_b, std::size_t l, std::mt19937_64& rng)
{
    return MergingMatrix::normalized(test::random_complex(static_cast<Eigen::Index>(n_b), static_cast<Eigen::Index>(l), rng));
}

// Brute-force pseudoinverse solution of A x = g, A = T^T.
Eigen::VectorXcd pinv_oracle(const MergingMatrix& t, const Eigen::VectorXcd& g)
{
    Eigen::MatrixXcd a = t.t.transpose();
    return a.completeOrthogonalDecomposition().pseudoInverse() * g;
}

Eigen::VectorXcd planted_sparse(std::size_t n_b, std::size_t k, std::mt19937_64& rng)
{
    Eigen::VectorXcd x = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(n_b));
    std::uniform_int_distribution<std::size_t> pick(0, n_b - 1);
    std::uniform_real_distribution<double> mag(0.5, 1.5);
    std::uniform_real_distribution<double> ph(0.0, 6.283185307179586);
    std::size_t placed = 0;
    while (placed < k) {
        const auto i = static_cast<Eigen::Index>(pick(rng));
        if (x(i) == std::complex<double>(0.0, 0.0)) {
            x(i) = std::polar(mag(rng), ph(rng));
            ++placed;
        }
    }
    return x;
}

}  // namespace

TEST_SUITE("recover_selected_beams")
{
    TEST_CASE("all beams with exact values recover h")
    {
        std::mt19937_64 rng(1);
        auto obm = beamspace::build_obm(channel::UpaGeometry{8, 4, 0.5});
        Eigen::VectorXcd h = test::random_complex(32, 1, rng);
        Eigen::VectorXcd hb = beamspace::to_beam_domain(h, obm);
        auto sel = beamspace::select_top_beams(hb.cwiseAbs(), 32);
        Eigen::VectorXcd values(32);
        for (std::size_t i = 0; i < 32; ++i) {
            values(static_cast<Eigen::Index>(i)) = hb(static_cast<Eigen::Index>(sel.indices[i]));
        }
        CHECK((recover_selected_beams(values, sel, obm) - h).norm() < 1e-10);
    }

    TEST_CASE("zero values give zero")
    {
        auto obm = beamspace::build_obm(channel::UpaGeometry{4, 2, 0.5});
        beamspace::BeamSelection sel{{1, 5}, beamspace::BeamSource::ul};
        CHECK(recover_selected_beams(Eigen::VectorXcd::Zero(2), sel, obm).norm() == 0.0);
    }

    TEST_CASE("beam-sparse channel on the selection is exact")
    {
        auto obm = beamspace::build_obm(channel::UpaGeometry{8, 4, 0.5});
        Eigen::VectorXcd hb = Eigen::VectorXcd::Zero(32);
        hb(13) = {0.4, -0.9};
        Eigen::VectorXcd h = beamspace::from_beam_domain(hb, obm);
        beamspace::BeamSelection sel{{13, 2, 7}, beamspace::BeamSource::ul};
        Eigen::VectorXcd values(3);
        values << hb(13), 0.0, 0.0;
        CHECK((recover_selected_beams(values, sel, obm) - h).norm() < 1e-12);
    }
}

TEST_SUITE("min_norm_recover")
{
    TEST_CASE("selection T places g on the selected beams")
    {
        auto t = MergingMatrix::selection(8, {6, 1, 3});
        Eigen::VectorXcd g(3);
        g << std::complex<double>(1, 1), 2.0, std::complex<double>(0, -3);
        Eigen::VectorXcd h = min_norm_recover(g, t, 0.0);
        Eigen::VectorXcd expected = Eigen::VectorXcd::Zero(8);
        expected(6) = g(0);
        expected(1) = g(1);
        expected(3) = g(2);
        CHECK((h - expected).norm() < 1e-12);
    }

    TEST_CASE("trace of the projector equals L")
    {
        std::mt19937_64 rng(2);
        for (std::size_t l : {1u, 3u, 8u, 16u}) {
            CHECK(std::abs(build_itilde(random_t(32, l, rng)).trace().real() - static_cast<double>(l)) < 1e-9);
        }
    }

    TEST_CASE("matches a pseudoinverse oracle")
    {
        std::mt19937_64 rng(3);
        auto t = random_t(8, 3, rng);
        Eigen::VectorXcd h = test::random_complex(8, 1, rng);
        Eigen::VectorXcd g = t.t.transpose() * h;
        CHECK((min_norm_recover(g, t, 0.0) - pinv_oracle(t, g)).norm() < 1e-9);
        // Default ridge stays close to the exact solution.
        CHECK((min_norm_recover(g, t) - pinv_oracle(t, g)).norm() < 1e-6);
    }

    TEST_CASE("equals the projector applied to h")
    {
        std::mt19937_64 rng(4);
        for (int trial = 0; trial < 20; ++trial) {
            auto t = random_t(32, 8, rng);
            Eigen::VectorXcd h = test::random_complex(32, 1, rng);
            Eigen::VectorXcd g = t.t.transpose() * h;
            CHECK((min_norm_recover(g, t, 0.0) - build_itilde(t) * h).norm() < 1e-9);
        }
    }

    TEST_CASE("rank deficiency without ridge is a singularity error")
    {
        Eigen::MatrixXcd raw = Eigen::MatrixXcd::Zero(6, 2);
        raw(0, 0) = 1.0;
        raw(0, 1) = 1.0;
        auto t = MergingMatrix::normalized(raw);
        try {
            min_norm_recover(Eigen::VectorXcd::Ones(2), t, 0.0);
            FAIL("expected SingularityError");
        } catch (const SingularityError& e) {
            CHECK(std::string(e.what()).find("condition number") != std::string::npos);
        }
        CHECK_THROWS_AS(build_itilde(t), SingularityError);
        CHECK_NOTHROW(min_norm_recover(Eigen::VectorXcd::Ones(2), t));
    }

    TEST_CASE("length mismatch")
    {
        std::mt19937_64 rng(5);
        CHECK_THROWS_AS(min_norm_recover(Eigen::VectorXcd::Ones(4), random_t(8, 3, rng)), DimensionError);
    }
}

TEST_SUITE("build_itilde")
{
    TEST_CASE("idempotent, Hermitian, eigenvalues L ones")
    {
        std::mt19937_64 rng(6);
        for (std::size_t l : {2u, 5u, 11u}) {
            Eigen::MatrixXcd p = build_itilde(random_t(16, l, rng));
            CHECK((p * p - p).cwiseAbs().maxCoeff() < 1e-9);
            CHECK((p - p.adjoint()).cwiseAbs().maxCoeff() < 1e-12);
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig(p);
            const Eigen::VectorXd ev = eig.eigenvalues();  // ascending
            for (Eigen::Index i = 0; i < ev.size(); ++i) {
                const double expected = i >= ev.size() - static_cast<Eigen::Index>(l) ? 1.0 : 0.0;
                CHECK(std::abs(ev(i) - expected) < 1e-9);
            }
        }
    }

    TEST_CASE("trace identity over 100 random full-rank T")
    {
        std::mt19937_64 rng(7);
        std::uniform_int_distribution<std::size_t> pick(1, 24);
        for (int i = 0; i < 100; ++i) {
            const std::size_t l = pick(rng);
            CHECK(std::abs(build_itilde(random_t(24, l, rng)).trace().real() - static_cast<double>(l)) < 1e-9);
        }
    }
}

TEST_SUITE("ista_recover")
{
    TEST_CASE("huge lambda shrinks everything")
    {
        std::mt19937_64 rng(8);
        auto t = random_t(32, 16, rng);
        Eigen::VectorXcd g = test::random_complex(16, 1, rng);
        IstaOptions o;
        o.lambda = (t.t.conjugate() * g).cwiseAbs().maxCoeff() * 1.01;
        CHECK(ista_recover(g, t, o).x.norm() == 0.0);
    }

    TEST_CASE("zero feedback gives zero")
    {
        std::mt19937_64 rng(9);
        CHECK(ista_recover(Eigen::VectorXcd::Zero(16), random_t(32, 16, rng), IstaOptions::fixed_lambda()).x.norm() == 0.0);
    }

    TEST_CASE("planted 3-sparse recovery with continuation")
    {
        std::mt19937_64 rng(10);
        for (int trial = 0; trial < 5; ++trial) {
            auto t = random_t(32, 16, rng);
            Eigen::VectorXcd x = planted_sparse(32, 3, rng);
            Eigen::VectorXcd g = t.t.transpose() * x;
            auto r = ista_recover(g, t, IstaOptions::continuation_schedule(1e-4));
            CHECK((r.x - x).norm() / x.norm() < 1e-3);
        }
    }

    TEST_CASE("objective is nonincreasing for the fixed-lambda preset")
    {
        std::mt19937_64 rng(11);
        auto t = random_t(32, 8, rng);
        Eigen::VectorXcd g = test::random_complex(8, 1, rng);
        IstaOptions o = IstaOptions::fixed_lambda();
        o.record_objective = true;
        auto r = ista_recover(g, t, o);
        CHECK(r.iterations <= 3000);
        REQUIRE(r.objective.size() == r.iterations);
        for (std::size_t i = 1; i < r.objective.size(); ++i) {
            CHECK(r.objective[i] <= r.objective[i - 1] * (1.0 + 1e-12));
        }
    }
}

TEST_SUITE("nmse_db")
{
    TEST_CASE("perfect, zero and half-scale estimates")
    {
        std::mt19937_64 rng(12);
        std::vector<Eigen::MatrixXcd> truth{test::random_complex(8, 2, rng), test::random_complex(8, 2, rng)};
        CHECK(nmse_db(truth, truth) == kNmseFloorDb);
        std::vector<Eigen::MatrixXcd> zero{Eigen::MatrixXcd::Zero(8, 2), Eigen::MatrixXcd::Zero(8, 2)};
        CHECK(std::abs(nmse_db(zero, truth)) < 1e-12);
        std::vector<Eigen::MatrixXcd> half{0.5 * truth[0], 0.5 * truth[1]};
        CHECK(std::abs(nmse_db(half, truth) - (-6.0206)) < 1e-4);
    }

    TEST_CASE("scale free")
    {
        std::mt19937_64 rng(13);
        std::vector<Eigen::MatrixXcd> truth{test::random_complex(8, 1, rng)};
        std::vector<Eigen::MatrixXcd> est{truth[0] + 0.1 * test::random_complex(8, 1, rng)};
        const double base = nmse_db(est, truth);
        for (std::complex<double> c : {std::complex<double>(3.0, 0.0), std::complex<double>(0.0, -0.01)}) {
            std::vector<Eigen::MatrixXcd> t2{c * truth[0]};
            std::vector<Eigen::MatrixXcd> e2{c * est[0]};
            CHECK(std::abs(nmse_db(e2, t2) - base) < 1e-10);
        }
    }

    TEST_CASE("zero truth is undefined")
    {
        std::vector<Eigen::MatrixXcd> truth{Eigen::MatrixXcd::Zero(4, 1)};
        CHECK_THROWS_AS(nmse_db(truth, truth), UndefinedError);
    }

    TEST_CASE("report serialises")
    {
        RecoveryReport r{Eigen::MatrixXcd::Ones(2, 1), "bs-ul", -12.5, 0.25};
        auto j = r.to_json();
        CHECK(j["method"] == "bs-ul");
        CHECK(j["estimate_re"].size() == 2);
    }
}
