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

#include <random>

#include "bsfb/beamspace/beamspace.hpp"
#include "bsfb/errors.hpp"
#include "test_util.hpp"

using namespace bsfb::beamspace;
using bsfb::channel::UpaGeometry;

TEST_SUITE("build_obm")
{
    TEST_CASE("single element")
    {
        auto obm = build_obm(UpaGeometry{1, 1, 0.5});
        REQUIRE(obm.b.rows() == 1);
        CHECK(std::abs(obm.b(0, 0) - std::complex<double>(1.0, 0.0)) < 1e-15);
    }

    TEST_CASE("unitary for 8x4")
    {
        auto obm = build_obm(UpaGeometry{8, 4, 0.5});
        const auto eye = Eigen::MatrixXcd::Identity(32, 32);
        CHECK((obm.b.adjoint() * obm.b - eye).cwiseAbs().maxCoeff() < 1e-10);
        for (Eigen::Index j = 0; j < 32; ++j) {
            CHECK(std::abs(obm.b.col(j).norm() - 1.0) < 1e-12);
        }
    }

    TEST_CASE("2x2 geometry equals the hand-expanded Kronecker product")
    {
        // F_2 = [[1, 1], [1, -1]] / sqrt(2), so F_2 kron F_2 has entries +-1/2.
        const double h = 0.5;
        Eigen::MatrixXd expected(4, 4);
        expected << h, h, h, h,
                    h, -h, h, -h,
                    h, h, -h, -h,
                    h, -h, -h, h;
        auto obm = build_obm(UpaGeometry{2, 2, 0.5});
        CHECK((obm.b - expected.cast<std::complex<double>>()).cwiseAbs().maxCoeff() < 1e-15);
    }

    TEST_CASE("unitarity and Parseval over random geometries")
    {
        std::mt19937_64 rng(3);
        std::uniform_int_distribution<std::size_t> dim(1, 16);
        for (int trial = 0; trial < 20; ++trial) {
            UpaGeometry g{dim(rng), dim(rng), 0.5};
            auto obm = build_obm(g);
            const auto n = static_cast<Eigen::Index>(g.n_b());
            CHECK((obm.b.adjoint() * obm.b - Eigen::MatrixXcd::Identity(n, n)).cwiseAbs().maxCoeff() < 1e-10);
            Eigen::VectorXcd h = bsfb::test::random_complex(n, 1, rng);
            CHECK(std::abs(to_beam_domain(h, obm).norm() - h.norm()) < 1e-10 * h.norm());
        }
    }
}

TEST_SUITE("beam domain")
{
    TEST_CASE("round trip and Parseval")
    {
        std::mt19937_64 rng(5);
        auto obm = build_obm(UpaGeometry{8, 4, 0.5});
        Eigen::VectorXcd h = bsfb::test::random_complex(32, 1, rng);
        Eigen::VectorXcd back = from_beam_domain(to_beam_domain(h, obm), obm);
        CHECK((back - h).norm() < 1e-10);
        CHECK(std::abs(to_beam_domain(h, obm).norm() - h.norm()) < 1e-10);
    }

    TEST_CASE("conjugated OBM column maps to a unit vector")
    {
        auto obm = build_obm(UpaGeometry{8, 4, 0.5});
        for (Eigen::Index k : {0, 5, 31}) {
            Eigen::VectorXcd h = obm.b.col(k).conjugate();
            Eigen::VectorXcd hb = to_beam_domain(h, obm);
            for (Eigen::Index i = 0; i < 32; ++i) {
                CHECK(std::abs(std::abs(hb(i)) - (i == k ? 1.0 : 0.0)) < 1e-12);
            }
        }
    }

    TEST_CASE("length mismatch is a dimension error")
    {
        auto obm = build_obm(UpaGeometry{4, 2, 0.5});
        CHECK_THROWS_AS(to_beam_domain(Eigen::VectorXcd::Ones(7), obm), bsfb::DimensionError);
        CHECK_THROWS_AS(from_beam_domain(Eigen::VectorXcd::Ones(9), obm), bsfb::DimensionError);
    }
}

TEST_SUITE("select_top_beams")
{
    TEST_CASE("picks the largest")
    {
        Eigen::VectorXd m(4);
        m << 0.1, 0.9, 0.5, 0.2;
        auto s = select_top_beams(m, 2);
        CHECK(s.indices == std::vector<std::size_t>{1, 2});
    }

    TEST_CASE("ties go to the lowest index")
    {
        auto s = select_top_beams(Eigen::VectorXd::Constant(6, 0.3), 3);
        CHECK(s.indices == std::vector<std::size_t>{0, 1, 2});
    }

    TEST_CASE("l = N_b returns every index")
    {
        Eigen::VectorXd m(4);
        m << 0.1, 0.9, 0.5, 0.2;
        auto s = select_top_beams(m, 4);
        CHECK(s.indices == std::vector<std::size_t>{1, 2, 3, 0});
    }

    TEST_CASE("out-of-range l is a config error")
    {
        CHECK_THROWS_AS(select_top_beams(Eigen::VectorXd::Ones(4), 0), bsfb::ConfigError);
        CHECK_THROWS_AS(select_top_beams(Eigen::VectorXd::Ones(4), 5), bsfb::ConfigError);
    }

    TEST_CASE("scale invariance")
    {
        std::mt19937_64 rng(8);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (int t = 0; t < 20; ++t) {
            Eigen::VectorXd m(32);
            for (auto& x : m) {
                x = u(rng);
            }
            for (double c : {1e-6, 0.37, 250.0}) {
                CHECK(select_top_beams(m, 8).indices == select_top_beams(c * m, 8).indices);
            }
        }
    }
}

TEST_SUITE("sparse_map")
{
    TEST_CASE("places values at the selected beams")
    {
        Eigen::VectorXcd v(2);
        v << std::complex<double>(1, 2), std::complex<double>(-3, 0.5);
        BeamSelection s{{1, 3}, BeamSource::ul};
        Eigen::VectorXcd out = sparse_map(v, s, 4);
        CHECK(out(0) == std::complex<double>(0, 0));
        CHECK(out(1) == v(0));
        CHECK(out(2) == std::complex<double>(0, 0));
        CHECK(out(3) == v(1));
    }

    TEST_CASE("full selection is a permuted copy")
    {
        Eigen::VectorXcd v(3);
        v << 1.0, 2.0, 3.0;
        Eigen::VectorXcd out = sparse_map(v, BeamSelection{{2, 0, 1}, BeamSource::dl}, 3);
        CHECK(out(2) == 1.0);
        CHECK(out(0) == 2.0);
        CHECK(out(1) == 3.0);
    }

    TEST_CASE("gathering at the selection recovers the values")
    {
        std::mt19937_64 rng(9);
        Eigen::VectorXcd v = bsfb::test::random_complex(5, 1, rng);
        BeamSelection s{{7, 2, 30, 11, 0}, BeamSource::ul};
        Eigen::VectorXcd out = sparse_map(v, s, 32);
        for (std::size_t i = 0; i < 5; ++i) {
            CHECK(out(static_cast<Eigen::Index>(s.indices[i])) == v(static_cast<Eigen::Index>(i)));
        }
    }

    TEST_CASE("bad index or length")
    {
        CHECK_THROWS_AS(sparse_map(Eigen::VectorXcd::Ones(1), BeamSelection{{4}, BeamSource::ul}, 4),
                        bsfb::DimensionError);
        CHECK_THROWS_AS(sparse_map(Eigen::VectorXcd::Ones(2), BeamSelection{{1}, BeamSource::ul}, 4),
                        bsfb::DimensionError);
    }
}

TEST_SUITE("beam_energy_fraction")
{
    TEST_CASE("l = N_b keeps everything")
    {
        std::mt19937_64 rng(10);
        CHECK(beam_energy_fraction(bsfb::test::random_complex(16, 1, rng), 16) == doctest::Approx(1.0));
    }

    TEST_CASE("one-sparse vector")
    {
        Eigen::VectorXcd h = Eigen::VectorXcd::Zero(8);
        h(5) = {0.0, -2.0};
        CHECK(beam_energy_fraction(h, 1) == 1.0);
    }

    TEST_CASE("uniform magnitude, half the beams")
    {
        Eigen::VectorXcd h(8);
        for (Eigen::Index i = 0; i < 8; ++i) {
            h(i) = std::polar(1.0, 0.7 * static_cast<double>(i));
        }
        CHECK(std::abs(beam_energy_fraction(h, 4) - 0.5) < 1e-12);
    }

    TEST_CASE("zero vector is undefined")
    {
        CHECK_THROWS_AS(beam_energy_fraction(Eigen::VectorXcd::Zero(4), 2), bsfb::UndefinedError);
    }
}
