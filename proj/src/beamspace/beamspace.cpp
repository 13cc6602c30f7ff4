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

#include "bsfb/beamspace/beamspace.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "bsfb/errors.hpp"

namespace bsfb::beamspace {

namespace {

Eigen::MatrixXcd unitary_dft(std::size_t n)
{
    const auto size = static_cast<Eigen::Index>(n);
    Eigen::MatrixXcd f(size, size);
    const double norm = 1.0 / std::sqrt(static_cast<double>(n));
    for (std::size_t m = 0; m < n; ++m) {
        for (std::size_t k = 0; k < n; ++k) {
            // Reduce m*k mod n first so large grids keep full phase accuracy.
            const double phase = -2.0 * std::numbers::pi * static_cast<double>((m * k) % n) / static_cast<double>(n);
            f(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(k)) = std::polar(norm, phase);
        }
    }
    return f;
}

void require_rows(const Eigen::MatrixXcd& h, const ObmMatrix& obm, const char* op)
{
    if (static_cast<std::size_t>(h.rows()) != obm.n_b()) {
        throw DimensionError(std::string(op) + ": expected " + std::to_string(obm.n_b()) + " rows, got " +
                             std::to_string(h.rows()));
    }
}

}  // namespace

ObmMatrix build_obm(const channel::UpaGeometry& geometry)
{
    geometry.validate();
    const Eigen::MatrixXcd fh = unitary_dft(geometry.n_h);
    const Eigen::MatrixXcd fv = unitary_dft(geometry.n_v);
    const auto nh = static_cast<Eigen::Index>(geometry.n_h);
    const auto nv = static_cast<Eigen::Index>(geometry.n_v);
    ObmMatrix obm;
    obm.geometry = geometry;
    obm.b.resize(nh * nv, nh * nv);
    for (Eigen::Index n = 0; n < nv; ++n) {
        for (Eigen::Index q = 0; q < nv; ++q) {
            obm.b.block(n * nh, q * nh, nh, nh) = fv(n, q) * fh;
        }
    }
    return obm;
}

Eigen::MatrixXcd to_beam_domain(const Eigen::MatrixXcd& h, const ObmMatrix& obm)
{
    require_rows(h, obm, "to_beam_domain");
    return obm.b.transpose() * h;
}

Eigen::MatrixXcd from_beam_domain(const Eigen::MatrixXcd& h_bs, const ObmMatrix& obm)
{
    require_rows(h_bs, obm, "from_beam_domain");
    return obm.b.conjugate() * h_bs;
}

BeamSelection select_top_beams(const Eigen::VectorXd& magnitudes, std::size_t l, BeamSource source)
{
    const auto n = static_cast<std::size_t>(magnitudes.size());
    if (l < 1 || l > n) {
        throw ConfigError("beam selection size " + std::to_string(l) + " outside [1, " + std::to_string(n) + "]");
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return magnitudes(static_cast<Eigen::Index>(a)) > magnitudes(static_cast<Eigen::Index>(b));
    });
    order.resize(l);
    return BeamSelection{std::move(order), source};
}

Eigen::VectorXcd sparse_map(const Eigen::VectorXcd& values, const BeamSelection& selection, std::size_t n_b)
{
    if (static_cast<std::size_t>(values.size()) != selection.indices.size()) {
        throw DimensionError("sparse_map: " + std::to_string(values.size()) + " values for " +
                             std::to_string(selection.indices.size()) + " beams");
    }
    Eigen::VectorXcd out = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(n_b));
    for (std::size_t i = 0; i < selection.indices.size(); ++i) {
        const std::size_t b = selection.indices[i];
        if (b >= n_b) {
            throw DimensionError("sparse_map: beam index " + std::to_string(b) + " out of range");
        }
        out(static_cast<Eigen::Index>(b)) = values(static_cast<Eigen::Index>(i));
    }
    return out;
}

double beam_energy_fraction(const Eigen::VectorXcd& h_bs, std::size_t l)
{
    const double total = h_bs.squaredNorm();
    if (!(total > 0.0)) {
        throw UndefinedError("beam energy fraction of a zero vector");
    }
    const Eigen::VectorXd power = h_bs.cwiseAbs2();
    const BeamSelection top = select_top_beams(power, l);
    double kept = 0.0;
    for (std::size_t b : top.indices) {
        kept += power(static_cast<Eigen::Index>(b));
    }
    return kept / total;
}

double top_set_overlap(const Eigen::VectorXd& a, const Eigen::VectorXd& b, std::size_t l)
{
    auto sa = select_top_beams(a, l).indices;
    auto sb = select_top_beams(b, l).indices;
    std::sort(sa.begin(), sa.end());
    std::sort(sb.begin(), sb.end());
    std::vector<std::size_t> common;
    std::set_intersection(sa.begin(), sa.end(), sb.begin(), sb.end(), std::back_inserter(common));
    return static_cast<double>(common.size()) / static_cast<double>(l);
}

}  // namespace bsfb::beamspace
