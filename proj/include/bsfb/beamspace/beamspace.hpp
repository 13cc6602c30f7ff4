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

// Orthogonal beam matrix and beam-domain helpers.
//
// B = F_V kron F_H with F_N[m, k] = exp(-j 2 pi m k / N) / sqrt(N), so beam
// b = k + N_H * q pairs horizontal DFT bin k with vertical bin q, matching the
// antenna ordering of the channel module. Beam domain: h_bs = B^T h; its
// inverse is h = conj(B) h_bs.

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "bsfb/channel/channel.hpp"

namespace bsfb::beamspace {

struct ObmMatrix {
    Eigen::MatrixXcd b;
    channel::UpaGeometry geometry;

    std::size_t n_b() const noexcept { return static_cast<std::size_t>(b.rows()); }
};

enum class BeamSource { ul, dl };

struct BeamSelection {
    // Sorted by decreasing magnitude.
    std::vector<std::size_t> indices;
    BeamSource source = BeamSource::ul;
};

ObmMatrix build_obm(const channel::UpaGeometry& geometry);

// Accepts a vector or an N_b x K matrix (column-wise transform).
Eigen::MatrixXcd to_beam_domain(const Eigen::MatrixXcd& h, const ObmMatrix& obm);
Eigen::MatrixXcd from_beam_domain(const Eigen::MatrixXcd& h_bs, const ObmMatrix& obm);

// The l largest entries, ties broken toward the lower index. ConfigError
// unless 1 <= l <= size.
BeamSelection select_top_beams(const Eigen::VectorXd& magnitudes, std::size_t l,
                               BeamSource source = BeamSource::ul);

// Places values[i] at selection.indices[i] of a zero vector of length n_b.
Eigen::VectorXcd sparse_map(const Eigen::VectorXcd& values, const BeamSelection& selection, std::size_t n_b);

// Share of ||h_bs||^2 held by its l strongest entries. UndefinedError for a
// zero vector.
double beam_energy_fraction(const Eigen::VectorXcd& h_bs, std::size_t l);

// Overlap |A intersect B| / l of the top-l beam sets of two magnitude vectors.
double top_set_overlap(const Eigen::VectorXd& a, const Eigen::VectorXd& b, std::size_t l);

}  // namespace bsfb::beamspace
