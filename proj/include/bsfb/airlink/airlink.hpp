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

// Pilot placement, beam-merged CSI-RS transmission, UE-side least-squares
// estimation and the quantized feedback payload.

#include <cstdint>
#include <iosfwd>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace bsfb::airlink {

struct PilotPlacement {
    std::size_t k_rbs = 0;
    std::size_t fr = 1;
    std::size_t br = 1;
    std::size_t n_b = 0;
    // Pilot resource elements per pilot-bearing RB.
    std::size_t l = 0;
    // 0-based RBs 0, FR, 2 FR, ... below K.
    std::vector<std::size_t> pilot_rb_indices;

    std::size_t total_res() const noexcept { return pilot_rb_indices.size() * l; }
};

// l = round(n_b / br). ConfigError if fr or br is zero, or if l or the pilot
// RB count would be zero.
PilotPlacement make_placement(std::size_t k_rbs, std::size_t fr, std::size_t br, std::size_t n_b);

/// N_b x L complex precoder mapping every beam onto L pilot REs.
struct MergingMatrix {
    Eigen::MatrixXcd t;

    std::size_t n_b() const noexcept { return static_cast<std::size_t>(t.rows()); }
    std::size_t l() const noexcept { return static_cast<std::size_t>(t.cols()); }

    // Scales every column to unit norm. UndefinedError on a zero column,
    // DimensionError on non-finite entries.
    static MergingMatrix normalized(Eigen::MatrixXcd t);
    // Column i is the unit vector e_{indices[i]}.
    static MergingMatrix selection(std::size_t n_b, const std::vector<std::size_t>& indices);
};

struct PilotSymbols {
    Eigen::VectorXcd s;

    // Unit-modulus constants exp(j pi/4 + j pi/2 (i mod 4)).
    static PilotSymbols qpsk(std::size_t l);
};

// y = diag(s) T^T h_bs + n with n ~ CN(0, noise_std^2). `rng` may be null
// only when noise_std is zero.
Eigen::VectorXcd transmit_csirs(const Eigen::VectorXcd& h_bs_dl, const MergingMatrix& t, const PilotSymbols& s,
                                double noise_std = 0.0, std::mt19937_64* rng = nullptr);

// g = diag(s)^{-1} y. ConfigError on a zero symbol.
Eigen::VectorXcd ls_estimate(const Eigen::VectorXcd& y, const PilotSymbols& s);

enum class FeedbackLayout : std::uint8_t { vector = 0, matrix = 1, codeword = 2 };

/// Quantized UE-to-gNB payload. Complex payloads store (re, im) code pairs
/// row-major over `dims`; codewords store one code per real element.
struct FeedbackRecord {
    std::uint8_t bits = 8;
    FeedbackLayout layout = FeedbackLayout::vector;
    std::vector<std::uint32_t> dims;
    double scale = 1.0;
    std::vector<std::uint32_t> codes;
    // Set for an all-zero input (scale 1, zero codes); decodes to exact zeros.
    bool zero = false;

    // Bits spent on codes; the scale travels as side information.
    std::size_t payload_bits() const noexcept { return codes.size() * bits; }
};

// Mid-rise uniform quantizer on [-1, 1] with 2^bits levels: the code of x is
// clamp(floor((x + 1) / step), 0, 2^bits - 1), step = 2 / 2^bits.
std::uint32_t quantize_code(double x, int bits);
double dequantize_code(std::uint32_t code, int bits);
// Round trip through the two functions above.
double hard_quantize(double x, int bits);

// scale = max |re|, |im| over g (1 for an all-zero input). A column vector
// uses the vector layout, anything wider the matrix layout.
FeedbackRecord quantize_feedback(const Eigen::MatrixXcd& g, int bits);
Eigen::MatrixXcd dequantize(const FeedbackRecord& record);

// Codeword already confined to [-1, 1]; stored with scale 1.
FeedbackRecord quantize_codeword(const std::vector<double>& values, int bits);
std::vector<double> dequantize_codeword(const FeedbackRecord& record);

// Little-endian: u8 bits, u8 layout (bit 7 = zero flag), u8 rank, u32 dims[rank], f64 scale, then
// the codes packed LSB-first at `bits` bits each.
void write_feedback(std::ostream& out, const FeedbackRecord& record);
FeedbackRecord read_feedback(std::istream& in);

}  // namespace bsfb::airlink
