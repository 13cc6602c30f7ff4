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

#include "bsfb/airlink/airlink.hpp"

#include <cmath>
#include <numbers>

#include "bsfb/binio.hpp"
#include "bsfb/errors.hpp"

namespace bsfb::airlink {

PilotPlacement make_placement(std::size_t k_rbs, std::size_t fr, std::size_t br, std::size_t n_b)
{
    if (k_rbs == 0 || fr == 0 || br == 0 || n_b == 0) {
        throw ConfigError("placement needs K, FR, BR and N_b all at least 1");
    }
    PilotPlacement p;
    p.k_rbs = k_rbs;
    p.fr = fr;
    p.br = br;
    p.n_b = n_b;
    p.l = static_cast<std::size_t>(std::llround(static_cast<double>(n_b) / static_cast<double>(br)));
    if (p.l == 0) {
        throw ConfigError("BR = " + std::to_string(br) + " leaves no pilot REs for " + std::to_string(n_b) +
                          " beams");
    }
    for (std::size_t k = 0; k < k_rbs; k += fr) {
        p.pilot_rb_indices.push_back(k);
    }
    return p;
}

MergingMatrix MergingMatrix::normalized(Eigen::MatrixXcd t)
{
    if (!t.allFinite()) {
        throw DimensionError("merging matrix has non-finite entries");
    }
    for (Eigen::Index j = 0; j < t.cols(); ++j) {
        const double n = t.col(j).norm();
        if (n == 0.0) {
            throw UndefinedError("merging matrix column " + std::to_string(j) + " is zero");
        }
        t.col(j) /= n;
    }
    return MergingMatrix{std::move(t)};
}

MergingMatrix MergingMatrix::selection(std::size_t n_b, const std::vector<std::size_t>& indices)
{
    Eigen::MatrixXcd t = Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(n_b),
                                                static_cast<Eigen::Index>(indices.size()));
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= n_b) {
            throw DimensionError("selection index " + std::to_string(indices[i]) + " out of range");
        }
        t(static_cast<Eigen::Index>(indices[i]), static_cast<Eigen::Index>(i)) = 1.0;
    }
    return MergingMatrix{std::move(t)};
}

PilotSymbols PilotSymbols::qpsk(std::size_t l)
{
    PilotSymbols p;
    p.s.resize(static_cast<Eigen::Index>(l));
    for (std::size_t i = 0; i < l; ++i) {
        const double phase = std::numbers::pi / 4.0 + std::numbers::pi / 2.0 * static_cast<double>(i % 4);
        p.s(static_cast<Eigen::Index>(i)) = std::polar(1.0, phase);
    }
    return p;
}

Eigen::VectorXcd transmit_csirs(const Eigen::VectorXcd& h_bs_dl, const MergingMatrix& t, const PilotSymbols& s,
                                double noise_std, std::mt19937_64* rng)
{
    if (static_cast<std::size_t>(h_bs_dl.size()) != t.n_b() || static_cast<std::size_t>(s.s.size()) != t.l()) {
        throw DimensionError("transmit_csirs: h has " + std::to_string(h_bs_dl.size()) + " beams, T is " +
                             std::to_string(t.n_b()) + "x" + std::to_string(t.l()) + ", " +
                             std::to_string(s.s.size()) + " symbols");
    }
    Eigen::VectorXcd y = s.s.cwiseProduct(t.t.transpose() * h_bs_dl);
    if (noise_std > 0.0) {
        if (rng == nullptr) {
            throw ConfigError("transmit_csirs: noise requested without a random stream");
        }
        std::normal_distribution<double> gauss(0.0, noise_std / std::sqrt(2.0));
        for (Eigen::Index i = 0; i < y.size(); ++i) {
            y(i) += std::complex<double>(gauss(*rng), gauss(*rng));
        }
    }
    return y;
}

Eigen::VectorXcd ls_estimate(const Eigen::VectorXcd& y, const PilotSymbols& s)
{
    if (y.size() != s.s.size()) {
        throw DimensionError("ls_estimate: " + std::to_string(y.size()) + " observations for " +
                             std::to_string(s.s.size()) + " symbols");
    }
    Eigen::VectorXcd g(y.size());
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        if (s.s(i) == std::complex<double>(0.0, 0.0)) {
            throw ConfigError("ls_estimate: pilot symbol " + std::to_string(i) + " is zero");
        }
        g(i) = y(i) / s.s(i);
    }
    return g;
}

namespace {

void check_bits(int bits)
{
    if (bits < 1 || bits > 16) {
        throw ConfigError("quantizer bits must lie in [1, 16], got " + std::to_string(bits));
    }
}

}  // namespace

std::uint32_t quantize_code(double x, int bits)
{
    check_bits(bits);
    const double levels = std::ldexp(1.0, bits);
    const double step = 2.0 / levels;
    const double idx = std::clamp(std::floor((x + 1.0) / step), 0.0, levels - 1.0);
    return static_cast<std::uint32_t>(idx);
}

double dequantize_code(std::uint32_t code, int bits)
{
    check_bits(bits);
    const double step = 2.0 / std::ldexp(1.0, bits);
    return -1.0 + step * (static_cast<double>(code) + 0.5);
}

double hard_quantize(double x, int bits)
{
    return dequantize_code(quantize_code(x, bits), bits);
}

FeedbackRecord quantize_feedback(const Eigen::MatrixXcd& g, int bits)
{
    check_bits(bits);
    FeedbackRecord r;
    r.bits = static_cast<std::uint8_t>(bits);
    if (g.cols() == 1) {
        r.layout = FeedbackLayout::vector;
        r.dims = {static_cast<std::uint32_t>(g.rows())};
    } else {
        r.layout = FeedbackLayout::matrix;
        r.dims = {static_cast<std::uint32_t>(g.rows()), static_cast<std::uint32_t>(g.cols())};
    }
    double scale = 0.0;
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
        for (Eigen::Index j = 0; j < g.cols(); ++j) {
            scale = std::max({scale, std::abs(g(i, j).real()), std::abs(g(i, j).imag())});
        }
    }
    r.scale = scale > 0.0 ? scale : 1.0;
    r.codes.reserve(static_cast<std::size_t>(2 * g.size()));
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
        for (Eigen::Index j = 0; j < g.cols(); ++j) {
            r.codes.push_back(quantize_code(g(i, j).real() / r.scale, bits));
            r.codes.push_back(quantize_code(g(i, j).imag() / r.scale, bits));
        }
    }
    if (scale == 0.0) {
        r.zero = true;
        std::fill(r.codes.begin(), r.codes.end(), 0u);
    }
    return r;
}

Eigen::MatrixXcd dequantize(const FeedbackRecord& record)
{
    if (record.layout == FeedbackLayout::codeword) {
        throw FormatError("dequantize: record holds a real codeword");
    }
    const std::size_t rows = record.dims.at(0);
    const std::size_t cols = record.layout == FeedbackLayout::matrix ? record.dims.at(1) : 1;
    if (record.codes.size() != 2 * rows * cols) {
        throw FormatError("dequantize: payload length does not match dims");
    }
    Eigen::MatrixXcd g(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    const bool all_zero = record.zero;
    std::size_t at = 0;
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) {
            const double re = record.scale * dequantize_code(record.codes[at], record.bits);
            const double im = record.scale * dequantize_code(record.codes[at + 1], record.bits);
            g(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = all_zero ? 0.0 : std::complex<double>(re, im);
            at += 2;
        }
    }
    return g;
}

FeedbackRecord quantize_codeword(const std::vector<double>& values, int bits)
{
    check_bits(bits);
    FeedbackRecord r;
    r.bits = static_cast<std::uint8_t>(bits);
    r.layout = FeedbackLayout::codeword;
    r.dims = {static_cast<std::uint32_t>(values.size())};
    r.scale = 1.0;
    for (double v : values) {
        r.codes.push_back(quantize_code(v, bits));
    }
    return r;
}

std::vector<double> dequantize_codeword(const FeedbackRecord& record)
{
    if (record.layout != FeedbackLayout::codeword || record.codes.size() != record.dims.at(0)) {
        throw FormatError("dequantize_codeword: record is not a well-formed codeword");
    }
    std::vector<double> out;
    out.reserve(record.codes.size());
    for (auto c : record.codes) {
        out.push_back(dequantize_code(c, record.bits));
    }
    return out;
}

void write_feedback(std::ostream& out, const FeedbackRecord& record)
{
    check_bits(record.bits);
    io::Writer w(out);
    w.u8(record.bits);
    w.u8(static_cast<std::uint8_t>(static_cast<std::uint8_t>(record.layout) | (record.zero ? 0x80u : 0u)));
    w.u8(static_cast<std::uint8_t>(record.dims.size()));
    for (auto d : record.dims) {
        w.u32(d);
    }
    w.f64(record.scale);
    w.u32(static_cast<std::uint32_t>(record.codes.size()));
    std::uint64_t acc = 0;
    int filled = 0;
    for (auto c : record.codes) {
        acc |= static_cast<std::uint64_t>(c) << filled;
        filled += record.bits;
        while (filled >= 8) {
            w.u8(static_cast<std::uint8_t>(acc & 0xffu));
            acc >>= 8;
            filled -= 8;
        }
    }
    if (filled > 0) {
        w.u8(static_cast<std::uint8_t>(acc & 0xffu));
    }
}

FeedbackRecord read_feedback(std::istream& in)
{
    io::Reader r(in, "feedback record");
    FeedbackRecord rec;
    rec.bits = r.u8();
    if (rec.bits < 1 || rec.bits > 16) {
        throw FormatError("feedback record: invalid bit width " + std::to_string(rec.bits));
    }
    const std::uint8_t layout_byte = r.u8();
    rec.zero = (layout_byte & 0x80u) != 0;
    const std::uint8_t layout = layout_byte & 0x7fu;
    if (layout > 2) {
        throw FormatError("feedback record: unknown layout " + std::to_string(layout));
    }
    rec.layout = static_cast<FeedbackLayout>(layout);
    const std::uint8_t rank = r.u8();
    for (std::uint8_t i = 0; i < rank; ++i) {
        rec.dims.push_back(r.u32());
    }
    rec.scale = r.f64();
    if (!(rec.scale > 0.0)) {
        throw FormatError("feedback record: scale must be positive");
    }
    const std::uint32_t count = r.u32();
    std::uint64_t acc = 0;
    int filled = 0;
    const std::uint64_t mask = (std::uint64_t{1} << rec.bits) - 1;
    rec.codes.reserve(count);
    while (rec.codes.size() < count) {
        while (filled < rec.bits) {
            acc |= static_cast<std::uint64_t>(r.u8()) << filled;
            filled += 8;
        }
        rec.codes.push_back(static_cast<std::uint32_t>(acc & mask));
        acc >>= rec.bits;
        filled -= rec.bits;
    }
    return rec;
}

}  // namespace bsfb::airlink
