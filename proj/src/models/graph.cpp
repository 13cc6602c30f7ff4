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
#include <Eigen/Eigenvalues>

#include "bsfb/errors.hpp"
#include "bsfb/models/detail.hpp"
#include "bsfb/models/models.hpp"
#include "bsfb/numerics/ops.hpp"
#include "bsfb/recovery/recovery.hpp"
#include "bsfb/rng.hpp"

namespace bsfb::models {

namespace {

using nn::Tape;
using nn::Tensor;
using nn::Var;

bool is_fr(const Architecture& a)
{
    return a.kind == ModelKind::bsdualnet_fr;
}

void check_group(const Architecture& arch, const std::vector<const Example*>& group)
{
    if (group.size() != arch.n_ue) {
        throw DimensionError("group holds " + std::to_string(group.size()) + " UEs, architecture expects " +
                             std::to_string(arch.n_ue));
    }
    for (const Example* e : group) {
        if (static_cast<std::size_t>(e->h_bs.rows()) != arch.n_b() ||
            static_cast<std::size_t>(e->h_bs.cols()) != arch.k_rbs || e->ul_mag.rows() != e->h_bs.rows() ||
            e->ul_mag.cols() != e->h_bs.cols()) {
            throw DimensionError("example shape does not match the architecture (N_b = " +
                                 std::to_string(arch.n_b()) + ", K = " + std::to_string(arch.k_rbs) + ")");
        }
    }
}

// UL magnitudes of all UEs on the channel axis: [N_V, N_H, N] or
// [N_V, N_H, K, N].
Tensor ul_stack(const Architecture& arch, const std::vector<const Example*>& group)
{
    const std::size_t n = group.size();
    const std::size_t k = arch.k_rbs;
    nn::Shape shape = {arch.n_v, arch.n_h};
    if (is_fr(arch)) {
        shape.push_back(k);
    }
    shape.push_back(n);
    Tensor t(shape);
    for (std::size_t u = 0; u < n; ++u) {
        for (std::size_t b = 0; b < arch.n_b(); ++b) {
            for (std::size_t r = 0; r < k; ++r) {
                t[(b * k + r) * n + u] = group[u]->ul_mag(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(r));
            }
        }
    }
    return t;
}

// Side input of the combining network for one UE.
Tensor ul_side(const Architecture& arch, const Example& e)
{
    Tensor t(is_fr(arch) ? nn::Shape{arch.n_b(), arch.k_rbs, 1} : nn::Shape{arch.n_v, arch.n_h, 1});
    const std::size_t k = arch.k_rbs;
    for (std::size_t b = 0; b < arch.n_b(); ++b) {
        for (std::size_t r = 0; r < k; ++r) {
            t[b * k + r] = e.ul_mag(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(r));
        }
    }
    return t;
}

// Beam-domain grid shape of one UE's estimate.
nn::Shape grid_shape(const Architecture& arch)
{
    return is_fr(arch) ? nn::Shape{arch.n_b(), arch.k_rbs, 2} : nn::Shape{arch.n_v, arch.n_h, 2};
}

Tensor grid_tensor(const Architecture& arch, const Eigen::MatrixXcd& m)
{
    return nn::complex_to_tensor(m).reshaped(grid_shape(arch));
}

Eigen::MatrixXcd grid_matrix(const Architecture& arch, const Tensor& t)
{
    return nn::tensor_to_complex(t.reshaped({arch.n_b(), arch.k_rbs, 2}));
}

Var merging_matrix(const Architecture& arch, const NetworkLayout& layout, const nn::Binding& bind,
                   const std::vector<const Example*>& group)
{
    Tape& tape = bind.tape();
    Var x = tape.constant(ul_stack(arch, group));
    return nn::normalize_columns(tape, nn::apply_layers(layout.merging, bind, x));
}

// conj(T) (T^T conj(T) + eps I)^{-1} g with eps taken from the current value
// of T and held constant.
Var min_norm_layer(Tape& tape, Var t, Var g)
{
    Var gram = nn::complex_matmul(tape, t, t, nn::ComplexOp::transpose, nn::ComplexOp::conjugate);
    const Eigen::MatrixXcd m = nn::tensor_to_complex(tape.value(gram));
    const double lambda_max = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd>(m, Eigen::EigenvaluesOnly)
                                  .eigenvalues()
                                  .maxCoeff();
    const double eps = recovery::kDefaultRidge * lambda_max;
    const auto l = static_cast<Eigen::Index>(m.rows());
    Var ridge = tape.constant(nn::complex_to_tensor(Eigen::MatrixXcd::Identity(l, l) * eps));
    Var z = nn::complex_solve(tape, nn::add(tape, gram, ridge), g);
    return nn::complex_matmul(tape, t, z, nn::ComplexOp::conjugate, nn::ComplexOp::none);
}

Var combine(const Architecture& arch, const NetworkLayout& layout, const nn::Binding& bind, Var initial,
            const Example& e, double temperature)
{
    Tape& tape = bind.tape();
    nn::ForwardContext ctx{temperature, tape.constant(ul_side(arch, e))};
    if (!is_fr(arch)) {
        return nn::apply_layers(layout.combining, bind, initial, ctx);
    }
    const nn::Shape mag_shape = {arch.n_b(), arch.k_rbs, 1};
    Var mag = nn::reshape(tape, nn::complex_abs(tape, initial), mag_shape);
    Var refined = nn::apply_layers(layout.combining, bind, mag, ctx);
    return nn::with_magnitude(tape, initial, nn::reshape(tape, refined, {arch.n_b(), arch.k_rbs}));
}

std::vector<nn::LayerSpec> without_quantizer(std::vector<nn::LayerSpec> layers)
{
    if (!layers.empty() && layers.back().kind == nn::LayerKind::soft_quantize) {
        layers.pop_back();
    }
    return layers;
}

Eigen::MatrixXcd pilot_columns(const Architecture& arch, const Eigen::MatrixXcd& h)
{
    const std::size_t p = arch.pilot_rbs();
    Eigen::MatrixXcd out(h.rows(), static_cast<Eigen::Index>(p));
    for (std::size_t i = 0; i < p; ++i) {
        out.col(static_cast<Eigen::Index>(i)) = h.col(static_cast<Eigen::Index>(i * arch.fr));
    }
    return out;
}

}  // namespace

namespace detail {

Eigen::VectorXcd selected_feedback_estimate(const Eigen::VectorXcd& h_bs, const Eigen::VectorXd& select_mag,
                                            std::size_t l, int bits, beamspace::BeamSource source)
{
    const auto n_b = static_cast<std::size_t>(h_bs.size());
    const beamspace::BeamSelection sel = beamspace::select_top_beams(select_mag, l, source);
    Eigen::VectorXcd values(static_cast<Eigen::Index>(l));
    for (std::size_t i = 0; i < l; ++i) {
        values(static_cast<Eigen::Index>(i)) = h_bs(static_cast<Eigen::Index>(sel.indices[i]));
    }
    const Eigen::VectorXcd fed_back = airlink::dequantize(airlink::quantize_feedback(values, bits));
    return beamspace::sparse_map(fed_back, sel, n_b);
}

}  // namespace detail

GroupGraph build_group_graph(const Architecture& arch, const nn::Binding& bind,
                             const std::vector<const Example*>& group, double alpha, double temperature)
{
    check_group(arch, group);
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
        throw ConfigError("alpha must lie in [0, 1]");
    }
    const NetworkLayout layout = network_layout(arch);
    Tape& tape = bind.tape();
    GroupGraph out;
    if (arch.kind != ModelKind::bsdualnet0) {
        out.t = merging_matrix(arch, layout, bind, group);
    }
    for (const Example* e : group) {
        Var target = tape.constant(grid_tensor(arch, e->h_bs));
        Var initial;
        switch (arch.kind) {
        case ModelKind::bsdualnet0: {
            const Eigen::VectorXcd sparse =
                detail::selected_feedback_estimate(e->h_bs.col(0), e->ul_mag.col(0), arch.l, arch.bits,
                                                   beamspace::BeamSource::ul);
            initial = tape.constant(grid_tensor(arch, sparse));
            break;
        }
        case ModelKind::bsdualnet:
        case ModelKind::bsdualnet_mn: {
            Var h = tape.constant(nn::complex_to_tensor(e->h_bs));
            Var g = nn::complex_matmul(tape, out.t, h, nn::ComplexOp::transpose, nn::ComplexOp::none);
            Var s = nn::max_abs(tape, g);
            Var q = nn::soft_quantize(tape, nn::divide_by(tape, g, s), arch.bits, temperature);
            Var g_bar = nn::multiply_by(tape, q, s);
            if (arch.kind == ModelKind::bsdualnet) {
                initial = nn::apply_layers(layout.recovery, bind, g_bar);
            } else {
                initial = nn::reshape(tape, min_norm_layer(tape, out.t, g_bar), grid_shape(arch));
            }
            break;
        }
        case ModelKind::bsdualnet_fr: {
            Var hp = tape.constant(nn::complex_to_tensor(pilot_columns(arch, e->h_bs)));
            Var g = nn::complex_matmul(tape, out.t, hp, nn::ComplexOp::transpose, nn::ComplexOp::none);
            Var codeword = nn::apply_layers(layout.encoder, bind, g, nn::ForwardContext{temperature, Var{}});
            initial = nn::apply_layers(layout.decoder, bind, codeword);
            break;
        }
        }
        Var final = combine(arch, layout, bind, initial, *e, temperature);
        Var l1 = nn::squared_error(tape, initial, target);
        Var l2 = nn::squared_error(tape, final, target);
        out.loss1 = out.loss1.valid() ? nn::add(tape, out.loss1, l1) : l1;
        out.loss2 = out.loss2.valid() ? nn::add(tape, out.loss2, l2) : l2;
        out.initial.push_back(initial);
        out.final.push_back(final);
    }
    if (alpha == 1.0) {
        out.loss = out.loss1;
    } else if (alpha == 0.0) {
        out.loss = out.loss2;
    } else {
        out.loss = nn::add(tape, nn::scale(tape, out.loss1, alpha), nn::scale(tape, out.loss2, 1.0 - alpha));
    }
    return out;
}

airlink::MergingMatrix beam_merging_forward(const Architecture& arch, const nn::ParameterSet& params,
                                            const std::vector<const Example*>& group)
{
    check_group(arch, group);
    if (arch.kind == ModelKind::bsdualnet0) {
        throw ConfigError("bsdualnet0 has no beam merging network");
    }
    Tape tape;
    nn::Binding bind(tape, params, [](const std::string&) { return false; });
    Var t = merging_matrix(arch, network_layout(arch), bind, group);
    return airlink::MergingMatrix{nn::tensor_to_complex(tape.value(t))};
}

GroupEstimate infer_group(const Architecture& arch, const nn::ParameterSet& params,
                          const std::vector<const Example*>& group, const InferenceOptions& options)
{
    check_group(arch, group);
    const NetworkLayout layout = network_layout(arch);
    Tape tape;
    nn::Binding bind(tape, params, [](const std::string&) { return false; });
    GroupEstimate out;
    if (arch.kind != ModelKind::bsdualnet0) {
        Var t = merging_matrix(arch, layout, bind, group);
        out.t = airlink::MergingMatrix{nn::tensor_to_complex(tape.value(t))};
    }
    const airlink::PilotSymbols pilots = airlink::PilotSymbols::qpsk(arch.l);
    for (std::size_t u = 0; u < group.size(); ++u) {
        const Example& e = *group[u];
        std::mt19937_64 rng = derive_rng(options.seed, 0x4E4F4953, u);
        auto feedback = [&](const Eigen::VectorXcd& h) {
            const Eigen::VectorXcd y = airlink::transmit_csirs(h, *out.t, pilots, options.noise_std, &rng);
            return airlink::ls_estimate(y, pilots);
        };
        Var initial;
        switch (arch.kind) {
        case ModelKind::bsdualnet0: {
            const Eigen::VectorXcd sparse =
                detail::selected_feedback_estimate(e.h_bs.col(0), e.ul_mag.col(0), arch.l, arch.bits,
                                                   beamspace::BeamSource::ul);
            initial = tape.constant(grid_tensor(arch, sparse));
            break;
        }
        case ModelKind::bsdualnet: {
            const Eigen::MatrixXcd g_bar = airlink::dequantize(airlink::quantize_feedback(feedback(e.h_bs.col(0)), arch.bits));
            initial = nn::apply_layers(layout.recovery, bind, tape.constant(nn::complex_to_tensor(g_bar)));
            break;
        }
        case ModelKind::bsdualnet_mn: {
            const Eigen::MatrixXcd g_bar = airlink::dequantize(airlink::quantize_feedback(feedback(e.h_bs.col(0)), arch.bits));
            const Eigen::VectorXcd h = recovery::min_norm_recover(g_bar.col(0), *out.t);
            initial = tape.constant(grid_tensor(arch, h));
            break;
        }
        case ModelKind::bsdualnet_fr: {
            const Eigen::MatrixXcd hp = pilot_columns(arch, e.h_bs);
            Eigen::MatrixXcd g(static_cast<Eigen::Index>(arch.l), hp.cols());
            for (Eigen::Index p = 0; p < hp.cols(); ++p) {
                g.col(p) = feedback(hp.col(p));
            }
            Var squashed = nn::apply_layers(without_quantizer(layout.encoder), bind,
                                            tape.constant(nn::complex_to_tensor(g)));
            const Tensor& v = tape.value(squashed);
            const airlink::FeedbackRecord record =
                airlink::quantize_codeword(std::vector<double>(v.data().begin(), v.data().end()), arch.bits);
            const std::vector<double> codeword = airlink::dequantize_codeword(record);
            initial = nn::apply_layers(layout.decoder, bind,
                                       tape.constant(Tensor(nn::Shape{codeword.size()}, codeword)));
            break;
        }
        }
        Var final = combine(arch, layout, bind, initial, e, 0.0);
        out.initial.push_back(grid_matrix(arch, tape.value(initial)));
        out.final.push_back(grid_matrix(arch, tape.value(final)));
    }
    return out;
}

}  // namespace bsfb::models
