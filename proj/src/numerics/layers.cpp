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

#include "bsfb/numerics/layers.hpp"

#include <cmath>

#include "bsfb/errors.hpp"
#include "bsfb/numerics/ops.hpp"

namespace bsfb::nn {

void ParameterSet::add(std::string name, Tensor value)
{
    if (index_.count(name) != 0) {
        throw ConfigError("duplicate parameter name '" + name + "'");
    }
    index_.emplace(name, entries_.size());
    entries_.push_back(Entry{std::move(name), std::move(value)});
}

bool ParameterSet::contains(const std::string& name) const
{
    return index_.count(name) != 0;
}

Tensor& ParameterSet::at(const std::string& name)
{
    auto it = index_.find(name);
    if (it == index_.end()) {
        throw ConfigError("unknown parameter '" + name + "'");
    }
    return entries_[it->second].value;
}

const Tensor& ParameterSet::at(const std::string& name) const
{
    auto it = index_.find(name);
    if (it == index_.end()) {
        throw ConfigError("unknown parameter '" + name + "'");
    }
    return entries_[it->second].value;
}

std::size_t ParameterSet::scalar_count() const
{
    std::size_t n = 0;
    for (const auto& e : entries_) {
        n += e.value.size();
    }
    return n;
}

ParameterSet ParameterSet::zeros_like() const
{
    ParameterSet out;
    for (const auto& e : entries_) {
        out.add(e.name, Tensor(e.value.shape(), 0.0));
    }
    return out;
}

void ParameterSet::merge(const ParameterSet& other, const std::string& prefix)
{
    for (const auto& e : other) {
        add(prefix + e.name, e.value);
    }
}

Binding::Binding(Tape& tape, const ParameterSet& params, TrainablePredicate trainable)
    : tape_(&tape), params_(&params)
{
    for (const auto& e : params) {
        const bool train = !trainable || trainable(e.name);
        vars_.emplace(e.name, train ? tape.variable(e.value) : tape.constant(e.value));
    }
}

Var Binding::operator()(const std::string& name) const
{
    auto it = vars_.find(name);
    if (it == vars_.end()) {
        throw ConfigError("parameter '" + name + "' is not bound");
    }
    return it->second;
}

ParameterSet Binding::gradients() const
{
    ParameterSet out;
    for (const auto& e : *params_) {
        Var v = vars_.at(e.name);
        out.add(e.name, tape_->requires_grad(v) ? tape_->grad(v) : Tensor(e.value.shape(), 0.0));
    }
    return out;
}

std::string layer_kind_name(LayerKind kind)
{
    switch (kind) {
    case LayerKind::dense:
        return "dense";
    case LayerKind::circconv2d:
        return "circconv2d";
    case LayerKind::circconv3d:
        return "circconv3d";
    case LayerKind::tanh:
        return "tanh";
    case LayerKind::residual_block:
        return "residual-block";
    case LayerKind::reshape:
        return "reshape";
    case LayerKind::soft_quantize:
        return "soft-quantize";
    }
    return "unknown";
}

namespace {

struct ResidualLayout {
    std::vector<std::size_t> spatial;
    std::size_t main = 0;
    std::size_t side = 0;
    std::vector<std::size_t> channels;
};

ResidualLayout residual_layout(const LayerSpec& spec)
{
    const auto& s = spec.sizes;
    if (s.empty() || (s[0] != 2 && s[0] != 3) || s.size() < s[0] + 4) {
        throw ConfigError("residual block '" + spec.name + "' needs {rank, dims..., C_main, C_side, channels...}");
    }
    ResidualLayout r;
    const std::size_t rank = s[0];
    r.spatial.assign(s.begin() + 1, s.begin() + 1 + static_cast<long>(rank));
    r.main = s[rank + 1];
    r.side = s[rank + 2];
    r.channels.assign(s.begin() + static_cast<long>(rank) + 3, s.end());
    return r;
}

std::vector<LayerSpec> residual_path(const LayerSpec& spec)
{
    const ResidualLayout r = residual_layout(spec);
    return conv_stack(spec.name, r.spatial, r.main + r.side, r.channels, true);
}

std::size_t positions(const std::vector<std::size_t>& s, std::size_t rank)
{
    std::size_t p = 1;
    for (std::size_t i = 0; i < rank; ++i) {
        p *= s[i];
    }
    return p;
}

std::size_t conv_rank(LayerKind kind)
{
    return kind == LayerKind::circconv2d ? 2 : 3;
}

}  // namespace

void validate(const LayerSpec& spec)
{
    const auto& s = spec.sizes;
    auto all_positive = [&s]() {
        for (auto d : s) {
            if (d == 0) {
                return false;
            }
        }
        return true;
    };
    switch (spec.kind) {
    case LayerKind::dense:
        if (s.size() != 2 || !all_positive()) {
            throw ConfigError("dense layer '" + spec.name + "' needs positive {in, out}");
        }
        return;
    case LayerKind::circconv2d:
    case LayerKind::circconv3d:
        if (s.size() != conv_rank(spec.kind) + 2 || !all_positive()) {
            throw ConfigError(layer_kind_name(spec.kind) + " layer '" + spec.name +
                              "' needs positive spatial dims and channel counts");
        }
        return;
    case LayerKind::tanh:
        return;
    case LayerKind::reshape:
        if (s.empty() || !all_positive()) {
            throw ConfigError("reshape '" + spec.name + "' needs a positive target shape");
        }
        return;
    case LayerKind::soft_quantize:
        if (s.size() != 1 || s[0] < 1 || s[0] > 16) {
            throw ConfigError("soft-quantize '" + spec.name + "' needs bits in [1, 16]");
        }
        return;
    case LayerKind::residual_block: {
        const ResidualLayout r = residual_layout(spec);
        if (!all_positive() || r.channels.back() != r.main) {
            throw ConfigError("residual block '" + spec.name + "' must end with C_main channels");
        }
        for (const auto& conv : residual_path(spec)) {
            validate(conv);
        }
        return;
    }
    }
}

std::size_t parameter_count(const LayerSpec& spec)
{
    validate(spec);
    const auto& s = spec.sizes;
    switch (spec.kind) {
    case LayerKind::dense:
        return s[0] * s[1] + s[1];
    case LayerKind::circconv2d:
        return 9 * s[2] * s[3] + s[3];
    case LayerKind::circconv3d:
        return 27 * s[3] * s[4] + s[4];
    case LayerKind::residual_block: {
        std::size_t n = 0;
        for (const auto& conv : residual_path(spec)) {
            n += parameter_count(conv);
        }
        return n;
    }
    default:
        return 0;
    }
}

std::size_t mac_count(const LayerSpec& spec)
{
    validate(spec);
    const auto& s = spec.sizes;
    switch (spec.kind) {
    case LayerKind::dense:
        return s[0] * s[1];
    case LayerKind::circconv2d:
        return positions(s, 2) * 9 * s[2] * s[3];
    case LayerKind::circconv3d:
        return positions(s, 3) * 27 * s[3] * s[4];
    case LayerKind::residual_block: {
        std::size_t n = 0;
        for (const auto& conv : residual_path(spec)) {
            n += mac_count(conv);
        }
        return n;
    }
    default:
        return 0;
    }
}

namespace {

Tensor glorot(Shape shape, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng)
{
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    Tensor t(std::move(shape));
    for (auto& x : t.data()) {
        x = dist(rng);
    }
    return t;
}

}  // namespace

void init_layer(const LayerSpec& spec, ParameterSet& params, std::mt19937_64& rng)
{
    validate(spec);
    const auto& s = spec.sizes;
    switch (spec.kind) {
    case LayerKind::dense:
        params.add(spec.name + ".w", glorot(Shape{s[1], s[0]}, s[0], s[1], rng));
        params.add(spec.name + ".b", Tensor(Shape{s[1]}, 0.0));
        return;
    case LayerKind::circconv2d:
        params.add(spec.name + ".w", glorot(Shape{3, 3, s[2], s[3]}, 9 * s[2], 9 * s[3], rng));
        params.add(spec.name + ".b", Tensor(Shape{s[3]}, 0.0));
        return;
    case LayerKind::circconv3d:
        params.add(spec.name + ".w", glorot(Shape{3, 3, 3, s[3], s[4]}, 27 * s[3], 27 * s[4], rng));
        params.add(spec.name + ".b", Tensor(Shape{s[4]}, 0.0));
        return;
    case LayerKind::residual_block:
        for (const auto& conv : residual_path(spec)) {
            init_layer(conv, params, rng);
        }
        return;
    default:
        return;
    }
}

Var apply_layer(const LayerSpec& spec, const Binding& bind, Var x, const ForwardContext& ctx)
{
    Tape& tape = bind.tape();
    switch (spec.kind) {
    case LayerKind::dense:
        return dense(tape, x, bind(spec.name + ".w"), bind(spec.name + ".b"));
    case LayerKind::circconv2d:
        return circular_conv2d(tape, x, bind(spec.name + ".w"), bind(spec.name + ".b"));
    case LayerKind::circconv3d:
        return circular_conv3d(tape, x, bind(spec.name + ".w"), bind(spec.name + ".b"));
    case LayerKind::tanh:
        return tanh(tape, x);
    case LayerKind::reshape:
        return reshape(tape, x, spec.sizes);
    case LayerKind::soft_quantize:
        return soft_quantize(tape, x, static_cast<int>(spec.sizes.at(0)), ctx.temperature);
    case LayerKind::residual_block: {
        if (!ctx.side.valid()) {
            throw ConfigError("residual block '" + spec.name + "' needs a side input");
        }
        Var joined = concat_channels(tape, x, ctx.side);
        Var path = apply_layers(residual_path(spec), bind, joined, ForwardContext{ctx.temperature, Var{}});
        return add(tape, x, path);
    }
    }
    throw ConfigError("unknown layer kind");
}

Var apply_layers(const std::vector<LayerSpec>& specs, const Binding& bind, Var x, const ForwardContext& ctx)
{
    for (const auto& spec : specs) {
        x = apply_layer(spec, bind, x, ctx);
    }
    return x;
}

std::vector<LayerSpec> conv_stack(const std::string& prefix, const std::vector<std::size_t>& spatial,
                                  std::size_t cin, const std::vector<std::size_t>& channels, bool linear_last)
{
    if (spatial.size() != 2 && spatial.size() != 3) {
        throw ConfigError("conv stack '" + prefix + "' needs 2 or 3 spatial dims");
    }
    const LayerKind kind = spatial.size() == 2 ? LayerKind::circconv2d : LayerKind::circconv3d;
    std::vector<LayerSpec> out;
    std::size_t in = cin;
    for (std::size_t i = 0; i < channels.size(); ++i) {
        std::vector<std::size_t> sizes = spatial;
        sizes.push_back(in);
        sizes.push_back(channels[i]);
        out.push_back(LayerSpec{kind, prefix + ".conv" + std::to_string(i), std::move(sizes)});
        if (!(linear_last && i + 1 == channels.size())) {
            out.push_back(LayerSpec{LayerKind::tanh, prefix + ".tanh" + std::to_string(i), {}});
        }
        in = channels[i];
    }
    return out;
}

}  // namespace bsfb::nn
