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

// Named parameter storage and the layer set used by the networks.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "bsfb/numerics/autodiff.hpp"

namespace bsfb::nn {

/// Insertion-ordered map from parameter name to tensor.
class ParameterSet {
public:
    struct Entry {
        std::string name;
        Tensor value;
    };

    // Throws ConfigError on a duplicate name.
    void add(std::string name, Tensor value);
    bool contains(const std::string& name) const;
    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;

    std::size_t size() const noexcept { return entries_.size(); }
    // Total number of scalars over all tensors.
    std::size_t scalar_count() const;

    std::vector<Entry>::iterator begin() { return entries_.begin(); }
    std::vector<Entry>::iterator end() { return entries_.end(); }
    std::vector<Entry>::const_iterator begin() const { return entries_.begin(); }
    std::vector<Entry>::const_iterator end() const { return entries_.end(); }

    // Same names and shapes, values zeroed.
    ParameterSet zeros_like() const;
    // Appends every entry of `other`, prefixing names.
    void merge(const ParameterSet& other, const std::string& prefix = "");

private:
    std::vector<Entry> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

using TrainablePredicate = std::function<bool(const std::string& name)>;

/// Places a ParameterSet on a tape. Trainable parameters become variables;
/// the rest become constants whose gradient is exactly zero.
class Binding {
public:
    Binding(Tape& tape, const ParameterSet& params, TrainablePredicate trainable = {});

    Var operator()(const std::string& name) const;
    Tape& tape() const noexcept { return *tape_; }

    // Gradients after tape.backward(), in parameter order.
    ParameterSet gradients() const;

private:
    Tape* tape_;
    const ParameterSet* params_;
    std::unordered_map<std::string, Var> vars_;
};

enum class LayerKind { dense, circconv2d, circconv3d, tanh, residual_block, reshape, soft_quantize };

std::string layer_kind_name(LayerKind kind);

/// One layer of a network description.
///
/// `sizes` by kind:
///   dense           {in, out}
///   circconv2d      {H, W, Cin, Cout}
///   circconv3d      {H, W, D, Cin, Cout}
///   tanh            {}
///   reshape         target shape
///   soft_quantize   {bits}
///   residual_block  {rank, spatial dims..., C_main, C_side, c_1, ..., c_k}
///                   with c_k == C_main; the block returns
///                   x + path(concat(x, side)), where path is a chain of 3x3
///                   circular convs with tanh between them and a linear end.
struct LayerSpec {
    LayerKind kind;
    std::string name;
    std::vector<std::size_t> sizes;
};

// Throws ConfigError when sizes do not fit the kind.
void validate(const LayerSpec& spec);
std::size_t parameter_count(const LayerSpec& spec);
// Multiply-accumulates per forward pass. Convolution: positions * taps * Cin
// * Cout. Dense: in * out. Parameter-free kinds count zero.
std::size_t mac_count(const LayerSpec& spec);

// Glorot-uniform weights and zero biases for every parameter of `spec`.
void init_layer(const LayerSpec& spec, ParameterSet& params, std::mt19937_64& rng);

struct ForwardContext {
    double temperature = 5.0;
    // Second input consumed by residual blocks.
    Var side;
};

Var apply_layer(const LayerSpec& spec, const Binding& bind, Var x, const ForwardContext& ctx = {});
Var apply_layers(const std::vector<LayerSpec>& specs, const Binding& bind, Var x, const ForwardContext& ctx = {});

// Chain of circular convs over `spatial` dims with the given channel
// progression, tanh after each conv (the last one too unless `linear_last`).
std::vector<LayerSpec> conv_stack(const std::string& prefix, const std::vector<std::size_t>& spatial,
                                  std::size_t cin, const std::vector<std::size_t>& channels, bool linear_last);

}  // namespace bsfb::nn
