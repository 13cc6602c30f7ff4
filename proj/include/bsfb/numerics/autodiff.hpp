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

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <limits>
#include <vector>

#include "bsfb/numerics/tensor.hpp"

namespace bsfb::nn {

/// Handle to a node recorded on a Tape.
struct Var {
    static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();
    std::size_t id = npos;
    bool valid() const noexcept { return id != npos; }
};

/// Linear record of a forward computation for reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, so walking them backwards visits
/// every consumer before its producers. A tape is single-use: build, call
/// backward() once, read gradients. Tapes are cheap and not shared between
/// threads; parameters are copied in through Binding.
class Tape {
public:
    // Propagates grad_out (same shape as the node value) into the parents by
    // calling accumulate() on them.
    using BackwardFn = std::function<void(Tape&, const Tensor& grad_out)>;

    Var constant(Tensor value);
    Var variable(Tensor value);

    // Records an op result. The node tracks gradients iff any parent does;
    // otherwise the backward closure is dropped.
    Var record(Tensor value, std::initializer_list<Var> parents, BackwardFn backward);
    Var record(Tensor value, const std::vector<Var>& parents, BackwardFn backward);

    const Tensor& value(Var v) const;
    bool requires_grad(Var v) const;

    // Gradient of the last backward() target w.r.t. v. Zero-filled when no
    // gradient reached the node.
    Tensor grad(Var v) const;

    // grad(v) += g. No-op for nodes that do not require gradients.
    void accumulate(Var v, const Tensor& g);
    // Mutable gradient buffer, allocated zeroed on first use. Only valid for
    // nodes that require gradients.
    Tensor& grad_buffer(Var v);

    void backward(Var scalar_loss);

    std::size_t size() const noexcept { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        BackwardFn backward;
        bool requires_grad = false;
    };

    const Node& node(Var v) const;
    Node& node(Var v);

    std::vector<Node> nodes_;
};

}  // namespace bsfb::nn
