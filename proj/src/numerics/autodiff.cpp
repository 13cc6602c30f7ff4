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

#include "bsfb/numerics/autodiff.hpp"

#include "bsfb/errors.hpp"
#include "bsfb/numerics/kernels.hpp"

namespace bsfb::nn {

Var Tape::constant(Tensor value)
{
    nodes_.push_back(Node{std::move(value), {}, {}, false});
    return Var{nodes_.size() - 1};
}

Var Tape::variable(Tensor value)
{
    nodes_.push_back(Node{std::move(value), {}, {}, true});
    return Var{nodes_.size() - 1};
}

Var Tape::record(Tensor value, std::initializer_list<Var> parents, BackwardFn backward)
{
    bool needs = false;
    for (Var p : parents) {
        needs = needs || node(p).requires_grad;
    }
    nodes_.push_back(Node{std::move(value), {}, needs ? std::move(backward) : BackwardFn{}, needs});
    return Var{nodes_.size() - 1};
}

Var Tape::record(Tensor value, const std::vector<Var>& parents, BackwardFn backward)
{
    bool needs = false;
    for (Var p : parents) {
        needs = needs || node(p).requires_grad;
    }
    nodes_.push_back(Node{std::move(value), {}, needs ? std::move(backward) : BackwardFn{}, needs});
    return Var{nodes_.size() - 1};
}

const Tape::Node& Tape::node(Var v) const
{
    if (!v.valid() || v.id >= nodes_.size()) {
        throw DimensionError("invalid tape variable");
    }
    return nodes_[v.id];
}

Tape::Node& Tape::node(Var v)
{
    if (!v.valid() || v.id >= nodes_.size()) {
        throw DimensionError("invalid tape variable");
    }
    return nodes_[v.id];
}

const Tensor& Tape::value(Var v) const
{
    return node(v).value;
}

bool Tape::requires_grad(Var v) const
{
    return node(v).requires_grad;
}

Tensor Tape::grad(Var v) const
{
    const Node& n = node(v);
    if (n.grad.empty()) {
        return Tensor(n.value.shape(), 0.0);
    }
    return n.grad;
}

Tensor& Tape::grad_buffer(Var v)
{
    Node& n = node(v);
    if (n.grad.empty()) {
        n.grad = Tensor(n.value.shape(), 0.0);
    }
    return n.grad;
}

void Tape::accumulate(Var v, const Tensor& g)
{
    Node& n = node(v);
    if (!n.requires_grad) {
        return;
    }
    if (g.size() != n.value.size()) {
        throw DimensionError("gradient shape " + shape_string(g.shape()) + " does not match value " +
                             shape_string(n.value.shape()));
    }
    if (n.grad.empty()) {
        n.grad = Tensor(n.value.shape(), std::vector<double>(g.data().begin(), g.data().end()));
        return;
    }
    kernels::axpy(g.size(), 1.0, g.ptr(), n.grad.ptr());
}

void Tape::backward(Var scalar_loss)
{
    Node& root = node(scalar_loss);
    if (root.value.size() != 1) {
        throw DimensionError("backward() needs a scalar loss, got " + shape_string(root.value.shape()));
    }
    for (auto& n : nodes_) {
        n.grad = Tensor();
    }
    if (!root.requires_grad) {
        return;
    }
    root.grad = Tensor(root.value.shape(), 1.0);
    for (std::size_t i = scalar_loss.id + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (!n.requires_grad || !n.backward || n.grad.empty()) {
            continue;
        }
        // The closure may append to nothing and only touches earlier nodes,
        // so the reference into nodes_ stays valid.
        n.backward(*this, n.grad);
    }
}

}  // namespace bsfb::nn
