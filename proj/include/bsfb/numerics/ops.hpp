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

// Differentiable operations recorded on a Tape.
//
// Complex operands are real tensors of shape [rows, cols, 2]; the gradient of
// a real loss w.r.t. a complex entry z is stored as dL/dRe(z) + j dL/dIm(z).

#include <cstddef>

#include <Eigen/Dense>

#include "bsfb/numerics/autodiff.hpp"

namespace bsfb::nn {

Var add(Tape& tape, Var a, Var b);
Var sub(Tape& tape, Var a, Var b);
Var mul(Tape& tape, Var a, Var b);
Var scale(Tape& tape, Var a, double factor);
Var tanh(Tape& tape, Var a);
Var reshape(Tape& tape, Var a, Shape shape);

// Concatenation / slicing along the last (channel) axis.
Var concat_channels(Tape& tape, Var a, Var b);
Var slice_channels(Tape& tape, Var a, std::size_t begin, std::size_t count);

Var sum(Tape& tape, Var a);
Var sum_squares(Tape& tape, Var a);
// sum((estimate - target)^2)
Var squared_error(Tape& tape, Var estimate, Var target);

// weight [m x n] * flatten(x) + bias [m]
Var dense(Tape& tape, Var x, Var weight, Var bias);

// x [H x W x Cin], kernel [3 x 3 x Cin x Cout], bias [Cout]. Neighbour
// indices wrap modulo H and W; no padding, stride 1.
Var circular_conv2d(Tape& tape, Var x, Var kernel, Var bias);
// x [H x W x D x Cin], kernel [3 x 3 x 3 x Cin x Cout], bias [Cout].
Var circular_conv3d(Tape& tape, Var x, Var kernel, Var bias);

// Smooth mid-rise staircase on [-1, 1]: 2^bits - 1 sigmoids of slope
// `temperature` centred on the bin boundaries.
Var soft_quantize(Tape& tape, Var x, int bits, double temperature);
double soft_quantize_value(double x, int bits, double temperature);
double soft_quantize_derivative(double x, int bits, double temperature);

// max_i |x_i| as a [1] tensor; the gradient flows to the first maximiser.
Var max_abs(Tape& tape, Var x);
// x / s and x * s for a [1]-shaped s.
Var divide_by(Tape& tape, Var x, Var s);
Var multiply_by(Tape& tape, Var x, Var s);

enum class ComplexOp { none, transpose, conjugate, adjoint };

// op_a(A) * op_b(B) for complex [r x c x 2] operands.
Var complex_matmul(Tape& tape, Var a, Var b, ComplexOp op_a = ComplexOp::none, ComplexOp op_b = ComplexOp::none);
// M^{-1} rhs for square complex M. Throws SingularityError if M is singular.
Var complex_solve(Tape& tape, Var m, Var rhs);
// Scales every column of a complex [n x l x 2] matrix to unit 2-norm.
Var normalize_columns(Tape& tape, Var t);
// |z| elementwise: [... x 2] -> [...].
Var complex_abs(Tape& tape, Var z);
// magnitude * z / |z| elementwise; entries with z == 0 take phase 0.
Var with_magnitude(Tape& tape, Var z, Var magnitude);

// Conversions between Eigen complex matrices and [r x c x 2] tensors.
Tensor complex_to_tensor(const Eigen::MatrixXcd& m);
Eigen::MatrixXcd tensor_to_complex(const Tensor& t);

}  // namespace bsfb::nn
