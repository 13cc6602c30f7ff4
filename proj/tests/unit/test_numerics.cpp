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

#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "bsfb/errors.hpp"
#include "bsfb/numerics/adam.hpp"
#include "bsfb/numerics/checkpoint.hpp"
#include "bsfb/numerics/gradcheck.hpp"
#include "bsfb/numerics/layers.hpp"
#include "bsfb/numerics/ops.hpp"
#include "test_util.hpp"

using namespace bsfb::nn;
using bsfb::test::max_abs;
using bsfb::test::max_abs_diff;
using bsfb::test::random_tensor;

namespace {

Tensor conv2d_value(const Tensor& x, const Tensor& k, const Tensor& b)
{
    Tape tape;
    return tape.value(circular_conv2d(tape, tape.constant(x), tape.constant(k), tape.constant(b)));
}

Tensor conv3d_value(const Tensor& x, const Tensor& k, const Tensor& b)
{
    Tape tape;
    return tape.value(circular_conv3d(tape, tape.constant(x), tape.constant(k), tape.constant(b)));
}

// Independent direct-loop circular convolution, 2-D.
Tensor conv2d_direct(const Tensor& x, const Tensor& k, const Tensor& b)
{
    const std::size_t h = x.dim(0), w = x.dim(1), cin = x.dim(2), cout = k.dim(3);
    Tensor out(Shape{h, w, cout});
    for (std::size_t i = 0; i < h; ++i) {
        for (std::size_t j = 0; j < w; ++j) {
            for (std::size_t co = 0; co < cout; ++co) {
                double acc = b[co];
                for (int di = -1; di <= 1; ++di) {
                    for (int dj = -1; dj <= 1; ++dj) {
                        const std::size_t si = (i + h + di) % h;
                        const std::size_t sj = (j + w + dj) % w;
                        for (std::size_t c = 0; c < cin; ++c) {
                            const double wt = k[(((di + 1) * 3 + (dj + 1)) * cin + c) * cout + co];
                            acc += wt * x[(si * w + sj) * cin + c];
                        }
                    }
                }
                out[(i * w + j) * cout + co] = acc;
            }
        }
    }
    return out;
}

double rel_err(const Tensor& a, const Tensor& b)
{
    return max_abs_diff(a, b) / std::max(1e-300, max_abs(b));
}

// Loss = sum(op_output * fixed random weights): a generic linear functional
// that exercises every output entry.
Var probe_loss(Tape& tape, Var out, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    Var w = tape.constant(random_tensor(tape.value(out).shape(), rng));
    return sum(tape, mul(tape, out, w));
}

double hard_quantize(double x, int bits)
{
    const double levels = std::ldexp(1.0, bits);
    const double step = 2.0 / levels;
    double idx = std::floor((x + 1.0) / step);
    idx = std::clamp(idx, 0.0, levels - 1.0);
    return -1.0 + step * (idx + 0.5);
}

}  // namespace

TEST_SUITE("tensor")
{
    TEST_CASE("shape invariants")
    {
        Tensor t(Shape{2, 3}, 1.5);
        CHECK(t.size() == 6);
        CHECK(t.rank() == 2);
        CHECK_THROWS_AS(Tensor(Shape{2, 0}), bsfb::DimensionError);
        CHECK_THROWS_AS(Tensor(Shape{}), bsfb::DimensionError);
        CHECK_THROWS_AS(Tensor(Shape{2, 2}, std::vector<double>(3)), bsfb::DimensionError);
        CHECK(t.reshaped(Shape{3, 2}).dim(0) == 3);
        CHECK_THROWS_AS(t.reshaped(Shape{4}), bsfb::DimensionError);
    }
}

TEST_SUITE("circular_conv2d")
{
    TEST_CASE("centre-delta kernel is the identity")
    {
        std::mt19937_64 rng(1);
        Tensor x = random_tensor(Shape{4, 4, 1}, rng);
        Tensor k(Shape{3, 3, 1, 1}, 0.0);
        k[4] = 1.0;
        CHECK(max_abs_diff(conv2d_value(x, k, Tensor(Shape{1})), x) == 0.0);
    }

    TEST_CASE("impulse with all-ones kernel wraps around")
    {
        Tensor x(Shape{4, 4, 1}, 0.0);
        x[0] = 1.0;
        Tensor out = conv2d_value(x, Tensor(Shape{3, 3, 1, 1}, 1.0), Tensor(Shape{1}));
        auto at = [&](std::size_t i, std::size_t j) { return out[i * 4 + j]; };
        for (std::size_t i : {3u, 0u, 1u}) {
            for (std::size_t j : {3u, 0u, 1u}) {
                CHECK(at(i, j) == 1.0);
            }
        }
        CHECK(at(2, 2) == 0.0);
        CHECK(at(0, 2) == 0.0);
        double total = 0.0;
        for (double v : out.data()) {
            total += v;
        }
        CHECK(total == 9.0);
    }

    TEST_CASE("linear in the input for zero bias")
    {
        std::mt19937_64 rng(2);
        Tensor x = random_tensor(Shape{8, 4, 2}, rng);
        Tensor y = random_tensor(Shape{8, 4, 2}, rng);
        Tensor k = random_tensor(Shape{3, 3, 2, 3}, rng);
        Tensor b(Shape{3});
        const double a = 1.7, c = -0.4;
        Tensor mix(x.shape());
        for (std::size_t i = 0; i < x.size(); ++i) {
            mix[i] = a * x[i] + c * y[i];
        }
        Tensor lhs = conv2d_value(mix, k, b);
        Tensor cx = conv2d_value(x, k, b);
        Tensor cy = conv2d_value(y, k, b);
        Tensor rhs(lhs.shape());
        for (std::size_t i = 0; i < rhs.size(); ++i) {
            rhs[i] = a * cx[i] + c * cy[i];
        }
        CHECK(rel_err(lhs, rhs) < 1e-12);
    }

    TEST_CASE("matches a direct-loop evaluation")
    {
        std::mt19937_64 rng(3);
        Tensor x = random_tensor(Shape{5, 3, 2}, rng);
        Tensor k = random_tensor(Shape{3, 3, 2, 4}, rng);
        Tensor b = random_tensor(Shape{4}, rng);
        CHECK(rel_err(conv2d_value(x, k, b), conv2d_direct(x, k, b)) < 1e-13);
    }

    TEST_CASE("circular shift equivariance")
    {
        std::mt19937_64 rng(4);
        const std::size_t h = 8, w = 4, c = 2;
        Tensor x = random_tensor(Shape{h, w, c}, rng);
        Tensor k = random_tensor(Shape{3, 3, c, 3}, rng);
        Tensor b = random_tensor(Shape{3}, rng);
        for (auto [s1, s2] : {std::pair<std::size_t, std::size_t>{1, 0}, {3, 2}, {7, 3}}) {
            auto shift = [&](const Tensor& t, std::size_t ch) {
                Tensor out(t.shape());
                for (std::size_t i = 0; i < h; ++i) {
                    for (std::size_t j = 0; j < w; ++j) {
                        for (std::size_t q = 0; q < ch; ++q) {
                            out[(((i + s1) % h) * w + (j + s2) % w) * ch + q] = t[(i * w + j) * ch + q];
                        }
                    }
                }
                return out;
            };
            CHECK(rel_err(conv2d_value(shift(x, c), k, b), shift(conv2d_value(x, k, b), 3)) < 1e-12);
        }
    }

    TEST_CASE("shape mismatch is a dimension error")
    {
        Tensor x(Shape{4, 4, 2});
        CHECK_THROWS_AS(conv2d_value(x, Tensor(Shape{3, 3, 1, 1}), Tensor(Shape{1})), bsfb::DimensionError);
        CHECK_THROWS_AS(conv2d_value(x, Tensor(Shape{5, 5, 2, 1}), Tensor(Shape{1})), bsfb::DimensionError);
        CHECK_THROWS_AS(conv2d_value(x, Tensor(Shape{3, 3, 2, 2}), Tensor(Shape{3})), bsfb::DimensionError);
    }
}

TEST_SUITE("circular_conv3d")
{
    TEST_CASE("centre-delta kernel is the identity")
    {
        std::mt19937_64 rng(5);
        Tensor x = random_tensor(Shape{4, 4, 4, 1}, rng);
        Tensor k(Shape{3, 3, 3, 1, 1}, 0.0);
        k[13] = 1.0;
        CHECK(max_abs_diff(conv3d_value(x, k, Tensor(Shape{1})), x) == 0.0);
    }

    TEST_CASE("impulse wraps to the opposite corners on all axes")
    {
        Tensor x(Shape{4, 4, 4, 1}, 0.0);
        x[0] = 1.0;
        Tensor out = conv3d_value(x, Tensor(Shape{3, 3, 3, 1, 1}, 1.0), Tensor(Shape{1}));
        auto at = [&](std::size_t i, std::size_t j, std::size_t l) { return out[(i * 4 + j) * 4 + l]; };
        CHECK(at(3, 3, 3) == 1.0);
        CHECK(at(3, 0, 0) == 1.0);
        CHECK(at(0, 3, 0) == 1.0);
        CHECK(at(0, 0, 3) == 1.0);
        CHECK(at(1, 1, 1) == 1.0);
        CHECK(at(2, 0, 0) == 0.0);
        double total = 0.0;
        for (double v : out.data()) {
            total += v;
        }
        CHECK(total == 27.0);
    }

    TEST_CASE("linear in the input for zero bias")
    {
        std::mt19937_64 rng(6);
        Tensor x = random_tensor(Shape{8, 4, 4, 2}, rng);
        Tensor y = random_tensor(Shape{8, 4, 4, 2}, rng);
        Tensor k = random_tensor(Shape{3, 3, 3, 2, 2}, rng);
        Tensor b(Shape{2});
        Tensor mix(x.shape());
        for (std::size_t i = 0; i < x.size(); ++i) {
            mix[i] = 0.3 * x[i] - 2.1 * y[i];
        }
        Tensor lhs = conv3d_value(mix, k, b);
        Tensor cx = conv3d_value(x, k, b);
        Tensor cy = conv3d_value(y, k, b);
        Tensor rhs(lhs.shape());
        for (std::size_t i = 0; i < rhs.size(); ++i) {
            rhs[i] = 0.3 * cx[i] - 2.1 * cy[i];
        }
        CHECK(rel_err(lhs, rhs) < 1e-12);
    }

    TEST_CASE("depth-one input reduces to summing the kernel over the third axis")
    {
        std::mt19937_64 rng(8);
        Tensor x = random_tensor(Shape{4, 3, 1, 2}, rng);
        Tensor k3 = random_tensor(Shape{3, 3, 3, 2, 2}, rng);
        Tensor b = random_tensor(Shape{2}, rng);
        Tensor k2(Shape{3, 3, 2, 2}, 0.0);
        for (std::size_t a = 0; a < 9; ++a) {
            for (std::size_t l = 0; l < 3; ++l) {
                for (std::size_t q = 0; q < 4; ++q) {
                    k2[a * 4 + q] += k3[(a * 3 + l) * 4 + q];
                }
            }
        }
        Tensor out3 = conv3d_value(x, k3, b);
        Tensor out2 = conv2d_value(x.reshaped(Shape{4, 3, 2}), k2, b);
        CHECK(rel_err(out3.reshaped(Shape{4, 3, 2}), out2) < 1e-12);
    }
}

TEST_SUITE("dense")
{
    TEST_CASE("identity weight and zero bias pass the input through")
    {
        Tape tape;
        Tensor eye(Shape{3, 3}, 0.0);
        eye[0] = eye[4] = eye[8] = 1.0;
        Tensor x(Shape{3}, std::vector<double>{0.5, -1.0, 2.0});
        Var y = dense(tape, tape.constant(x), tape.constant(eye), tape.constant(Tensor(Shape{3})));
        CHECK(max_abs_diff(tape.value(y), x) == 0.0);
    }

    TEST_CASE("zero weight returns the bias")
    {
        Tape tape;
        Tensor b(Shape{2}, std::vector<double>{4.0, -3.0});
        Var y = dense(tape, tape.constant(Tensor(Shape{5}, 1.0)), tape.constant(Tensor(Shape{2, 5})),
                      tape.constant(b));
        CHECK(max_abs_diff(tape.value(y), b) == 0.0);
    }

    TEST_CASE("two by two hand arithmetic")
    {
        Tape tape;
        Var y = dense(tape, tape.constant(Tensor(Shape{2}, 1.0)),
                      tape.constant(Tensor(Shape{2, 2}, std::vector<double>{1, 2, 3, 4})),
                      tape.constant(Tensor(Shape{2})));
        CHECK(tape.value(y)[0] == 3.0);
        CHECK(tape.value(y)[1] == 7.0);
    }

    TEST_CASE("shape mismatch is a dimension error")
    {
        Tape tape;
        CHECK_THROWS_AS(dense(tape, tape.constant(Tensor(Shape{3})), tape.constant(Tensor(Shape{2, 2})),
                              tape.constant(Tensor(Shape{2}))),
                        bsfb::DimensionError);
        CHECK_THROWS_AS(dense(tape, tape.constant(Tensor(Shape{2})), tape.constant(Tensor(Shape{2, 2})),
                              tape.constant(Tensor(Shape{3}))),
                        bsfb::DimensionError);
    }
}

TEST_SUITE("soft_quantize")
{
    TEST_CASE("zero maps to zero")
    {
        for (int bits : {1, 2, 3, 8}) {
            CHECK(std::abs(soft_quantize_value(0.0, bits, 7.0)) < 1e-15);
        }
    }

    TEST_CASE("converges to the hard quantizer at high temperature")
    {
        CHECK(hard_quantize(0.6, 2) == 0.75);
        CHECK(std::abs(soft_quantize_value(0.6, 2, 1e6) - hard_quantize(0.6, 2)) < 1e-3);
        for (double x : {-0.93, -0.41, 0.07, 0.33, 0.88}) {
            for (int bits : {1, 3, 8}) {
                CHECK(std::abs(soft_quantize_value(x, bits, 1e6) - hard_quantize(x, bits)) < 1e-3);
            }
        }
    }

    TEST_CASE("derivative at a bin boundary is positive")
    {
        CHECK(soft_quantize_derivative(0.0, 2, 10.0) > 0.0);
        CHECK(soft_quantize_derivative(0.5, 2, 50.0) > 0.0);
    }

    TEST_CASE("monotone nondecreasing")
    {
        for (double temp : {0.5, 5.0, 100.0, 1e4}) {
            double prev = soft_quantize_value(-1.5, 3, temp);
            for (int i = -150; i <= 150; ++i) {
                const double v = soft_quantize_value(i / 100.0, 3, temp);
                CHECK(v >= prev);
                prev = v;
            }
        }
    }

    TEST_CASE("bits outside [1, 16] and bad temperatures are config errors")
    {
        CHECK_THROWS_AS(soft_quantize_value(0.1, 0, 5.0), bsfb::ConfigError);
        CHECK_THROWS_AS(soft_quantize_value(0.1, 17, 5.0), bsfb::ConfigError);
        CHECK_THROWS_AS(soft_quantize_value(0.1, 4, 0.0), bsfb::ConfigError);
        Tape tape;
        CHECK_THROWS_AS(soft_quantize(tape, tape.constant(Tensor(Shape{2})), 20, 5.0), bsfb::ConfigError);
    }
}

TEST_SUITE("adam")
{
    TEST_CASE("zero gradient leaves parameters unchanged")
    {
        ParameterSet p;
        p.add("w", Tensor(Shape{3}, std::vector<double>{1, -2, 3}));
        AdamState s;
        adam_step(p, p.zeros_like(), s, 0.1);
        CHECK(p.at("w")[0] == 1.0);
        CHECK(p.at("w")[1] == -2.0);
        CHECK(p.at("w")[2] == 3.0);
        CHECK(s.step == 1);
    }

    TEST_CASE("first step on a unit gradient moves by the learning rate")
    {
        ParameterSet p;
        p.add("w", Tensor::scalar(0.0));
        ParameterSet g;
        g.add("w", Tensor::scalar(1.0));
        AdamState s;
        adam_step(p, g, s, 0.1);
        // m = 0.1, v = 0.001; m_hat = 1, v_hat = 1; step = 0.1 / (1 + 1e-8).
        const double expected = -0.1 / (1.0 + 1e-8);
        CHECK(std::abs(p.at("w")[0] - expected) < 1e-15);
    }

    TEST_CASE("identical parameters with identical gradients stay identical")
    {
        ParameterSet p;
        p.add("a", Tensor(Shape{2}, 0.3));
        p.add("b", Tensor(Shape{2}, 0.3));
        ParameterSet g;
        g.add("a", Tensor(Shape{2}, std::vector<double>{0.2, -0.7}));
        g.add("b", Tensor(Shape{2}, std::vector<double>{0.2, -0.7}));
        AdamState s;
        for (int i = 0; i < 5; ++i) {
            adam_step(p, g, s, 0.01);
        }
        CHECK(max_abs_diff(p.at("a"), p.at("b")) == 0.0);
    }

    TEST_CASE("non-finite gradient names the parameter and changes nothing")
    {
        ParameterSet p;
        p.add("fine", Tensor(Shape{1}, 1.0));
        p.add("broken", Tensor(Shape{1}, 1.0));
        ParameterSet g;
        g.add("fine", Tensor(Shape{1}, 1.0));
        g.add("broken", Tensor(Shape{1}, std::nan("")));
        AdamState s;
        try {
            adam_step(p, g, s, 0.1);
            FAIL("expected a TrainingError");
        } catch (const bsfb::TrainingError& e) {
            CHECK(std::string(e.what()).find("broken") != std::string::npos);
        }
        CHECK(p.at("fine")[0] == 1.0);
        CHECK(s.step == 0);
    }

    TEST_CASE("frozen parameters are skipped")
    {
        ParameterSet p;
        p.add("c.w", Tensor(Shape{1}, 1.0));
        p.add("bm.w", Tensor(Shape{1}, 1.0));
        ParameterSet g;
        g.add("c.w", Tensor(Shape{1}, 1.0));
        g.add("bm.w", Tensor(Shape{1}, 1.0));
        AdamState s;
        adam_step(p, g, s, 0.1, [](const std::string& n) { return n.rfind("c.", 0) != 0; });
        CHECK(p.at("c.w")[0] == 1.0);
        CHECK(p.at("bm.w")[0] < 1.0);
    }
}

TEST_SUITE("grad_check")
{
    TEST_CASE("dense-only network")
    {
        std::mt19937_64 rng(11);
        ParameterSet params;
        init_layer(LayerSpec{LayerKind::dense, "d0", {6, 5}}, params, rng);
        init_layer(LayerSpec{LayerKind::dense, "d1", {5, 3}}, params, rng);
        for (auto& p : params) {
            p.value = random_tensor(p.value.shape(), rng);
        }
        const Tensor input = random_tensor(Shape{6}, rng);
        const Tensor target = random_tensor(Shape{3}, rng);
        auto loss = [&](const Binding& b) {
            Tape& t = b.tape();
            Var h = dense(t, t.constant(input), b("d0.w"), b("d0.b"));
            Var y = dense(t, h, b("d1.w"), b("d1.b"));
            return squared_error(t, y, t.constant(target));
        };
        auto r = grad_check(params, loss, 1e-6, 64);
        CHECK(r.checked > 0);
        CHECK(r.max_relative_error < 1e-6);
    }

    TEST_CASE("circular conv and tanh stack")
    {
        std::mt19937_64 rng(12);
        auto specs = conv_stack("s", {4, 3}, 2, {4, 3, 2}, true);
        ParameterSet params;
        for (const auto& s : specs) {
            init_layer(s, params, rng);
        }
        for (auto& p : params) {
            p.value = random_tensor(p.value.shape(), rng, 0.5);
        }
        const Tensor input = random_tensor(Shape{4, 3, 2}, rng);
        auto loss = [&](const Binding& b) {
            Tape& t = b.tape();
            return probe_loss(t, apply_layers(specs, b, t.constant(input)), 99);
        };
        auto r = grad_check(params, loss, 1e-6, 32);
        CHECK(r.max_relative_error < 1e-5);
    }

    TEST_CASE("soft quantizer at temperature 5")
    {
        std::mt19937_64 rng(13);
        std::uniform_real_distribution<double> u(-0.95, 0.95);
        ParameterSet params;
        Tensor x(Shape{24});
        for (auto& v : x.data()) {
            v = u(rng);
        }
        params.add("x", x);
        auto loss = [](const Binding& b) {
            Tape& t = b.tape();
            return probe_loss(t, soft_quantize(t, b("x"), 3, 5.0), 5);
        };
        auto r = grad_check(params, loss, 1e-6, 24);
        CHECK(r.max_relative_error < 1e-5);
    }

    TEST_CASE("epsilon outside [1e-7, 1e-4] is rejected")
    {
        ParameterSet params;
        params.add("x", Tensor(Shape{1}, 1.0));
        auto loss = [](const Binding& b) { return sum_squares(b.tape(), b("x")); };
        CHECK_THROWS_AS(grad_check(params, loss, 1e-3), bsfb::ConfigError);
        CHECK_THROWS_AS(grad_check(params, loss, 1e-9), bsfb::ConfigError);
        CHECK_NOTHROW(grad_check(params, loss, 1e-5));
    }
}

TEST_SUITE("op gradients")
{
    // Every op checked against central differences through a random linear
    // probe of its output.
    template <typename Build>
    double check_op(ParameterSet params, Build build, std::uint64_t seed = 21)
    {
        auto loss = [&](const Binding& b) { return probe_loss(b.tape(), build(b), seed); };
        return grad_check(params, loss, 1e-6, 32).max_relative_error;
    }

    ParameterSet random_params(std::initializer_list<std::pair<const char*, Shape>> specs, std::uint64_t seed)
    {
        std::mt19937_64 rng(seed);
        ParameterSet p;
        for (const auto& [name, shape] : specs) {
            p.add(name, random_tensor(shape, rng));
        }
        return p;
    }

    TEST_CASE("elementwise and structural ops")
    {
        auto p = random_params({{"a", Shape{3, 4, 2}}, {"b", Shape{3, 4, 2}}, {"c", Shape{3, 4, 1}}}, 1);
        CHECK(check_op(p, [](const Binding& b) { return add(b.tape(), b("a"), b("b")); }) < 1e-7);
        CHECK(check_op(p, [](const Binding& b) { return sub(b.tape(), b("a"), b("b")); }) < 1e-7);
        CHECK(check_op(p, [](const Binding& b) { return mul(b.tape(), b("a"), b("b")); }) < 1e-7);
        CHECK(check_op(p, [](const Binding& b) { return scale(b.tape(), b("a"), -2.5); }) < 1e-7);
        CHECK(check_op(p, [](const Binding& b) { return tanh(b.tape(), b("a")); }) < 1e-6);
        CHECK(check_op(p, [](const Binding& b) { return reshape(b.tape(), b("a"), Shape{24}); }) < 1e-7);
        CHECK(check_op(p, [](const Binding& b) { return concat_channels(b.tape(), b("a"), b("c")); }) < 1e-7);
        CHECK(check_op(p, [](const Binding& b) { return slice_channels(b.tape(), b("a"), 1, 1); }) < 1e-7);
        CHECK(check_op(p, [](const Binding& b) { return sum_squares(b.tape(), b("a")); }) < 1e-7);
        CHECK(check_op(p, [](const Binding& b) { return squared_error(b.tape(), b("a"), b("b")); }) < 1e-7);
    }

    TEST_CASE("scalar ops")
    {
        auto p = random_params({{"x", Shape{6}}, {"s", Shape{1}}}, 2);
        p.at("s")[0] = 1.3;
        CHECK(check_op(p, [](const Binding& b) { return max_abs(b.tape(), b("x")); }) < 1e-7);
        CHECK(check_op(p, [](const Binding& b) { return divide_by(b.tape(), b("x"), b("s")); }) < 1e-6);
        CHECK(check_op(p, [](const Binding& b) { return multiply_by(b.tape(), b("x"), b("s")); }) < 1e-7);
        CHECK(check_op(p, [](const Binding& b) {
                  Tape& t = b.tape();
                  return divide_by(t, b("x"), max_abs(t, b("x")));
              }) < 1e-6);
    }

    TEST_CASE("convolutions")
    {
        auto p2 = random_params({{"x", Shape{4, 5, 2}}, {"k", Shape{3, 3, 2, 3}}, {"b", Shape{3}}}, 3);
        CHECK(check_op(p2, [](const Binding& b) {
                  return circular_conv2d(b.tape(), b("x"), b("k"), b("b"));
              }) < 1e-6);
        auto p3 = random_params({{"x", Shape{3, 4, 2, 2}}, {"k", Shape{3, 3, 3, 2, 2}}, {"b", Shape{2}}}, 4);
        CHECK(check_op(p3, [](const Binding& b) {
                  return circular_conv3d(b.tape(), b("x"), b("k"), b("b"));
              }) < 1e-6);
    }

    TEST_CASE("complex ops")
    {
        auto p = random_params({{"a", Shape{5, 3, 2}}, {"b", Shape{3, 4, 2}}, {"sq", Shape{3, 3, 2}},
                                {"r", Shape{3, 2, 2}}, {"m", Shape{5, 3}}},
                               5);
        for (auto op : {ComplexOp::none, ComplexOp::conjugate}) {
            CHECK(check_op(p, [op](const Binding& b) {
                      return complex_matmul(b.tape(), b("a"), b("b"), op, op);
                  }) < 1e-6);
        }
        CHECK(check_op(p, [](const Binding& b) {
                  return complex_matmul(b.tape(), b("a"), b("a"), ComplexOp::transpose, ComplexOp::conjugate);
              }) < 1e-6);
        CHECK(check_op(p, [](const Binding& b) {
                  return complex_matmul(b.tape(), b("a"), b("a"), ComplexOp::adjoint, ComplexOp::none);
              }) < 1e-6);
        CHECK(check_op(p, [](const Binding& b) { return complex_solve(b.tape(), b("sq"), b("r")); }) < 1e-5);
        CHECK(check_op(p, [](const Binding& b) { return normalize_columns(b.tape(), b("a")); }) < 1e-6);
        CHECK(check_op(p, [](const Binding& b) { return complex_abs(b.tape(), b("a")); }) < 1e-6);
        CHECK(check_op(p, [](const Binding& b) { return with_magnitude(b.tape(), b("a"), b("m")); }) < 1e-6);
    }

    TEST_CASE("residual block")
    {
        std::mt19937_64 rng(6);
        LayerSpec block{LayerKind::residual_block, "rb", {2, 4, 3, 2, 1, 4, 2}};
        ParameterSet params;
        init_layer(block, params, rng);
        params.add("x", random_tensor(Shape{4, 3, 2}, rng));
        params.add("side", random_tensor(Shape{4, 3, 1}, rng));
        auto err = check_op(params, [&](const Binding& b) {
            return apply_layer(block, b, b("x"), ForwardContext{5.0, b("side")});
        });
        CHECK(err < 1e-5);
    }
}

TEST_SUITE("complex helpers")
{
    TEST_CASE("matmul matches Eigen and solve inverts")
    {
        std::mt19937_64 rng(31);
        Eigen::MatrixXcd a = bsfb::test::random_complex(4, 3, rng);
        Eigen::MatrixXcd b = bsfb::test::random_complex(4, 2, rng);
        Tape tape;
        Var va = tape.constant(complex_to_tensor(a));
        Var vb = tape.constant(complex_to_tensor(b));
        Eigen::MatrixXcd got = tensor_to_complex(tape.value(complex_matmul(tape, va, vb, ComplexOp::transpose)));
        CHECK((got - a.transpose() * b).norm() < 1e-12);
        got = tensor_to_complex(tape.value(complex_matmul(tape, va, vb, ComplexOp::adjoint)));
        CHECK((got - a.adjoint() * b).norm() < 1e-12);

        Eigen::MatrixXcd m = bsfb::test::random_complex(3, 3, rng);
        Eigen::MatrixXcd r = bsfb::test::random_complex(3, 2, rng);
        Var z = complex_solve(tape, tape.constant(complex_to_tensor(m)), tape.constant(complex_to_tensor(r)));
        CHECK((m * tensor_to_complex(tape.value(z)) - r).norm() < 1e-12);

        Tensor zero(Shape{2, 2, 2}, 0.0);
        CHECK_THROWS_AS(complex_solve(tape, tape.constant(zero), tape.constant(Tensor(Shape{2, 1, 2}))),
                        bsfb::SingularityError);
    }

    TEST_CASE("normalize_columns yields unit columns")
    {
        std::mt19937_64 rng(32);
        Tape tape;
        Var n = normalize_columns(tape, tape.constant(complex_to_tensor(bsfb::test::random_complex(6, 3, rng))));
        Eigen::MatrixXcd t = tensor_to_complex(tape.value(n));
        for (Eigen::Index j = 0; j < 3; ++j) {
            CHECK(std::abs(t.col(j).norm() - 1.0) < 1e-14);
        }
    }
}

TEST_SUITE("tape and layers")
{
    TEST_CASE("constants receive exactly zero gradient")
    {
        ParameterSet params;
        params.add("frozen", Tensor(Shape{2}, 1.0));
        params.add("live", Tensor(Shape{2}, 2.0));
        Tape tape;
        Binding bind(tape, params, [](const std::string& n) { return n == "live"; });
        Var l = sum_squares(tape, mul(tape, bind("frozen"), bind("live")));
        tape.backward(l);
        auto g = bind.gradients();
        CHECK(max_abs(g.at("frozen")) == 0.0);
        CHECK(g.at("live")[0] == doctest::Approx(4.0));
    }

    TEST_CASE("layer counts")
    {
        LayerSpec d{LayerKind::dense, "d", {10, 20}};
        CHECK(parameter_count(d) == 220);
        CHECK(mac_count(d) == 200);
        LayerSpec c{LayerKind::circconv2d, "c", {8, 4, 2, 16}};
        CHECK(parameter_count(c) == 9 * 2 * 16 + 16);
        CHECK(mac_count(c) == 8 * 4 * 9 * 2 * 16);
        LayerSpec c3{LayerKind::circconv3d, "c3", {8, 4, 2, 1, 2}};
        CHECK(parameter_count(c3) == 27 * 2 + 2);
        LayerSpec rb{LayerKind::residual_block, "rb", {2, 8, 4, 2, 1, 16, 8, 4, 2}};
        CHECK(parameter_count(rb) == (27 * 16 + 16) + (144 * 8 + 8) + (72 * 4 + 4) + (36 * 2 + 2));
        CHECK_THROWS_AS(validate(LayerSpec{LayerKind::dense, "bad", {0, 3}}), bsfb::ConfigError);
        CHECK_THROWS_AS(validate(LayerSpec{LayerKind::residual_block, "bad", {2, 4, 4, 2, 1, 16, 3}}),
                        bsfb::ConfigError);
    }

    TEST_CASE("zero conv-path weights make a residual block the identity")
    {
        std::mt19937_64 rng(41);
        LayerSpec block{LayerKind::residual_block, "rb", {2, 4, 4, 2, 1, 8, 2}};
        ParameterSet params;
        init_layer(block, params, rng);
        for (auto& p : params) {
            p.value.fill(0.0);
        }
        Tape tape;
        Binding bind(tape, params);
        Tensor x = random_tensor(Shape{4, 4, 2}, rng);
        Var y = apply_layer(block, bind, tape.constant(x), ForwardContext{5.0, tape.constant(Tensor(Shape{4, 4, 1}))});
        CHECK(max_abs_diff(tape.value(y), x) == 0.0);
    }

    TEST_CASE("glorot init is bounded and biases are zero")
    {
        std::mt19937_64 rng(42);
        ParameterSet params;
        init_layer(LayerSpec{LayerKind::dense, "d", {30, 20}}, params, rng);
        const double limit = std::sqrt(6.0 / 50.0);
        CHECK(max_abs(params.at("d.w")) <= limit);
        CHECK(max_abs(params.at("d.b")) == 0.0);
    }
}

TEST_SUITE("checkpoint")
{
    TEST_CASE("round trip and truncation")
    {
        std::mt19937_64 rng(51);
        ParameterSet params;
        params.add("layer.w", random_tensor(Shape{3, 3, 2, 4}, rng));
        params.add("layer.b", random_tensor(Shape{4}, rng));
        std::stringstream buf;
        write_checkpoint(buf, params);
        const std::string bytes = buf.str();
        CHECK(bytes.substr(0, 4) == "BSNN");

        std::stringstream in(bytes);
        ParameterSet back = read_checkpoint(in);
        REQUIRE(back.size() == 2);
        CHECK(back.at("layer.w").shape() == params.at("layer.w").shape());
        CHECK(max_abs_diff(back.at("layer.w"), params.at("layer.w")) == 0.0);

        std::stringstream cut(bytes.substr(0, bytes.size() - 5));
        CHECK_THROWS_AS(read_checkpoint(cut), bsfb::FormatError);
        std::stringstream bad("XXXX");
        CHECK_THROWS_AS(read_checkpoint(bad), bsfb::FormatError);
    }
}
