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

#include "bsfb/numerics/ops.hpp"

#include <cmath>
#include <cstdint>
#include <memory>

#include "bsfb/errors.hpp"
#include "bsfb/numerics/kernels.hpp"

namespace bsfb::nn {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op)
{
    if (!a.same_shape(b)) {
        throw DimensionError(std::string(op) + ": shape " + shape_string(a.shape()) + " vs " +
                             shape_string(b.shape()));
    }
}

void require_complex(const Tensor& t, const char* op)
{
    if (t.rank() != 3 || t.dim(2) != 2) {
        throw DimensionError(std::string(op) + ": expected complex [r x c x 2], got " + shape_string(t.shape()));
    }
}

void require_scalar(const Tensor& t, const char* op)
{
    if (t.size() != 1) {
        throw DimensionError(std::string(op) + ": expected a scalar, got " + shape_string(t.shape()));
    }
}

}  // namespace

Tensor complex_to_tensor(const Eigen::MatrixXcd& m)
{
    Tensor t(Shape{static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()), 2});
    const auto cols = static_cast<std::size_t>(m.cols());
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            const std::size_t at = (static_cast<std::size_t>(i) * cols + static_cast<std::size_t>(j)) * 2;
            t[at] = m(i, j).real();
            t[at + 1] = m(i, j).imag();
        }
    }
    return t;
}

Eigen::MatrixXcd tensor_to_complex(const Tensor& t)
{
    if (t.rank() < 2 || t.shape().back() != 2) {
        throw DimensionError("complex tensor needs a trailing axis of size 2, got " + shape_string(t.shape()));
    }
    std::size_t rows = 1;
    std::size_t cols = 1;
    if (t.rank() == 3) {
        rows = t.dim(0);
        cols = t.dim(1);
    } else {
        rows = t.size() / 2;
    }
    Eigen::MatrixXcd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) {
            const std::size_t at = (i * cols + j) * 2;
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = {t[at], t[at + 1]};
        }
    }
    return m;
}

Var add(Tape& tape, Var a, Var b)
{
    const Tensor& va = tape.value(a);
    const Tensor& vb = tape.value(b);
    require_same_shape(va, vb, "add");
    Tensor out = va;
    kernels::axpy(out.size(), 1.0, vb.ptr(), out.ptr());
    return tape.record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
        t.accumulate(a, g);
        t.accumulate(b, g);
    });
}

Var sub(Tape& tape, Var a, Var b)
{
    const Tensor& va = tape.value(a);
    const Tensor& vb = tape.value(b);
    require_same_shape(va, vb, "sub");
    Tensor out = va;
    kernels::axpy(out.size(), -1.0, vb.ptr(), out.ptr());
    return tape.record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
        t.accumulate(a, g);
        if (t.requires_grad(b)) {
            Tensor neg = g;
            for (auto& x : neg.data()) {
                x = -x;
            }
            t.accumulate(b, neg);
        }
    });
}

Var mul(Tape& tape, Var a, Var b)
{
    const Tensor& va = tape.value(a);
    const Tensor& vb = tape.value(b);
    require_same_shape(va, vb, "mul");
    Tensor out(va.shape());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = va[i] * vb[i];
    }
    return tape.record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
        const Tensor& xa = t.value(a);
        const Tensor& xb = t.value(b);
        if (t.requires_grad(a)) {
            Tensor& ga = t.grad_buffer(a);
            for (std::size_t i = 0; i < g.size(); ++i) {
                ga[i] += g[i] * xb[i];
            }
        }
        if (t.requires_grad(b)) {
            Tensor& gb = t.grad_buffer(b);
            for (std::size_t i = 0; i < g.size(); ++i) {
                gb[i] += g[i] * xa[i];
            }
        }
    });
}

Var scale(Tape& tape, Var a, double factor)
{
    Tensor out = tape.value(a);
    for (auto& x : out.data()) {
        x *= factor;
    }
    return tape.record(std::move(out), {a}, [a, factor](Tape& t, const Tensor& g) {
        kernels::axpy(g.size(), factor, g.ptr(), t.grad_buffer(a).ptr());
    });
}

Var tanh(Tape& tape, Var a)
{
    Tensor out = tape.value(a);
    for (auto& x : out.data()) {
        x = std::tanh(x);
    }
    Tensor y = out;
    return tape.record(std::move(out), {a}, [a, y = std::move(y)](Tape& t, const Tensor& g) {
        Tensor& ga = t.grad_buffer(a);
        for (std::size_t i = 0; i < g.size(); ++i) {
            ga[i] += g[i] * (1.0 - y[i] * y[i]);
        }
    });
}

Var reshape(Tape& tape, Var a, Shape shape)
{
    Tensor out = tape.value(a).reshaped(std::move(shape));
    return tape.record(std::move(out), {a}, [a](Tape& t, const Tensor& g) {
        Tensor& ga = t.grad_buffer(a);
        kernels::axpy(g.size(), 1.0, g.ptr(), ga.ptr());
    });
}

Var concat_channels(Tape& tape, Var a, Var b)
{
    const Tensor& va = tape.value(a);
    const Tensor& vb = tape.value(b);
    if (va.rank() != vb.rank()) {
        throw DimensionError("concat_channels: rank mismatch " + shape_string(va.shape()) + " vs " +
                             shape_string(vb.shape()));
    }
    for (std::size_t i = 0; i + 1 < va.rank(); ++i) {
        if (va.dim(i) != vb.dim(i)) {
            throw DimensionError("concat_channels: leading dims differ " + shape_string(va.shape()) + " vs " +
                                 shape_string(vb.shape()));
        }
    }
    const std::size_t ca = va.shape().back();
    const std::size_t cb = vb.shape().back();
    const std::size_t rows = va.size() / ca;
    Shape shape = va.shape();
    shape.back() = ca + cb;
    Tensor out(shape);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < ca; ++c) {
            out[r * (ca + cb) + c] = va[r * ca + c];
        }
        for (std::size_t c = 0; c < cb; ++c) {
            out[r * (ca + cb) + ca + c] = vb[r * cb + c];
        }
    }
    return tape.record(std::move(out), {a, b}, [a, b, ca, cb, rows](Tape& t, const Tensor& g) {
        if (t.requires_grad(a)) {
            Tensor& ga = t.grad_buffer(a);
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t c = 0; c < ca; ++c) {
                    ga[r * ca + c] += g[r * (ca + cb) + c];
                }
            }
        }
        if (t.requires_grad(b)) {
            Tensor& gb = t.grad_buffer(b);
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t c = 0; c < cb; ++c) {
                    gb[r * cb + c] += g[r * (ca + cb) + ca + c];
                }
            }
        }
    });
}

Var slice_channels(Tape& tape, Var a, std::size_t begin, std::size_t count)
{
    const Tensor& va = tape.value(a);
    const std::size_t ca = va.shape().back();
    if (count == 0 || begin + count > ca) {
        throw DimensionError("slice_channels: range [" + std::to_string(begin) + ", " +
                             std::to_string(begin + count) + ") outside " + std::to_string(ca) + " channels");
    }
    const std::size_t rows = va.size() / ca;
    Shape shape = va.shape();
    shape.back() = count;
    Tensor out(shape);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < count; ++c) {
            out[r * count + c] = va[r * ca + begin + c];
        }
    }
    return tape.record(std::move(out), {a}, [a, begin, count, ca, rows](Tape& t, const Tensor& g) {
        Tensor& ga = t.grad_buffer(a);
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < count; ++c) {
                ga[r * ca + begin + c] += g[r * count + c];
            }
        }
    });
}

Var sum(Tape& tape, Var a)
{
    double s = 0.0;
    for (double x : tape.value(a).data()) {
        s += x;
    }
    return tape.record(Tensor::scalar(s), {a}, [a](Tape& t, const Tensor& g) {
        Tensor& ga = t.grad_buffer(a);
        for (auto& x : ga.data()) {
            x += g[0];
        }
    });
}

Var sum_squares(Tape& tape, Var a)
{
    const Tensor& va = tape.value(a);
    const double s = kernels::dot(va.size(), va.ptr(), va.ptr());
    return tape.record(Tensor::scalar(s), {a}, [a](Tape& t, const Tensor& g) {
        const Tensor& x = t.value(a);
        kernels::axpy(x.size(), 2.0 * g[0], x.ptr(), t.grad_buffer(a).ptr());
    });
}

Var squared_error(Tape& tape, Var estimate, Var target)
{
    const Tensor& ve = tape.value(estimate);
    const Tensor& vt = tape.value(target);
    require_same_shape(ve, vt, "squared_error");
    Tensor diff = ve;
    kernels::axpy(diff.size(), -1.0, vt.ptr(), diff.ptr());
    const double s = kernels::dot(diff.size(), diff.ptr(), diff.ptr());
    return tape.record(Tensor::scalar(s), {estimate, target},
                       [estimate, target, diff = std::move(diff)](Tape& t, const Tensor& g) {
                           if (t.requires_grad(estimate)) {
                               kernels::axpy(diff.size(), 2.0 * g[0], diff.ptr(), t.grad_buffer(estimate).ptr());
                           }
                           if (t.requires_grad(target)) {
                               kernels::axpy(diff.size(), -2.0 * g[0], diff.ptr(), t.grad_buffer(target).ptr());
                           }
                       });
}

Var dense(Tape& tape, Var x, Var weight, Var bias)
{
    const Tensor& vx = tape.value(x);
    const Tensor& vw = tape.value(weight);
    const Tensor& vb = tape.value(bias);
    if (vw.rank() != 2 || vw.dim(1) != vx.size() || vb.size() != vw.dim(0)) {
        throw DimensionError("dense: weight " + shape_string(vw.shape()) + ", input " + shape_string(vx.shape()) +
                             ", bias " + shape_string(vb.shape()));
    }
    const std::size_t m = vw.dim(0);
    const std::size_t n = vw.dim(1);
    Tensor out(Shape{m});
    for (std::size_t i = 0; i < m; ++i) {
        out[i] = vb[i] + kernels::dot(n, vw.ptr() + i * n, vx.ptr());
    }
    return tape.record(std::move(out), {x, weight, bias}, [x, weight, bias, m, n](Tape& t, const Tensor& g) {
        const Tensor& xv = t.value(x);
        const Tensor& wv = t.value(weight);
        if (t.requires_grad(x)) {
            Tensor& gx = t.grad_buffer(x);
            for (std::size_t i = 0; i < m; ++i) {
                kernels::axpy(n, g[i], wv.ptr() + i * n, gx.ptr());
            }
        }
        if (t.requires_grad(weight)) {
            Tensor& gw = t.grad_buffer(weight);
            for (std::size_t i = 0; i < m; ++i) {
                kernels::axpy(n, g[i], xv.ptr(), gw.ptr() + i * n);
            }
        }
        if (t.requires_grad(bias)) {
            kernels::axpy(m, 1.0, g.ptr(), t.grad_buffer(bias).ptr());
        }
    });
}

namespace {

// Index plumbing for a 3x3 (or 3x3x3) circular convolution lowered to GEMM.
struct ConvPlan {
    std::size_t positions = 0;
    std::size_t taps = 0;
    std::size_t cin = 0;
    std::size_t cout = 0;
    // source[tap * positions + p]: input position read by `tap` for output p.
    std::vector<std::uint32_t> source;
};

std::shared_ptr<const ConvPlan> make_plan(const Tensor& x, const Tensor& kernel, const Tensor& bias,
                                          std::size_t spatial_rank)
{
    const char* op = spatial_rank == 2 ? "circular_conv2d" : "circular_conv3d";
    if (x.rank() != spatial_rank + 1 || kernel.rank() != spatial_rank + 2) {
        throw DimensionError(std::string(op) + ": input " + shape_string(x.shape()) + ", kernel " +
                             shape_string(kernel.shape()));
    }
    for (std::size_t a = 0; a < spatial_rank; ++a) {
        if (kernel.dim(a) != 3) {
            throw DimensionError(std::string(op) + ": kernel must be 3-wide on every spatial axis, got " +
                                 shape_string(kernel.shape()));
        }
    }
    const std::size_t cin = x.shape().back();
    if (kernel.dim(spatial_rank) != cin) {
        throw DimensionError(std::string(op) + ": kernel expects " + std::to_string(kernel.dim(spatial_rank)) +
                             " input channels, input has " + std::to_string(cin));
    }
    const std::size_t cout = kernel.dim(spatial_rank + 1);
    if (bias.size() != cout) {
        throw DimensionError(std::string(op) + ": bias " + shape_string(bias.shape()) + " for " +
                             std::to_string(cout) + " output channels");
    }

    auto plan = std::make_shared<ConvPlan>();
    plan->cin = cin;
    plan->cout = cout;
    plan->positions = x.size() / cin;
    plan->taps = spatial_rank == 2 ? 9 : 27;
    plan->source.resize(plan->taps * plan->positions);

    const std::size_t h = x.dim(0);
    const std::size_t w = x.dim(1);
    const std::size_t d = spatial_rank == 3 ? x.dim(2) : 1;
    auto wrap = [](std::size_t i, int off, std::size_t n) {
        return static_cast<std::size_t>((static_cast<long>(i) + off + static_cast<long>(n)) % static_cast<long>(n));
    };
    for (std::size_t tap = 0; tap < plan->taps; ++tap) {
        const int oi = static_cast<int>(spatial_rank == 2 ? tap / 3 : tap / 9) - 1;
        const int oj = static_cast<int>(spatial_rank == 2 ? tap % 3 : (tap / 3) % 3) - 1;
        const int ok = spatial_rank == 2 ? 0 : static_cast<int>(tap % 3) - 1;
        for (std::size_t i = 0; i < h; ++i) {
            for (std::size_t j = 0; j < w; ++j) {
                for (std::size_t k = 0; k < d; ++k) {
                    const std::size_t p = (i * w + j) * d + k;
                    const std::size_t src = (wrap(i, oi, h) * w + wrap(j, oj, w)) * d + wrap(k, ok, d);
                    plan->source[tap * plan->positions + p] = static_cast<std::uint32_t>(src);
                }
            }
        }
    }
    return plan;
}

Var circular_conv(Tape& tape, Var x, Var kernel, Var bias, std::size_t spatial_rank)
{
    const Tensor& vx = tape.value(x);
    const Tensor& vk = tape.value(kernel);
    const Tensor& vb = tape.value(bias);
    auto plan = make_plan(vx, vk, vb, spatial_rank);
    const std::size_t P = plan->positions;
    const std::size_t cin = plan->cin;
    const std::size_t cout = plan->cout;
    const std::size_t depth = plan->taps * cin;

    // Channel-major patches: patches[(tap*cin + c) * P + p] = x[source(tap, p), c].
    auto patches = std::make_shared<std::vector<double>>(depth * P);
    for (std::size_t tap = 0; tap < plan->taps; ++tap) {
        const std::uint32_t* src = plan->source.data() + tap * P;
        for (std::size_t c = 0; c < cin; ++c) {
            double* row = patches->data() + (tap * cin + c) * P;
            for (std::size_t p = 0; p < P; ++p) {
                row[p] = vx[src[p] * cin + c];
            }
        }
    }
    // Kernel is stored [taps*cin x cout]; the GEMM wants [cout x taps*cin].
    auto wt = std::make_shared<std::vector<double>>(cout * depth);
    for (std::size_t r = 0; r < depth; ++r) {
        for (std::size_t co = 0; co < cout; ++co) {
            (*wt)[co * depth + r] = vk[r * cout + co];
        }
    }
    std::vector<double> out_t(cout * P);
    for (std::size_t co = 0; co < cout; ++co) {
        std::fill(out_t.begin() + static_cast<long>(co * P), out_t.begin() + static_cast<long>((co + 1) * P), vb[co]);
    }
    kernels::gemm_nn(cout, P, depth, wt->data(), patches->data(), out_t.data());

    Shape out_shape = vx.shape();
    out_shape.back() = cout;
    Tensor out(out_shape);
    for (std::size_t p = 0; p < P; ++p) {
        for (std::size_t co = 0; co < cout; ++co) {
            out[p * cout + co] = out_t[co * P + p];
        }
    }

    return tape.record(std::move(out), {x, kernel, bias},
                       [x, kernel, bias, plan, patches, wt](Tape& t, const Tensor& g) {
                           const std::size_t P = plan->positions;
                           const std::size_t cin = plan->cin;
                           const std::size_t cout = plan->cout;
                           const std::size_t depth = plan->taps * cin;
                           std::vector<double> g_t(cout * P);
                           for (std::size_t p = 0; p < P; ++p) {
                               for (std::size_t co = 0; co < cout; ++co) {
                                   g_t[co * P + p] = g[p * cout + co];
                               }
                           }
                           if (t.requires_grad(bias)) {
                               Tensor& gb = t.grad_buffer(bias);
                               for (std::size_t co = 0; co < cout; ++co) {
                                   double s = 0.0;
                                   for (std::size_t p = 0; p < P; ++p) {
                                       s += g_t[co * P + p];
                                   }
                                   gb[co] += s;
                               }
                           }
                           if (t.requires_grad(kernel)) {
                               std::vector<double> gw_t(cout * depth, 0.0);
                               kernels::gemm_nt(cout, depth, P, g_t.data(), patches->data(), gw_t.data());
                               Tensor& gk = t.grad_buffer(kernel);
                               for (std::size_t r = 0; r < depth; ++r) {
                                   for (std::size_t co = 0; co < cout; ++co) {
                                       gk[r * cout + co] += gw_t[co * depth + r];
                                   }
                               }
                           }
                           if (t.requires_grad(x)) {
                               std::vector<double> gp(depth * P, 0.0);
                               kernels::gemm_tn(depth, P, cout, wt->data(), g_t.data(), gp.data());
                               Tensor& gx = t.grad_buffer(x);
                               for (std::size_t tap = 0; tap < plan->taps; ++tap) {
                                   const std::uint32_t* src = plan->source.data() + tap * P;
                                   for (std::size_t c = 0; c < cin; ++c) {
                                       const double* row = gp.data() + (tap * cin + c) * P;
                                       for (std::size_t p = 0; p < P; ++p) {
                                           gx[src[p] * cin + c] += row[p];
                                       }
                                   }
                               }
                           }
                       });
}

double sigmoid(double z)
{
    if (z >= 0.0) {
        return 1.0 / (1.0 + std::exp(-z));
    }
    const double e = std::exp(z);
    return e / (1.0 + e);
}

void check_quantizer(int bits, double temperature)
{
    if (bits < 1 || bits > 16) {
        throw ConfigError("soft_quantize: bits must be in [1, 16], got " + std::to_string(bits));
    }
    if (!(temperature > 0.0) || !std::isfinite(temperature)) {
        throw ConfigError("soft_quantize: temperature must be positive and finite");
    }
}

// Sigmoids further than this many slope units from x are saturated to 0/1;
// the neglected mass (< e^-45 per term) is below double resolution.
constexpr double kSaturation = 45.0;

// Range of boundaries b_i = -1 + i*step, i in [1, levels-1], evaluated
// explicitly; boundaries below `first` count as fully switched on.
struct ActiveRange {
    long first;
    long last;
};

ActiveRange active_boundaries(double x, double step, long levels, double temperature)
{
    const double reach = kSaturation / temperature;
    long first = static_cast<long>(std::ceil((x - reach + 1.0) / step));
    long last = static_cast<long>(std::floor((x + reach + 1.0) / step));
    first = std::clamp(first, 1L, levels);
    last = std::clamp(last, 0L, levels - 1);
    return {first, last};
}

}  // namespace

Var circular_conv2d(Tape& tape, Var x, Var kernel, Var bias)
{
    return circular_conv(tape, x, kernel, bias, 2);
}

Var circular_conv3d(Tape& tape, Var x, Var kernel, Var bias)
{
    return circular_conv(tape, x, kernel, bias, 3);
}

double soft_quantize_value(double x, int bits, double temperature)
{
    check_quantizer(bits, temperature);
    const long levels = 1L << bits;
    const double step = 2.0 / static_cast<double>(levels);
    const auto [first, last] = active_boundaries(x, step, levels, temperature);
    double count = static_cast<double>(first - 1);
    for (long i = first; i <= last; ++i) {
        count += sigmoid(temperature * (x - (-1.0 + static_cast<double>(i) * step)));
    }
    return -1.0 + 0.5 * step + step * count;
}

double soft_quantize_derivative(double x, int bits, double temperature)
{
    check_quantizer(bits, temperature);
    const long levels = 1L << bits;
    const double step = 2.0 / static_cast<double>(levels);
    const auto [first, last] = active_boundaries(x, step, levels, temperature);
    double acc = 0.0;
    for (long i = first; i <= last; ++i) {
        const double s = sigmoid(temperature * (x - (-1.0 + static_cast<double>(i) * step)));
        acc += s * (1.0 - s);
    }
    return step * temperature * acc;
}

Var soft_quantize(Tape& tape, Var x, int bits, double temperature)
{
    check_quantizer(bits, temperature);
    const Tensor& vx = tape.value(x);
    Tensor out(vx.shape());
    Tensor slope(vx.shape());
    for (std::size_t i = 0; i < vx.size(); ++i) {
        out[i] = soft_quantize_value(vx[i], bits, temperature);
        slope[i] = soft_quantize_derivative(vx[i], bits, temperature);
    }
    return tape.record(std::move(out), {x}, [x, slope = std::move(slope)](Tape& t, const Tensor& g) {
        Tensor& gx = t.grad_buffer(x);
        for (std::size_t i = 0; i < g.size(); ++i) {
            gx[i] += g[i] * slope[i];
        }
    });
}

Var max_abs(Tape& tape, Var x)
{
    const Tensor& vx = tape.value(x);
    std::size_t arg = 0;
    double best = -1.0;
    for (std::size_t i = 0; i < vx.size(); ++i) {
        if (std::abs(vx[i]) > best) {
            best = std::abs(vx[i]);
            arg = i;
        }
    }
    const double sign = vx[arg] < 0.0 ? -1.0 : 1.0;
    return tape.record(Tensor::scalar(best), {x}, [x, arg, sign](Tape& t, const Tensor& g) {
        t.grad_buffer(x)[arg] += sign * g[0];
    });
}

Var divide_by(Tape& tape, Var x, Var s)
{
    const Tensor& vs = tape.value(s);
    require_scalar(vs, "divide_by");
    if (vs[0] == 0.0) {
        throw UndefinedError("divide_by: division by zero");
    }
    const double inv = 1.0 / vs[0];
    Tensor out = tape.value(x);
    for (auto& v : out.data()) {
        v *= inv;
    }
    return tape.record(std::move(out), {x, s}, [x, s, inv](Tape& t, const Tensor& g) {
        if (t.requires_grad(x)) {
            kernels::axpy(g.size(), inv, g.ptr(), t.grad_buffer(x).ptr());
        }
        if (t.requires_grad(s)) {
            const Tensor& xv = t.value(x);
            t.grad_buffer(s)[0] -= kernels::dot(g.size(), g.ptr(), xv.ptr()) * inv * inv;
        }
    });
}

Var multiply_by(Tape& tape, Var x, Var s)
{
    const Tensor& vs = tape.value(s);
    require_scalar(vs, "multiply_by");
    const double factor = vs[0];
    Tensor out = tape.value(x);
    for (auto& v : out.data()) {
        v *= factor;
    }
    return tape.record(std::move(out), {x, s}, [x, s, factor](Tape& t, const Tensor& g) {
        if (t.requires_grad(x)) {
            kernels::axpy(g.size(), factor, g.ptr(), t.grad_buffer(x).ptr());
        }
        if (t.requires_grad(s)) {
            const Tensor& xv = t.value(x);
            t.grad_buffer(s)[0] += kernels::dot(g.size(), g.ptr(), xv.ptr());
        }
    });
}

namespace {

Eigen::MatrixXcd apply_op(const Eigen::MatrixXcd& m, ComplexOp op)
{
    switch (op) {
    case ComplexOp::none:
        return m;
    case ComplexOp::transpose:
        return m.transpose();
    case ComplexOp::conjugate:
        return m.conjugate();
    case ComplexOp::adjoint:
        return m.adjoint();
    }
    return m;
}

// Maps a gradient w.r.t. op(A) back to a gradient w.r.t. A.
Eigen::MatrixXcd undo_op(const Eigen::MatrixXcd& g, ComplexOp op)
{
    return apply_op(g, op);
}

void accumulate_complex(Tape& t, Var v, const Eigen::MatrixXcd& g)
{
    if (!t.requires_grad(v)) {
        return;
    }
    Tensor& buf = t.grad_buffer(v);
    const Tensor gt = complex_to_tensor(g);
    if (gt.size() != buf.size()) {
        throw DimensionError("complex gradient size mismatch");
    }
    kernels::axpy(gt.size(), 1.0, gt.ptr(), buf.ptr());
}

}  // namespace

Var complex_matmul(Tape& tape, Var a, Var b, ComplexOp op_a, ComplexOp op_b)
{
    require_complex(tape.value(a), "complex_matmul");
    require_complex(tape.value(b), "complex_matmul");
    const Eigen::MatrixXcd xa = apply_op(tensor_to_complex(tape.value(a)), op_a);
    const Eigen::MatrixXcd xb = apply_op(tensor_to_complex(tape.value(b)), op_b);
    if (xa.cols() != xb.rows()) {
        throw DimensionError("complex_matmul: inner dimensions " + std::to_string(xa.cols()) + " and " +
                             std::to_string(xb.rows()));
    }
    Eigen::MatrixXcd prod = xa * xb;
    return tape.record(complex_to_tensor(prod), {a, b}, [a, b, xa, xb, op_a, op_b](Tape& t, const Tensor& g) {
        const Eigen::MatrixXcd gc = tensor_to_complex(g);
        if (t.requires_grad(a)) {
            accumulate_complex(t, a, undo_op(gc * xb.adjoint(), op_a));
        }
        if (t.requires_grad(b)) {
            accumulate_complex(t, b, undo_op(xa.adjoint() * gc, op_b));
        }
    });
}

Var complex_solve(Tape& tape, Var m, Var rhs)
{
    require_complex(tape.value(m), "complex_solve");
    require_complex(tape.value(rhs), "complex_solve");
    const Eigen::MatrixXcd mat = tensor_to_complex(tape.value(m));
    const Eigen::MatrixXcd r = tensor_to_complex(tape.value(rhs));
    if (mat.rows() != mat.cols() || mat.rows() != r.rows()) {
        throw DimensionError("complex_solve: system " + shape_string(tape.value(m).shape()) + " with rhs " +
                             shape_string(tape.value(rhs).shape()));
    }
    Eigen::FullPivLU<Eigen::MatrixXcd> lu(mat);
    if (!lu.isInvertible()) {
        throw SingularityError("complex_solve: matrix is singular");
    }
    Eigen::MatrixXcd z = lu.solve(r);
    return tape.record(complex_to_tensor(z), {m, rhs}, [m, rhs, mat, z](Tape& t, const Tensor& g) {
        const Eigen::MatrixXcd gz = tensor_to_complex(g);
        const Eigen::MatrixXcd grhs = mat.adjoint().fullPivLu().solve(gz);
        accumulate_complex(t, rhs, grhs);
        accumulate_complex(t, m, -grhs * z.adjoint());
    });
}

Var normalize_columns(Tape& tape, Var t_var)
{
    const Tensor& vt = tape.value(t_var);
    require_complex(vt, "normalize_columns");
    const std::size_t n = vt.dim(0);
    const std::size_t l = vt.dim(1);
    std::vector<double> norms(l, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < l; ++j) {
            const std::size_t at = (i * l + j) * 2;
            norms[j] += vt[at] * vt[at] + vt[at + 1] * vt[at + 1];
        }
    }
    for (std::size_t j = 0; j < l; ++j) {
        if (norms[j] == 0.0) {
            throw UndefinedError("normalize_columns: column " + std::to_string(j) + " is zero");
        }
        norms[j] = std::sqrt(norms[j]);
    }
    Tensor out(vt.shape());
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < l; ++j) {
            const std::size_t at = (i * l + j) * 2;
            out[at] = vt[at] / norms[j];
            out[at + 1] = vt[at + 1] / norms[j];
        }
    }
    Tensor unit = out;
    return tape.record(std::move(out), {t_var},
                       [t_var, unit = std::move(unit), norms, n, l](Tape& t, const Tensor& g) {
                           std::vector<double> proj(l, 0.0);
                           for (std::size_t i = 0; i < n; ++i) {
                               for (std::size_t j = 0; j < l; ++j) {
                                   const std::size_t at = (i * l + j) * 2;
                                   proj[j] += unit[at] * g[at] + unit[at + 1] * g[at + 1];
                               }
                           }
                           Tensor& gt = t.grad_buffer(t_var);
                           for (std::size_t i = 0; i < n; ++i) {
                               for (std::size_t j = 0; j < l; ++j) {
                                   const std::size_t at = (i * l + j) * 2;
                                   gt[at] += (g[at] - unit[at] * proj[j]) / norms[j];
                                   gt[at + 1] += (g[at + 1] - unit[at + 1] * proj[j]) / norms[j];
                               }
                           }
                       });
}

Var complex_abs(Tape& tape, Var z)
{
    const Tensor& vz = tape.value(z);
    if (vz.rank() < 2 || vz.shape().back() != 2) {
        throw DimensionError("complex_abs: expected trailing axis of size 2, got " + shape_string(vz.shape()));
    }
    Shape shape(vz.shape().begin(), vz.shape().end() - 1);
    Tensor out(shape);
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = std::hypot(vz[2 * i], vz[2 * i + 1]);
    }
    Tensor mag = out;
    return tape.record(std::move(out), {z}, [z, mag = std::move(mag)](Tape& t, const Tensor& g) {
        const Tensor& zv = t.value(z);
        Tensor& gz = t.grad_buffer(z);
        for (std::size_t i = 0; i < mag.size(); ++i) {
            if (mag[i] > 0.0) {
                gz[2 * i] += g[i] * zv[2 * i] / mag[i];
                gz[2 * i + 1] += g[i] * zv[2 * i + 1] / mag[i];
            }
        }
    });
}

Var with_magnitude(Tape& tape, Var z, Var magnitude)
{
    const Tensor& vz = tape.value(z);
    const Tensor& vm = tape.value(magnitude);
    if (vz.rank() < 2 || vz.shape().back() != 2 || vm.size() * 2 != vz.size()) {
        throw DimensionError("with_magnitude: phase source " + shape_string(vz.shape()) + ", magnitude " +
                             shape_string(vm.shape()));
    }
    const std::size_t n = vm.size();
    Tensor unit(vz.shape());
    std::vector<double> radius(n);
    for (std::size_t i = 0; i < n; ++i) {
        radius[i] = std::hypot(vz[2 * i], vz[2 * i + 1]);
        if (radius[i] > 0.0) {
            unit[2 * i] = vz[2 * i] / radius[i];
            unit[2 * i + 1] = vz[2 * i + 1] / radius[i];
        } else {
            unit[2 * i] = 1.0;
            unit[2 * i + 1] = 0.0;
        }
    }
    Tensor out(vz.shape());
    for (std::size_t i = 0; i < n; ++i) {
        out[2 * i] = vm[i] * unit[2 * i];
        out[2 * i + 1] = vm[i] * unit[2 * i + 1];
    }
    return tape.record(std::move(out), {z, magnitude},
                       [z, magnitude, unit = std::move(unit), radius = std::move(radius), n](Tape& t,
                                                                                              const Tensor& g) {
                           const Tensor& mv = t.value(magnitude);
                           if (t.requires_grad(magnitude)) {
                               Tensor& gm = t.grad_buffer(magnitude);
                               for (std::size_t i = 0; i < n; ++i) {
                                   gm[i] += g[2 * i] * unit[2 * i] + g[2 * i + 1] * unit[2 * i + 1];
                               }
                           }
                           if (t.requires_grad(z)) {
                               Tensor& gz = t.grad_buffer(z);
                               for (std::size_t i = 0; i < n; ++i) {
                                   if (radius[i] == 0.0) {
                                       continue;
                                   }
                                   const double along = g[2 * i] * unit[2 * i] + g[2 * i + 1] * unit[2 * i + 1];
                                   const double f = mv[i] / radius[i];
                                   gz[2 * i] += f * (g[2 * i] - unit[2 * i] * along);
                                   gz[2 * i + 1] += f * (g[2 * i + 1] - unit[2 * i + 1] * along);
                               }
                           }
                       });
}

}  // namespace bsfb::nn
