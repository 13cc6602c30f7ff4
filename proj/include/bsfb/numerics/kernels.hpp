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

// Arithmetic inner loops shared by the layer implementations.
//
// Every kernel exists as a scalar reference and, on x86-64, as an AVX2+FMA
// variant. The variant is picked once at startup from CPUID; the environment
// variable BSFB_SIMD=scalar forces the reference path. All matrices are
// row-major and contiguous.

#include <cstddef>
#include <string_view>

namespace bsfb::nn::kernels {

enum class Isa { scalar, avx2 };

struct KernelTable {
    Isa isa;
    // sum_i x[i] * y[i]
    double (*dot)(std::size_t n, const double* x, const double* y);
    // y[i] += a * x[i]
    void (*axpy)(std::size_t n, double a, const double* x, double* y);
    // C[MxN] += A[MxK] * B[KxN]
    void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c);
    // C[MxN] += A^T * B, A stored KxM
    void (*gemm_tn)(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c);
    // C[MxN] += A * B^T, B stored NxK
    void (*gemm_nt)(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c);
};

const KernelTable& scalar_table();

// nullptr when the binary was built without AVX2 support or the CPU lacks it.
const KernelTable* avx2_table();

const KernelTable& active();
Isa active_isa();
std::string_view isa_name(Isa isa);

// Test hook: pins the dispatch to one variant. Throws ConfigError if the
// requested variant is unavailable.
void force_isa(Isa isa);

inline double dot(std::size_t n, const double* x, const double* y) { return active().dot(n, x, y); }
inline void axpy(std::size_t n, double a, const double* x, double* y) { active().axpy(n, a, x, y); }
inline void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c)
{
    active().gemm_nn(m, n, k, a, b, c);
}
inline void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c)
{
    active().gemm_tn(m, n, k, a, b, c);
}
inline void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c)
{
    active().gemm_nt(m, n, k, a, b, c);
}

}  // namespace bsfb::nn::kernels
