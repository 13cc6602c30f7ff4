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

// Compiled with -mavx2 -mfma. Nothing in this file may run before the
// dispatcher has confirmed CPU support.

#include <immintrin.h>

#include "bsfb/numerics/kernels.hpp"

namespace bsfb::nn::kernels::detail {

namespace {

inline double hsum(__m256d v)
{
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d sw = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, sw));
}

double dot_avx2(std::size_t n, const double* x, const double* y)
{
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    __m256d acc2 = _mm256_setzero_pd();
    __m256d acc3 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 16 <= n; i += 16) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
        acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), acc1);
        acc2 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 8), _mm256_loadu_pd(y + i + 8), acc2);
        acc3 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 12), _mm256_loadu_pd(y + i + 12), acc3);
    }
    for (; i + 4 <= n; i += 4) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
    }
    double acc = hsum(_mm256_add_pd(_mm256_add_pd(acc0, acc1), _mm256_add_pd(acc2, acc3)));
    for (; i < n; ++i) {
        acc += x[i] * y[i];
    }
    return acc;
}

void axpy_avx2(std::size_t n, double a, const double* x, double* y)
{
    const __m256d va = _mm256_set1_pd(a);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
        _mm256_storeu_pd(y + i + 4, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4)));
    }
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    }
    for (; i < n; ++i) {
        y[i] += a * x[i];
    }
}

// crow[0:n] += a0*b0 + a1*b1 + a2*b2 + a3*b3, one pass over crow.
inline void axpy4(std::size_t n, const double* coef, const double* b0, const double* b1, const double* b2,
                  const double* b3, double* crow)
{
    const __m256d v0 = _mm256_set1_pd(coef[0]);
    const __m256d v1 = _mm256_set1_pd(coef[1]);
    const __m256d v2 = _mm256_set1_pd(coef[2]);
    const __m256d v3 = _mm256_set1_pd(coef[3]);
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) {
        __m256d c = _mm256_loadu_pd(crow + j);
        c = _mm256_fmadd_pd(v0, _mm256_loadu_pd(b0 + j), c);
        c = _mm256_fmadd_pd(v1, _mm256_loadu_pd(b1 + j), c);
        c = _mm256_fmadd_pd(v2, _mm256_loadu_pd(b2 + j), c);
        c = _mm256_fmadd_pd(v3, _mm256_loadu_pd(b3 + j), c);
        _mm256_storeu_pd(crow + j, c);
    }
    for (; j < n; ++j) {
        crow[j] += coef[0] * b0[j] + coef[1] * b1[j] + coef[2] * b2[j] + coef[3] * b3[j];
    }
}

void gemm_nn_avx2(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c)
{
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        const double* arow = a + i * k;
        std::size_t p = 0;
        for (; p + 4 <= k; p += 4) {
            axpy4(n, arow + p, b + p * n, b + (p + 1) * n, b + (p + 2) * n, b + (p + 3) * n, crow);
        }
        for (; p < k; ++p) {
            axpy_avx2(n, arow[p], b + p * n, crow);
        }
    }
}

void gemm_tn_avx2(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c)
{
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        std::size_t p = 0;
        for (; p + 4 <= k; p += 4) {
            const double coef[4] = {a[p * m + i], a[(p + 1) * m + i], a[(p + 2) * m + i], a[(p + 3) * m + i]};
            axpy4(n, coef, b + p * n, b + (p + 1) * n, b + (p + 2) * n, b + (p + 3) * n, crow);
        }
        for (; p < k; ++p) {
            axpy_avx2(n, a[p * m + i], b + p * n, crow);
        }
    }
}

void gemm_nt_avx2(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c)
{
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            c[i * n + j] += dot_avx2(k, a + i * k, b + j * k);
        }
    }
}

}  // namespace

const KernelTable& avx2_table_impl()
{
    static const KernelTable table{Isa::avx2, dot_avx2, axpy_avx2, gemm_nn_avx2, gemm_tn_avx2, gemm_nt_avx2};
    return table;
}

}  // namespace bsfb::nn::kernels::detail
