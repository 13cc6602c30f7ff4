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

#include <atomic>
#include <cstdlib>
#include <string>

#include "bsfb/errors.hpp"
#include "bsfb/numerics/kernels.hpp"

namespace bsfb::nn::kernels {

#if defined(BSFB_HAVE_AVX2)
namespace detail {
const KernelTable& avx2_table_impl();
}
#endif

namespace {

bool cpu_has_avx2()
{
#if defined(BSFB_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

const KernelTable* select_default()
{
    const char* env = std::getenv("BSFB_SIMD");
    if (env != nullptr && std::string(env) == "scalar") {
        return &scalar_table();
    }
    if (const KernelTable* t = avx2_table()) {
        return t;
    }
    return &scalar_table();
}

std::atomic<const KernelTable*>& current()
{
    static std::atomic<const KernelTable*> table{select_default()};
    return table;
}

}  // namespace

const KernelTable* avx2_table()
{
#if defined(BSFB_HAVE_AVX2)
    static const bool supported = cpu_has_avx2();
    return supported ? &detail::avx2_table_impl() : nullptr;
#else
    return nullptr;
#endif
}

const KernelTable& active()
{
    return *current().load(std::memory_order_relaxed);
}

Isa active_isa()
{
    return active().isa;
}

std::string_view isa_name(Isa isa)
{
    switch (isa) {
    case Isa::scalar:
        return "scalar";
    case Isa::avx2:
        return "avx2";
    }
    return "unknown";
}

void force_isa(Isa isa)
{
    if (isa == Isa::scalar) {
        current().store(&scalar_table());
        return;
    }
    const KernelTable* t = avx2_table();
    if (t == nullptr) {
        throw ConfigError("AVX2 kernels are not available on this build or CPU");
    }
    current().store(t);
}

}  // namespace bsfb::nn::kernels
