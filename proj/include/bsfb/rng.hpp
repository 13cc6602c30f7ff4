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

// Random-stream derivation shared by every module: one 64-bit base seed is
// expanded with splitmix64 into independent per-item streams.

#include <cstdint>
#include <random>

namespace bsfb {

inline std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Stream for item `index` of the purpose tagged `stream`.
inline std::mt19937_64 derive_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0)
{
    return std::mt19937_64(splitmix64(splitmix64(seed ^ splitmix64(stream)) + index));
}

}  // namespace bsfb
