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

#include "bsfb/numerics/checkpoint.hpp"

#include <fstream>

#include "bsfb/binio.hpp"

namespace bsfb::nn {

void write_checkpoint(std::ostream& out, const ParameterSet& params)
{
    io::Writer w(out);
    w.bytes("BSNN");
    w.u32(kCheckpointVersion);
    w.u32(static_cast<std::uint32_t>(params.size()));
    for (const auto& p : params) {
        w.u32(static_cast<std::uint32_t>(p.name.size()));
        w.bytes(p.name);
        w.u32(static_cast<std::uint32_t>(p.value.rank()));
        for (auto d : p.value.shape()) {
            w.u32(static_cast<std::uint32_t>(d));
        }
        w.f64s(p.value.ptr(), p.value.size());
    }
}

ParameterSet read_checkpoint(std::istream& in)
{
    io::Reader r(in, "checkpoint");
    r.expect_magic("BSNN");
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion) {
        throw FormatError("checkpoint: unsupported version " + std::to_string(version));
    }
    const std::uint32_t count = r.u32();
    ParameterSet params;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t name_len = r.u32();
        if (name_len > 4096) {
            throw FormatError("checkpoint: implausible name length " + std::to_string(name_len));
        }
        std::string name = r.bytes(name_len);
        const std::uint32_t rank = r.u32();
        if (rank == 0 || rank > 8) {
            throw FormatError("checkpoint: tensor '" + name + "' has rank " + std::to_string(rank));
        }
        Shape shape(rank);
        std::size_t total = 1;
        for (auto& d : shape) {
            d = r.u32();
            if (d == 0) {
                throw FormatError("checkpoint: tensor '" + name + "' has a zero dimension");
            }
            total *= d;
            if (total > (std::size_t{1} << 32)) {
                throw FormatError("checkpoint: tensor '" + name + "' is implausibly large");
            }
        }
        std::vector<double> data(total);
        r.f64s(data.data(), total);
        params.add(std::move(name), Tensor(std::move(shape), std::move(data)));
    }
    return params;
}

void save_checkpoint(const std::filesystem::path& path, const ParameterSet& params)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open '" + path.string() + "' for writing");
    }
    write_checkpoint(out, params);
}

ParameterSet load_checkpoint(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open '" + path.string() + "'");
    }
    return read_checkpoint(in);
}

}  // namespace bsfb::nn
