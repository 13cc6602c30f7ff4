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

// Little-endian binary primitives shared by the checkpoint, dataset and
// feedback formats. Readers throw FormatError on truncation.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "bsfb/errors.hpp"

namespace bsfb::io {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

class Writer {
public:
    explicit Writer(std::ostream& out) : out_(out) {}

    void u8(std::uint8_t v) { raw(&v, 1); }
    void u32(std::uint32_t v) { raw(&v, sizeof v); }
    void u64(std::uint64_t v) { raw(&v, sizeof v); }
    void f64(double v) { raw(&v, sizeof v); }
    void bytes(const std::string& s) { raw(s.data(), s.size()); }
    void f64s(const double* v, std::size_t n) { raw(v, n * sizeof(double)); }

    void raw(const void* p, std::size_t n)
    {
        out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
        if (!out_) {
            throw IoError("write failed");
        }
    }

private:
    std::ostream& out_;
};

class Reader {
public:
    Reader(std::istream& in, std::string what) : in_(in), what_(std::move(what)) {}

    std::uint8_t u8() { return pod<std::uint8_t>(); }
    std::uint32_t u32() { return pod<std::uint32_t>(); }
    std::uint64_t u64() { return pod<std::uint64_t>(); }
    double f64() { return pod<double>(); }

    std::string bytes(std::size_t n)
    {
        std::string s(n, '\0');
        raw(s.data(), n);
        return s;
    }

    void f64s(double* v, std::size_t n) { raw(v, n * sizeof(double)); }

    void raw(void* p, std::size_t n)
    {
        in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n) {
            throw FormatError(what_ + ": file is truncated");
        }
    }

    void expect_magic(const char (&magic)[5])
    {
        if (bytes(4) != std::string(magic, 4)) {
            throw FormatError(what_ + ": bad magic, expected \"" + std::string(magic, 4) + "\"");
        }
    }

    bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

private:
    template <typename T>
    T pod()
    {
        T v{};
        raw(&v, sizeof v);
        return v;
    }

    std::istream& in_;
    std::string what_;
};

}  // namespace bsfb::io
