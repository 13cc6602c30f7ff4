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

#include "bsfb/channel/channel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "bsfb/binio.hpp"
#include "bsfb/errors.hpp"
#include "bsfb/parallel.hpp"
#include "bsfb/rng.hpp"

namespace bsfb::channel {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kDeg = kPi / 180.0;
constexpr double kUeHeight = 1.5;
constexpr double kMaxElevation = 80.0 * kDeg;
constexpr std::uint64_t kPathStream = 0x50415448;  // "PATH"

}  // namespace

void UpaGeometry::validate() const
{
    if (n_h < 1 || n_v < 1) {
        throw ConfigError("array needs at least one element per axis");
    }
    if (!(spacing > 0.0) || !std::isfinite(spacing)) {
        throw ConfigError("element spacing must be positive");
    }
}

double FddLinkConfig::rb_offset_hz(std::size_t k) const noexcept
{
    return (static_cast<double>(k) - 0.5 * static_cast<double>(k_rbs - 1)) * rb_width_hz();
}

void FddLinkConfig::validate() const
{
    if (k_rbs < 1) {
        throw ConfigError("link needs at least one resource block");
    }
    if (!(f_ul_hz > 0.0) || !(f_dl_hz > 0.0)) {
        throw ConfigError("carrier frequencies must be positive");
    }
    if (f_ul_hz == f_dl_hz) {
        throw ConfigError("FDD link needs distinct uplink and downlink carriers");
    }
}

ScenarioConfig ScenarioConfig::preset(const std::string& name)
{
    ScenarioConfig s;
    if (name == "outdoor-like") {
        return s;
    }
    if (name == "indoor-like") {
        s.name = name;
        s.path_count = 24;
        s.angular_spread_deg = 40.0;
        s.max_delay_spread_s = 100e-9;
        s.los_power_ratio = 0.2;
        s.cell_radius_m = 30.0;
        s.bs_height_m = 3.0;
        return s;
    }
    throw ConfigError("unknown scenario preset '" + name + "' (expected outdoor-like or indoor-like)");
}

void ScenarioConfig::validate() const
{
    if (path_count < 1) {
        throw ConfigError("scenario needs at least one path");
    }
    if (!(angular_spread_deg >= 0.0) || !(max_delay_spread_s >= 0.0)) {
        throw ConfigError("angular and delay spreads must be nonnegative");
    }
    if (!(los_power_ratio >= 0.0 && los_power_ratio <= 1.0)) {
        throw ConfigError("LOS power ratio must lie in [0, 1]");
    }
    if (!(cell_radius_m > 0.0) || !(bs_height_m > 0.0)) {
        throw ConfigError("cell radius and BS height must be positive");
    }
    if (!(sector_half_width_deg > 0.0 && sector_half_width_deg <= 90.0)) {
        throw ConfigError("sector half-width must lie in (0, 90] degrees");
    }
    if (los_power_ratio == 1.0 && path_count > 1) {
        throw ConfigError("LOS power ratio 1 leaves no power for scattered paths");
    }
}

void to_json(nlohmann::json& j, const ScenarioConfig& s)
{
    j = nlohmann::json{{"name", s.name},
                       {"path_count", s.path_count},
                       {"angular_spread_deg", s.angular_spread_deg},
                       {"max_delay_spread_s", s.max_delay_spread_s},
                       {"los_power_ratio", s.los_power_ratio},
                       {"cell_radius_m", s.cell_radius_m},
                       {"bs_height_m", s.bs_height_m},
                       {"sector_half_width_deg", s.sector_half_width_deg},
                       {"seed", s.seed}};
}

void from_json(const nlohmann::json& j, ScenarioConfig& s)
{
    s = ScenarioConfig{};
    j.at("name").get_to(s.name);
    j.at("path_count").get_to(s.path_count);
    j.at("angular_spread_deg").get_to(s.angular_spread_deg);
    j.at("max_delay_spread_s").get_to(s.max_delay_spread_s);
    j.at("los_power_ratio").get_to(s.los_power_ratio);
    j.at("cell_radius_m").get_to(s.cell_radius_m);
    j.at("bs_height_m").get_to(s.bs_height_m);
    j.at("sector_half_width_deg").get_to(s.sector_half_width_deg);
    j.at("seed").get_to(s.seed);
}

PathSet sample_paths(std::mt19937_64& rng, const ScenarioConfig& scenario)
{
    scenario.validate();
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const double sector = scenario.sector_half_width_deg * kDeg;
    const double spread = scenario.angular_spread_deg * kDeg;

    // UE drop: uniform over the sector area, at least 10 m from the mast.
    const double r_min = std::min(10.0, 0.5 * scenario.cell_radius_m);
    const double r = std::sqrt(r_min * r_min + unit(rng) * (scenario.cell_radius_m * scenario.cell_radius_m - r_min * r_min));
    const double los_az = (2.0 * unit(rng) - 1.0) * sector;
    const double los_el = -std::atan2(std::max(scenario.bs_height_m - kUeHeight, 0.0), r);

    const bool has_los = scenario.los_power_ratio > 0.0;
    const std::size_t scattered = has_los ? scenario.path_count - 1 : scenario.path_count;
    const double tau = scenario.max_delay_spread_s / 3.0;

    PathSet paths;
    paths.reserve(scenario.path_count);
    if (has_los) {
        Path p;
        p.azimuth = los_az;
        p.elevation = los_el;
        p.los = true;
        paths.push_back(p);
    }
    std::vector<double> weights;
    for (std::size_t i = 0; i < scattered; ++i) {
        Path p;
        p.azimuth = std::clamp(los_az + spread * gauss(rng), -sector, sector);
        p.elevation = std::clamp(los_el + spread * gauss(rng), -kMaxElevation, kMaxElevation);
        double delay = 0.0;
        double weight = 1.0;
        if (tau > 0.0) {
            delay = std::min(-tau * std::log(1.0 - unit(rng)), scenario.max_delay_spread_s);
            weight = std::exp(-delay / tau);
        }
        p.delay_s = delay;
        weights.push_back(weight);
        paths.push_back(p);
    }

    const double scattered_power = has_los ? 1.0 - scenario.los_power_ratio : 1.0;
    double weight_sum = 0.0;
    for (double w : weights) {
        weight_sum += w;
    }
    std::size_t wi = 0;
    for (auto& p : paths) {
        double power = 0.0;
        if (p.los) {
            power = scattered == 0 ? 1.0 : scenario.los_power_ratio;
        } else {
            power = scattered_power * weights[wi++] / weight_sum;
        }
        p.magnitude = std::sqrt(power);
        p.ul_phase = 2.0 * kPi * unit(rng);
        p.dl_phase = 2.0 * kPi * unit(rng);
    }
    return paths;
}

Eigen::VectorXcd steering_vector(const UpaGeometry& geometry, double azimuth, double elevation, double wavelength)
{
    geometry.validate();
    if (!(wavelength > 0.0)) {
        throw ConfigError("wavelength must be positive");
    }
    const double k = 2.0 * kPi * geometry.spacing / wavelength;
    const double u = std::sin(azimuth) * std::cos(elevation);
    const double v = std::sin(elevation);
    Eigen::VectorXcd a(static_cast<Eigen::Index>(geometry.n_b()));
    for (std::size_t n = 0; n < geometry.n_v; ++n) {
        for (std::size_t m = 0; m < geometry.n_h; ++m) {
            const double phase = k * (static_cast<double>(m) * u + static_cast<double>(n) * v);
            a(static_cast<Eigen::Index>(m + geometry.n_h * n)) = std::polar(1.0, phase);
        }
    }
    return a;
}

Eigen::MatrixXcd synthesize_csi(const PathSet& paths, const UpaGeometry& geometry, const FddLinkConfig& link,
                                Side side)
{
    link.validate();
    const double carrier = side == Side::dl ? link.f_dl_hz : link.f_ul_hz;
    const double wavelength = link.f_dl_hz / carrier;
    Eigen::MatrixXcd h = Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(geometry.n_b()),
                                                static_cast<Eigen::Index>(link.k_rbs));
    for (const auto& p : paths) {
        const Eigen::VectorXcd a = steering_vector(geometry, p.azimuth, p.elevation, wavelength);
        const double phase = side == Side::dl ? p.dl_phase : p.ul_phase;
        for (std::size_t k = 0; k < link.k_rbs; ++k) {
            const double rot = phase - 2.0 * kPi * link.rb_offset_hz(k) * p.delay_s;
            h.col(static_cast<Eigen::Index>(k)) += std::polar(p.magnitude, rot) * a;
        }
    }
    return h;
}

ChannelSample generate_sample(const ScenarioConfig& scenario, const UpaGeometry& geometry,
                              const FddLinkConfig& link, std::uint64_t index)
{
    auto rng = derive_rng(scenario.seed, kPathStream, index);
    const PathSet paths = sample_paths(rng, scenario);
    ChannelSample s;
    s.h_dl = synthesize_csi(paths, geometry, link, Side::dl);
    s.h_ul = synthesize_csi(paths, geometry, link, Side::ul);
    const double power = s.h_dl.squaredNorm() / static_cast<double>(link.k_rbs);
    if (!(power > 0.0)) {
        throw UndefinedError("generated downlink channel has zero power");
    }
    const double g = 1.0 / std::sqrt(power);
    s.h_dl *= g;
    s.h_ul *= g;
    s.ue_id = index;
    s.scenario = scenario.name;
    return s;
}

std::vector<ChannelSample> generate_dataset(const ScenarioConfig& scenario, const UpaGeometry& geometry,
                                            const FddLinkConfig& link, std::size_t count, std::size_t threads)
{
    scenario.validate();
    geometry.validate();
    link.validate();
    std::vector<ChannelSample> out(count);
    parallel_chunks(count, threads, [&](std::size_t, std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            out[i] = generate_sample(scenario, geometry, link, i);
        }
    });
    return out;
}

namespace {

void write_matrix(io::Writer& w, const Eigen::MatrixXcd& m)
{
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            w.f64(m(r, c).real());
            w.f64(m(r, c).imag());
        }
    }
}

Eigen::MatrixXcd read_matrix(io::Reader& rd, std::size_t rows, std::size_t cols)
{
    std::vector<double> buf(2 * rows * cols);
    rd.f64s(buf.data(), buf.size());
    Eigen::MatrixXcd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    std::size_t at = 0;
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            m(r, c) = {buf[at], buf[at + 1]};
            at += 2;
        }
    }
    return m;
}

}  // namespace

void write_dataset(std::ostream& out, const Dataset& data)
{
    const std::size_t n_b = data.geometry.n_b();
    for (const auto& s : data.samples) {
        if (static_cast<std::size_t>(s.h_dl.rows()) != n_b || static_cast<std::size_t>(s.h_dl.cols()) != data.k_rbs ||
            s.h_ul.rows() != s.h_dl.rows() || s.h_ul.cols() != s.h_dl.cols()) {
            throw DimensionError("dataset sample does not match the header geometry");
        }
    }
    io::Writer w(out);
    w.bytes("BSFD");
    w.u32(kDatasetVersion);
    w.u32(static_cast<std::uint32_t>(data.geometry.n_h));
    w.u32(static_cast<std::uint32_t>(data.geometry.n_v));
    w.u32(static_cast<std::uint32_t>(data.k_rbs));
    w.u64(data.samples.size());
    nlohmann::json meta = data.scenario;
    meta["spacing"] = data.geometry.spacing;
    const std::string blob = meta.dump();
    w.u32(static_cast<std::uint32_t>(blob.size()));
    w.bytes(blob);
    for (const auto& s : data.samples) {
        write_matrix(w, s.h_dl);
        write_matrix(w, s.h_ul);
    }
}

Dataset read_dataset(std::istream& in)
{
    io::Reader r(in, "dataset");
    r.expect_magic("BSFD");
    const std::uint32_t version = r.u32();
    if (version != kDatasetVersion) {
        throw FormatError("dataset: unsupported version " + std::to_string(version));
    }
    Dataset d;
    d.geometry.n_h = r.u32();
    d.geometry.n_v = r.u32();
    d.k_rbs = r.u32();
    const std::uint64_t count = r.u64();
    const std::uint32_t blob_len = r.u32();
    if (d.geometry.n_h == 0 || d.geometry.n_v == 0 || d.k_rbs == 0 || blob_len > (1u << 20)) {
        throw FormatError("dataset: corrupt header");
    }
    try {
        const nlohmann::json meta = nlohmann::json::parse(r.bytes(blob_len));
        d.scenario = meta.get<ScenarioConfig>();
        d.geometry.spacing = meta.at("spacing").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("dataset: bad scenario header: ") + e.what());
    }
    const std::size_t n_b = d.geometry.n_b();
    for (std::uint64_t i = 0; i < count; ++i) {
        ChannelSample s;
        s.h_dl = read_matrix(r, n_b, d.k_rbs);
        s.h_ul = read_matrix(r, n_b, d.k_rbs);
        s.ue_id = i;
        s.scenario = d.scenario.name;
        d.samples.push_back(std::move(s));
    }
    return d;
}

void write_dataset(const std::filesystem::path& path, const Dataset& data)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open '" + path.string() + "' for writing");
    }
    write_dataset(out, data);
}

Dataset read_dataset(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open '" + path.string() + "'");
    }
    return read_dataset(in);
}

}  // namespace bsfb::channel
