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

// Paired uplink/downlink CSI from a geometric multipath model.
//
// Array convention: element (m, n) sits at horizontal index m in [0, N_H) and
// vertical index n in [0, N_V); the antenna vector index is m + N_H * n.
// Its response to a plane wave from (azimuth, elevation) is
//   exp(j 2 pi d / lambda * (m sin(az) cos(el) + n sin(el)))
// where d is the element spacing.

#include <complex>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace bsfb::channel {

struct UpaGeometry {
    std::size_t n_h = 8;
    std::size_t n_v = 4;
    // Element spacing in wavelengths of the reference (downlink) carrier.
    double spacing = 0.5;

    std::size_t n_b() const noexcept { return n_h * n_v; }
    void validate() const;
};

struct FddLinkConfig {
    double f_ul_hz = 5.1e9;
    double f_dl_hz = 5.3e9;
    std::size_t k_rbs = 8;
    // Informational; the RB width used for frequency offsets is their product.
    std::size_t subcarriers_per_rb = 12;
    double subcarrier_spacing_hz = 15e3;
    std::size_t n_f = 12;
    std::size_t n_o = 14;

    double rb_width_hz() const noexcept { return static_cast<double>(subcarriers_per_rb) * subcarrier_spacing_hz; }
    // Centre of RB k relative to the carrier.
    double rb_offset_hz(std::size_t k) const noexcept;
    void validate() const;
};

struct ScenarioConfig {
    std::string name = "outdoor-like";
    std::size_t path_count = 6;
    double angular_spread_deg = 5.0;
    double max_delay_spread_s = 1e-6;
    double los_power_ratio = 0.5;
    double cell_radius_m = 200.0;
    double bs_height_m = 20.0;
    // LOS azimuths are drawn in [-sector, sector]; every path angle is
    // clamped to that sector and to |elevation| <= 80 degrees.
    double sector_half_width_deg = 60.0;
    std::uint64_t seed = 1;

    // "outdoor-like" or "indoor-like"; anything else is a ConfigError.
    static ScenarioConfig preset(const std::string& name);
    void validate() const;
};

void to_json(nlohmann::json& j, const ScenarioConfig& s);
void from_json(const nlohmann::json& j, ScenarioConfig& s);

struct Path {
    double azimuth = 0.0;
    double elevation = 0.0;
    double delay_s = 0.0;
    double magnitude = 0.0;
    double ul_phase = 0.0;
    double dl_phase = 0.0;
    bool los = false;
};

using PathSet = std::vector<Path>;

enum class Side { ul, dl };

// One LOS path (when los_power_ratio > 0) plus scattered paths around it.
// Magnitudes are shared by both links; phases are drawn independently.
PathSet sample_paths(std::mt19937_64& rng, const ScenarioConfig& scenario);

// `wavelength` is expressed in units of the reference wavelength at which
// geometry.spacing is defined, so 1.0 is the downlink carrier.
Eigen::VectorXcd steering_vector(const UpaGeometry& geometry, double azimuth, double elevation,
                                 double wavelength = 1.0);

// N_b x K matrix whose column k is the narrowband response of RB k.
Eigen::MatrixXcd synthesize_csi(const PathSet& paths, const UpaGeometry& geometry, const FddLinkConfig& link,
                                Side side);

struct ChannelSample {
    Eigen::MatrixXcd h_dl;
    Eigen::MatrixXcd h_ul;
    std::uint64_t ue_id = 0;
    std::string scenario;
};

// Sample `index` of the stream seeded by scenario.seed, scaled so that the
// mean per-RB downlink power ||h_dl[:, k]||^2 equals one (the uplink matrix
// gets the same factor).
ChannelSample generate_sample(const ScenarioConfig& scenario, const UpaGeometry& geometry,
                              const FddLinkConfig& link, std::uint64_t index);

std::vector<ChannelSample> generate_dataset(const ScenarioConfig& scenario, const UpaGeometry& geometry,
                                            const FddLinkConfig& link, std::size_t count,
                                            std::size_t threads = 1);

struct Dataset {
    UpaGeometry geometry;
    std::size_t k_rbs = 0;
    ScenarioConfig scenario;
    std::vector<ChannelSample> samples;
};

inline constexpr std::uint32_t kDatasetVersion = 1;

// "BSFD" file: magic, u32 version, u32 N_H, u32 N_V, u32 K, u64 count,
// u32 JSON length + scenario JSON, then per sample interleaved f64 re/im of
// h_dl followed by h_ul, each column-major.
void write_dataset(std::ostream& out, const Dataset& data);
Dataset read_dataset(std::istream& in);
void write_dataset(const std::filesystem::path& path, const Dataset& data);
Dataset read_dataset(const std::filesystem::path& path);

}  // namespace bsfb::channel
