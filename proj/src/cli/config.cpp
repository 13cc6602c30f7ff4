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
#include <cmath>
#include <fstream>
#include <set>

#include "bsfb/cli/cli.hpp"
#include "bsfb/errors.hpp"
#include "bsfb/rng.hpp"

namespace bsfb::cli {

namespace {

using nlohmann::json;

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where)
{
    if (!j.is_object()) {
        throw ConfigError(where + " must be a JSON object");
    }
    for (const auto& [key, value] : j.items()) {
        if (allowed.count(key) == 0) {
            throw ConfigError("unknown key '" + key + "' in " + where);
        }
    }
}

template <typename T>
void read_if(const json& j, const char* key, T& dst, const std::string& where)
{
    auto it = j.find(key);
    if (it == j.end()) {
        return;
    }
    try {
        dst = it->get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(where + "." + key + ": " + e.what());
    }
}

template <typename T>
void require_nonempty(const std::vector<T>& v, const std::string& what)
{
    if (v.empty()) {
        throw ConfigError(what + " must not be empty");
    }
}

}  // namespace

std::uint64_t stream_seed(std::uint64_t seed, const std::string& label)
{
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : label) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return splitmix64(seed ^ h);
}

void ExperimentConfig::validate() const
{
    if (version != kConfigVersion) {
        throw ConfigError("unsupported config version " + std::to_string(version) + " (expected " +
                          std::to_string(kConfigVersion) + ")");
    }
    require_nonempty(scenarios, "scenarios");
    for (const auto& s : scenarios) {
        channel::ScenarioConfig::preset(s);
    }
    geometry.validate();
    link.validate();
    if (samples == 0) {
        throw ConfigError("samples must be positive");
    }
    if (models.empty() && baselines.empty()) {
        throw ConfigError("select at least one model or baseline");
    }
    for (const auto& m : models) {
        models::parse_model_kind(m);
    }
    for (const auto& b : baselines) {
        models::parse_baseline(b);
    }
    require_nonempty(grid.l_values, "grid.l");
    require_nonempty(grid.fr, "grid.fr");
    require_nonempty(grid.br, "grid.br");
    require_nonempty(grid.cr, "grid.cr");
    require_nonempty(grid.n_ue, "grid.n_ue");
    for (auto l : grid.l_values) {
        if (l == 0 || l > geometry.n_b()) {
            throw ConfigError("grid.l entries must lie in [1, N_b]");
        }
    }
    for (auto n : grid.n_ue) {
        if (n == 0) {
            throw ConfigError("grid.n_ue entries must be positive");
        }
    }
    if (rbs_per_sample == 0 || rbs_per_sample > link.k_rbs) {
        throw ConfigError("rbs_per_sample must lie in [1, K]");
    }
    if (bits < 1 || bits > 16) {
        throw ConfigError("bits must lie in [1, 16]");
    }
    if (!(noise_std >= 0.0)) {
        throw ConfigError("noise_std must be nonnegative");
    }
    if (threads == 0) {
        throw ConfigError("threads must be positive");
    }
    if (out.empty()) {
        throw ConfigError("output directory must not be empty");
    }
    plan_cells(*this);
}

json ExperimentConfig::to_json() const
{
    return json{{"version", version},
                {"scenarios", scenarios},
                {"geometry", {{"n_h", geometry.n_h}, {"n_v", geometry.n_v}, {"spacing", geometry.spacing}}},
                {"link",
                 {{"f_ul_hz", link.f_ul_hz},
                  {"f_dl_hz", link.f_dl_hz},
                  {"k_rbs", link.k_rbs},
                  {"subcarriers_per_rb", link.subcarriers_per_rb},
                  {"subcarrier_spacing_hz", link.subcarrier_spacing_hz}}},
                {"samples", samples},
                {"grid", {{"l", grid.l_values}, {"fr", grid.fr}, {"br", grid.br}, {"cr", grid.cr}, {"n_ue", grid.n_ue}}},
                {"models", models},
                {"baselines", baselines},
                {"train", train.to_json()},
                {"rbs_per_sample", rbs_per_sample},
                {"bits", bits},
                {"noise_std", noise_std},
                {"record_wall_time", record_wall_time},
                {"save_estimates", save_estimates},
                {"out", out.string()},
                {"seed", seed},
                {"threads", threads}};
}

ExperimentConfig ExperimentConfig::from_json(const json& j)
{
    check_keys(j,
               {"version", "scenarios", "geometry", "link", "samples", "grid", "models", "baselines", "train",
                "rbs_per_sample", "bits", "noise_std", "record_wall_time", "save_estimates", "out", "seed", "threads"},
               "config");
    if (!j.contains("version")) {
        throw ConfigError("config is missing its 'version' field");
    }
    ExperimentConfig c;
    read_if(j, "version", c.version, "config");
    if (c.version != kConfigVersion) {
        throw ConfigError("unsupported config version " + std::to_string(c.version));
    }
    read_if(j, "scenarios", c.scenarios, "config");
    if (auto it = j.find("geometry"); it != j.end()) {
        check_keys(*it, {"n_h", "n_v", "spacing"}, "geometry");
        read_if(*it, "n_h", c.geometry.n_h, "geometry");
        read_if(*it, "n_v", c.geometry.n_v, "geometry");
        read_if(*it, "spacing", c.geometry.spacing, "geometry");
    }
    if (auto it = j.find("link"); it != j.end()) {
        check_keys(*it, {"f_ul_hz", "f_dl_hz", "k_rbs", "subcarriers_per_rb", "subcarrier_spacing_hz"}, "link");
        read_if(*it, "f_ul_hz", c.link.f_ul_hz, "link");
        read_if(*it, "f_dl_hz", c.link.f_dl_hz, "link");
        read_if(*it, "k_rbs", c.link.k_rbs, "link");
        read_if(*it, "subcarriers_per_rb", c.link.subcarriers_per_rb, "link");
        read_if(*it, "subcarrier_spacing_hz", c.link.subcarrier_spacing_hz, "link");
    }
    read_if(j, "samples", c.samples, "config");
    if (auto it = j.find("grid"); it != j.end()) {
        check_keys(*it, {"l", "fr", "br", "cr", "n_ue"}, "grid");
        read_if(*it, "l", c.grid.l_values, "grid");
        read_if(*it, "fr", c.grid.fr, "grid");
        read_if(*it, "br", c.grid.br, "grid");
        read_if(*it, "cr", c.grid.cr, "grid");
        read_if(*it, "n_ue", c.grid.n_ue, "grid");
    }
    read_if(j, "models", c.models, "config");
    read_if(j, "baselines", c.baselines, "config");
    if (auto it = j.find("train"); it != j.end()) {
        c.train = models::TrainConfig::from_json(*it);
    }
    read_if(j, "rbs_per_sample", c.rbs_per_sample, "config");
    read_if(j, "bits", c.bits, "config");
    read_if(j, "noise_std", c.noise_std, "config");
    read_if(j, "record_wall_time", c.record_wall_time, "config");
    read_if(j, "save_estimates", c.save_estimates, "config");
    std::string out = c.out.string();
    read_if(j, "out", out, "config");
    c.out = out;
    read_if(j, "seed", c.seed, "config");
    read_if(j, "threads", c.threads, "config");
    c.validate();
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open config " + path.string());
    }
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return ExperimentConfig::from_json(j);
}

std::string Cell::id() const
{
    char cr_text[32];
    std::snprintf(cr_text, sizeof cr_text, "%g", cr);
    return method + "_L" + std::to_string(l) + "_FR" + std::to_string(fr) + "_BR" + std::to_string(br) + "_CR" +
           cr_text;
}

std::vector<Cell> plan_cells(const ExperimentConfig& config)
{
    const std::size_t n_b = config.geometry.n_b();
    std::vector<Cell> cells;
    for (const auto& scenario : config.scenarios) {
        for (const auto& name : config.baselines) {
            for (auto l : config.grid.l_values) {
                Cell c;
                c.scenario = scenario;
                c.method = name;
                c.baseline = models::parse_baseline(name);
                c.l = l;
                c.br = static_cast<std::size_t>(std::llround(static_cast<double>(n_b) / static_cast<double>(l)));
                cells.push_back(c);
            }
        }
        for (const auto& name : config.models) {
            const models::ModelKind kind = models::parse_model_kind(name);
            for (auto n : config.grid.n_ue) {
                Cell base;
                base.scenario = scenario;
                base.is_model = true;
                base.kind = kind;
                base.n_ue = n;
                base.method = n == 1 ? name : name + "-n" + std::to_string(n);
                if (kind != models::ModelKind::bsdualnet_fr) {
                    for (auto l : config.grid.l_values) {
                        Cell c = base;
                        c.l = l;
                        c.br = static_cast<std::size_t>(std::llround(static_cast<double>(n_b) / static_cast<double>(l)));
                        cells.push_back(c);
                    }
                    continue;
                }
                for (auto fr : config.grid.fr) {
                    for (auto br : config.grid.br) {
                        for (auto cr : config.grid.cr) {
                            Cell c = base;
                            c.fr = fr;
                            c.br = br;
                            c.cr = cr;
                            c.l = airlink::make_placement(config.link.k_rbs, fr, br, n_b).l;
                            cells.push_back(c);
                        }
                    }
                }
            }
        }
    }
    return cells;
}

models::Architecture cell_architecture(const Cell& cell, const ExperimentConfig& config)
{
    if (!cell.is_model) {
        throw ConfigError("baseline cell '" + cell.id() + "' has no architecture");
    }
    const auto& g = config.geometry;
    if (cell.kind == models::ModelKind::bsdualnet_fr) {
        return models::Architecture::frequency_reduced(g.n_h, g.n_v, config.link.k_rbs, cell.fr, cell.br, cell.cr,
                                                       cell.n_ue, config.bits);
    }
    return models::Architecture::per_rb(cell.kind, g.n_h, g.n_v, cell.l, cell.n_ue, config.bits);
}

ResultRow account(const Cell& cell, const ExperimentConfig& config)
{
    const std::size_t k = config.link.k_rbs;
    ResultRow r;
    r.method = cell.method;
    r.scenario = cell.scenario;
    r.l = cell.l;
    r.fr = cell.fr;
    r.br = cell.br;
    r.cr = cell.cr;
    r.cr_eff = static_cast<double>(cell.br * cell.fr) * cell.cr;
    r.bits = config.bits;
    r.n_ue = cell.n_ue;
    r.cell_id = cell.id();
    if (cell.is_model && cell.kind == models::ModelKind::bsdualnet_fr) {
        const models::Architecture a = cell_architecture(cell, config);
        r.pilot_res = airlink::make_placement(k, cell.fr, cell.br, config.geometry.n_b()).total_res();
        r.feedback_bits = a.codeword_length() * static_cast<std::size_t>(config.bits);
    } else {
        // One set of L pilot REs and 2L quantized reals per RB.
        r.pilot_res = cell.l * k;
        r.feedback_bits = 2 * cell.l * k * static_cast<std::size_t>(config.bits);
    }
    if (cell.is_model) {
        const models::Complexity c = models::count_complexity(cell_architecture(cell, config));
        r.params = c.params;
        r.macs = c.macs;
    }
    return r;
}

}  // namespace bsfb::cli
