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

// Configuration-driven experiment harness behind the command-line tool.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "bsfb/channel/channel.hpp"
#include "bsfb/models/models.hpp"

namespace bsfb::cli {

inline constexpr int kConfigVersion = 1;

/// Placement grid swept by cmd_run. Per-RB methods use l_values (with
/// BR = round(N_b / L), FR = CR = 1); the FR model sweeps fr x br x cr.
struct Grid {
    std::vector<std::size_t> l_values = {8};
    std::vector<std::size_t> fr = {1};
    std::vector<std::size_t> br = {1};
    std::vector<double> cr = {1.0};
    std::vector<std::size_t> n_ue = {1};
};

struct ExperimentConfig {
    int version = kConfigVersion;
    std::vector<std::string> scenarios = {"outdoor-like"};
    channel::UpaGeometry geometry;
    channel::FddLinkConfig link;
    std::size_t samples = 2000;
    Grid grid;
    std::vector<std::string> models;
    std::vector<std::string> baselines = {"bs-ul", "bs-dl"};
    models::TrainConfig train;
    std::size_t rbs_per_sample = 1;
    int bits = 8;
    double noise_std = 0.0;
    // Off: the results.csv seconds column is written as 0 so reruns are
    // byte-identical; measured times always go to results.json.
    bool record_wall_time = false;
    bool save_estimates = false;
    std::filesystem::path out = "results";
    std::uint64_t seed = 1;
    std::size_t threads = 1;

    void validate() const;
    nlohmann::json to_json() const;
    // Rejects unknown keys at every level and any version other than
    // kConfigVersion.
    static ExperimentConfig from_json(const nlohmann::json& j);
};

ExperimentConfig load_config(const std::filesystem::path& path);

// splitmix64(seed ^ fnv1a(label)): every random stream of a run is named.
std::uint64_t stream_seed(std::uint64_t seed, const std::string& label);

/// One (method, setting) cell of the sweep.
struct Cell {
    std::string scenario;
    std::string method;
    bool is_model = false;
    models::ModelKind kind = models::ModelKind::bsdualnet_mn;
    models::Baseline baseline = models::Baseline::bs_ul;
    std::size_t l = 0;
    std::size_t fr = 1;
    std::size_t br = 1;
    double cr = 1.0;
    std::size_t n_ue = 1;

    // File-system safe identifier, unique within a scenario.
    std::string id() const;
};

std::vector<Cell> plan_cells(const ExperimentConfig& config);
models::Architecture cell_architecture(const Cell& cell, const ExperimentConfig& config);

struct ResultRow {
    std::string method;
    std::string scenario;
    std::size_t l = 0;
    std::size_t fr = 1;
    std::size_t br = 1;
    double cr = 1.0;
    double cr_eff = 1.0;
    int bits = 8;
    double nmse_db = 0.0;
    std::size_t params = 0;
    std::size_t macs = 0;
    double seconds = 0.0;
    // JSON-only fields.
    std::size_t n_ue = 1;
    std::size_t pilot_res = 0;
    std::size_t feedback_bits = 0;
    double wall_seconds = 0.0;
    std::string cell_id;
};

// Resource accounting of a cell without running it: pilot REs over all K
// RBs, feedback bits per UE, CR_eff, model size.
ResultRow account(const Cell& cell, const ExperimentConfig& config);

inline constexpr const char* kResultsHeader = "method,scenario,L,FR,BR,CR,CR_eff,bits,nmse_db,params,macs,seconds";

void write_results_csv(std::ostream& out, const std::vector<ResultRow>& rows);
nlohmann::json results_json(const std::vector<ResultRow>& rows);

struct GenerateSummary {
    std::string scenario;
    std::size_t samples = 0;
    // Mean fraction of DL energy in the top N_b/4 beams over samples and RBs.
    double energy_fraction = 0.0;
    std::filesystem::path path;
};

std::filesystem::path dataset_path(const ExperimentConfig& config, const std::string& scenario);

// Writes <out>/data/<scenario>.bsfd for every scenario.
std::vector<GenerateSummary> cmd_generate(const ExperimentConfig& config, std::ostream& log);

struct TrainSummary {
    Cell cell;
    std::filesystem::path stem;
    double best_val_nmse_db = 0.0;
    std::size_t best_epoch = 0;
};

std::filesystem::path model_stem(const ExperimentConfig& config, const Cell& cell);

// Trains every model cell on the train/val split and saves its bundle under
// <out>/models; the merged per-model history goes to <out>/history.csv.
std::vector<TrainSummary> cmd_train(const ExperimentConfig& config, std::ostream& log);

// Evaluates every cell on the test split (datasets generated on demand,
// models loaded from <out>/models) and writes results.csv / results.json.
std::vector<ResultRow> cmd_run(const ExperimentConfig& config, std::ostream& log);

struct ReportRow {
    ResultRow row;
    bool best = false;
};

// Merges every results.csv below `dir`, flags the lowest NMSE per
// (scenario, CR_eff) and writes <dir>/report.csv. FormatError on a header
// mismatch, IoError when there is nothing to merge.
std::vector<ReportRow> cmd_report(const std::filesystem::path& dir, std::ostream& log);

std::vector<ResultRow> read_results_csv(const std::filesystem::path& path);

/// Stored test-set estimates of one cell (written when save_estimates is on).
struct StoredEstimates {
    std::vector<Eigen::MatrixXcd> estimates;
    std::vector<Eigen::MatrixXcd> truths;
};

std::filesystem::path estimates_path(const ExperimentConfig& config, const Cell& cell);
void write_estimates(const std::filesystem::path& path, const StoredEstimates& e);
StoredEstimates read_estimates(const std::filesystem::path& path);

}  // namespace bsfb::cli
