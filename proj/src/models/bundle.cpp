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
#include <fstream>
#include <iomanip>
#include <sstream>

#include "bsfb/errors.hpp"
#include "bsfb/models/models.hpp"
#include "bsfb/numerics/checkpoint.hpp"

namespace bsfb::models {

namespace {

constexpr int kBundleVersion = 1;

std::filesystem::path with_suffix(const std::filesystem::path& stem, const std::string& suffix)
{
    return std::filesystem::path(stem.string() + suffix);
}

std::vector<HistoryRow> read_history_csv(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    std::string line;
    if (!std::getline(in, line) || line != "epoch,loss1,loss2,val_nmse_db") {
        throw FormatError(path.string() + ": unexpected history header");
    }
    std::vector<HistoryRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        std::istringstream ss(line);
        HistoryRow r;
        char c1 = 0;
        char c2 = 0;
        char c3 = 0;
        if (!(ss >> r.epoch >> c1 >> r.loss1 >> c2 >> r.loss2 >> c3 >> r.val_nmse_db) || c1 != ',' || c2 != ',' ||
            c3 != ',') {
            throw FormatError(path.string() + ": malformed history row '" + line + "'");
        }
        rows.push_back(r);
    }
    return rows;
}

}  // namespace

void write_history_csv(std::ostream& out, const std::vector<HistoryRow>& history)
{
    out << "epoch,loss1,loss2,val_nmse_db\n";
    out << std::setprecision(17);
    for (const auto& r : history) {
        out << r.epoch << ',' << r.loss1 << ',' << r.loss2 << ',' << r.val_nmse_db << '\n';
    }
}

void save_bundle(const std::filesystem::path& stem, const ModelBundle& bundle)
{
    count_complexity(bundle);
    nn::save_checkpoint(with_suffix(stem, ".bsnn"), bundle.params);
    const nlohmann::json descriptor{{"format", "bsfb-model"},
                                    {"version", kBundleVersion},
                                    {"architecture", bundle.arch.to_json()},
                                    {"best_epoch", bundle.best_epoch},
                                    {"parameters", bundle.params.scalar_count()}};
    {
        std::ofstream out(with_suffix(stem, ".json"));
        if (!out) {
            throw IoError("cannot write " + with_suffix(stem, ".json").string());
        }
        out << descriptor.dump(2) << '\n';
    }
    std::ofstream out(with_suffix(stem, ".history.csv"));
    if (!out) {
        throw IoError("cannot write " + with_suffix(stem, ".history.csv").string());
    }
    write_history_csv(out, bundle.history);
}

ModelBundle load_bundle(const std::filesystem::path& stem)
{
    const auto json_path = with_suffix(stem, ".json");
    std::ifstream in(json_path);
    if (!in) {
        throw IoError("missing model checkpoint: cannot open " + json_path.string());
    }
    nlohmann::json descriptor;
    try {
        descriptor = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(json_path.string() + ": " + e.what());
    }
    if (descriptor.value("format", "") != "bsfb-model" || descriptor.value("version", 0) != kBundleVersion) {
        throw FormatError(json_path.string() + ": not a version " + std::to_string(kBundleVersion) +
                          " model descriptor");
    }
    ModelBundle bundle;
    bundle.arch = Architecture::from_json(descriptor.at("architecture"));
    bundle.best_epoch = descriptor.value("best_epoch", std::size_t{0});
    bundle.params = nn::load_checkpoint(with_suffix(stem, ".bsnn"));

    const nn::ParameterSet expected = init_parameters(bundle.arch, 0);
    if (expected.size() != bundle.params.size()) {
        throw FormatError("checkpoint holds " + std::to_string(bundle.params.size()) + " tensors, architecture needs " +
                          std::to_string(expected.size()));
    }
    for (const auto& e : expected) {
        if (!bundle.params.contains(e.name) || !bundle.params.at(e.name).same_shape(e.value)) {
            throw FormatError("checkpoint tensor '" + e.name + "' is missing or has the wrong shape");
        }
    }
    const auto history_path = with_suffix(stem, ".history.csv");
    if (std::filesystem::exists(history_path)) {
        bundle.history = read_history_csv(history_path);
    }
    return bundle;
}

}  // namespace bsfb::models
