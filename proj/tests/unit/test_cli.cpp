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
#include <doctest.h>

#include <fstream>
#include <random>
#include <sstream>
#include <algorithm>
#include <cmath>
#include <set>

#include "bsfb/cli/cli.hpp"
#include "bsfb/errors.hpp"
#include "bsfb/recovery/recovery.hpp"

using namespace bsfb;
using namespace bsfb::cli;
using nlohmann::json;

namespace {

// Fresh scratch directory per test case, removed on scope exit.
struct ScratchDir {
    std::filesystem::path path;
    explicit ScratchDir(const std::string& name) : path(std::filesystem::temp_directory_path() / ("bsfb_cli_" + name))
    {
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~ScratchDir() { std::filesystem::remove_all(path); }
};

std::string slurp(const std::filesystem::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

ExperimentConfig baseline_config(const std::filesystem::path& out)
{
    ExperimentConfig c;
    c.samples = 60;
    c.grid.l_values = {4, 8, 32};
    c.baselines = {"bs-ul", "bs-dl"};
    c.out = out;
    return c;
}

void write_csv(const std::filesystem::path& p, const std::vector<ResultRow>& rows)
{
    std::filesystem::create_directories(p.parent_path());
    std::ofstream out(p);
    write_results_csv(out, rows);
}

ResultRow row(const std::string& method, double cr_eff, double nmse)
{
    ResultRow r;
    r.method = method;
    r.scenario = "outdoor-like";
    r.l = 8;
    r.br = static_cast<std::size_t>(cr_eff);
    r.cr_eff = cr_eff;
    r.nmse_db = nmse;
    return r;
}

}  // namespace

TEST_CASE("config: defaults, round trip, strict keys")
{
    ExperimentConfig c;
    CHECK_NOTHROW(c.validate());
    const ExperimentConfig back = ExperimentConfig::from_json(c.to_json());
    CHECK(back.to_json() == c.to_json());

    CHECK_THROWS_AS(ExperimentConfig::from_json(json{{"samples", 10}}), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::from_json(json{{"version", 2}}), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::from_json(json{{"version", 1}, {"sample", 10}}), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::from_json(json{{"version", 1}, {"grid", {{"L", {4}}}}}), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::from_json(json{{"version", 1}, {"train", {{"epoch", 3}}}}), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::from_json(json{{"version", 1}, {"scenarios", {"rural"}}}), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::from_json(json{{"version", 1}, {"samples", 0}}), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::from_json(json{{"version", 1}, {"models", json::array()}, {"baselines", json::array()}}),
                    ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::from_json(json{{"version", 1}, {"models", {"bsdualnet-xl"}}}), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::from_json(json{{"version", 1}, {"samples", "many"}}), ConfigError);

    const ExperimentConfig parsed =
        ExperimentConfig::from_json(json{{"version", 1}, {"grid", {{"l", {4, 16}}}}, {"seed", 9}});
    CHECK(parsed.grid.l_values == std::vector<std::size_t>{4, 16});
    CHECK(parsed.seed == 9);
}

TEST_CASE("config: load from file")
{
    ScratchDir dir("load");
    const auto p = dir.path / "c.json";
    std::ofstream(p) << R"({"version": 1, "baselines": ["bs-ul"], "grid": {"l": [8]}})";
    const ExperimentConfig c = load_config(p);
    CHECK(c.baselines == std::vector<std::string>{"bs-ul"});
    std::ofstream(p) << "{ not json";
    CHECK_THROWS_AS(load_config(p), ConfigError);
    CHECK_THROWS_AS(load_config(dir.path / "absent.json"), IoError);
}

TEST_CASE("seeds: named streams are stable and distinct")
{
    CHECK(stream_seed(1, "data/outdoor-like") == stream_seed(1, "data/outdoor-like"));
    CHECK(stream_seed(1, "data/outdoor-like") != stream_seed(1, "data/indoor-like"));
    CHECK(stream_seed(1, "data/outdoor-like") != stream_seed(2, "data/outdoor-like"));
}

TEST_CASE("cells: planning and naming")
{
    ExperimentConfig c;
    c.models = {"bsdualnet-mn", "bsdualnet-fr"};
    c.baselines = {"bs-ul"};
    c.grid.l_values = {4, 8};
    c.grid.n_ue = {1, 8};
    c.grid.fr = {1, 2};
    c.grid.br = {2};
    c.grid.cr = {1, 4};
    const auto cells = plan_cells(c);
    // 2 baseline cells, 2 x 2 MN cells, 2 x (2 x 1 x 2) FR cells.
    CHECK(cells.size() == 2 + 4 + 8);
    std::set<std::string> ids;
    for (const auto& cell : cells) {
        ids.insert(cell.scenario + cell.id());
    }
    CHECK(ids.size() == cells.size());
    CHECK(cells[0].br == 8);
    CHECK(cells[1].br == 4);
    bool saw_multi = false;
    for (const auto& cell : cells) {
        saw_multi = saw_multi || cell.method == "bsdualnet-mn-n8";
    }
    CHECK(saw_multi);
}

TEST_CASE("accounting: pilot REs and CR_eff over the placement grid")
{
    ExperimentConfig c;
    c.link.k_rbs = 32;
    c.models = {"bsdualnet-fr"};
    c.baselines = {};
    c.grid.fr = {1, 2, 4, 8};
    c.grid.br = {1, 2, 4};
    c.grid.cr = {1, 2};
    const std::size_t n_b = c.geometry.n_b();
    for (const auto& cell : plan_cells(c)) {
        const ResultRow r = account(cell, c);
        CHECK(r.cr_eff == doctest::Approx(static_cast<double>(cell.br * cell.fr) * cell.cr));
        CHECK(r.pilot_res == n_b * 32 / (cell.br * cell.fr));
        CHECK(r.params > 0);
    }
    ExperimentConfig p;
    p.grid.l_values = {4, 8, 16, 32};
    for (const auto& cell : plan_cells(p)) {
        const ResultRow r = account(cell, p);
        CHECK(r.pilot_res == n_b * p.link.k_rbs / r.br);
        CHECK(r.feedback_bits == 2 * cell.l * p.link.k_rbs * 8);
    }
}

TEST_CASE("generate: deterministic files and the energy statistic")
{
    ScratchDir dir("generate");
    ExperimentConfig c = baseline_config(dir.path / "a");
    c.samples = 200;
    std::ostringstream log;
    const auto s1 = cmd_generate(c, log);
    REQUIRE(s1.size() == 1);
    CHECK(s1[0].samples == 200);
    CHECK(s1[0].energy_fraction >= 0.85);
    CHECK(log.str().find("energy fraction") != std::string::npos);
    c.out = dir.path / "b";
    const auto s2 = cmd_generate(c, log);
    CHECK(slurp(s1[0].path) == slurp(s2[0].path));

    c.samples = 0;
    CHECK_THROWS_AS(cmd_generate(c, log), ConfigError);
}

TEST_CASE("run: baselines, determinism, full-beam degeneracy, stored estimates")
{
    ScratchDir dir("run");
    ExperimentConfig c = baseline_config(dir.path);
    c.save_estimates = true;
    std::ostringstream log;
    const auto rows = cmd_run(c, log);
    const std::string first = slurp(dir.path / "results.csv");
    cmd_run(c, log);
    CHECK(first == slurp(dir.path / "results.csv"));
    CHECK(first.rfind(std::string(kResultsHeader) + "\n", 0) == 0);

    REQUIRE(rows.size() == 6);
    // Rows: bs-ul L = 4, 8, 32 then bs-dl L = 4, 8, 32.
    CHECK(rows[2].nmse_db == rows[5].nmse_db);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(rows[3 + i].nmse_db <= rows[i].nmse_db);
        CHECK(rows[i].cr_eff == static_cast<double>(rows[i].br));
        CHECK(rows[i].seconds == 0.0);
    }

    const json doc = json::parse(slurp(dir.path / "results.json"));
    CHECK(doc.at("results").size() == 6);

    // Emitted NMSE equals the value recomputed from the stored estimates.
    for (const auto& cell : plan_cells(c)) {
        const StoredEstimates e = read_estimates(estimates_path(c, cell));
        const double recomputed = recovery::nmse_db(e.estimates, e.truths);
        bool found = false;
        for (const auto& r : rows) {
            if (r.cell_id == cell.id()) {
                CHECK(r.nmse_db == recomputed);
                found = true;
            }
        }
        CHECK(found);
    }
}

TEST_CASE("run: missing checkpoint is an explicit error")
{
    ScratchDir dir("missing");
    ExperimentConfig c = baseline_config(dir.path);
    c.models = {"bsdualnet-mn"};
    std::ostringstream log;
    try {
        cmd_run(c, log);
        FAIL("expected an error");
    } catch (const IoError& e) {
        CHECK(std::string(e.what()).find("missing model checkpoint") != std::string::npos);
    }
}

TEST_CASE("train then eval: bundles, history and model rows")
{
    ScratchDir dir("train");
    ExperimentConfig c;
    c.samples = 40;
    c.models = {"bsdualnet-mn"};
    c.baselines = {};
    c.grid.l_values = {8};
    c.train.epochs = 2;
    c.train.n_first = 1;
    c.train.batch_size = 8;
    c.out = dir.path;
    std::ostringstream log;
    const auto trained = cmd_train(c, log);
    REQUIRE(trained.size() == 1);
    CHECK(std::filesystem::exists(trained[0].stem.string() + ".bsnn"));
    const std::string history = slurp(dir.path / "history.csv");
    CHECK(history.rfind("model,epoch,loss1,loss2,val_nmse_db\n", 0) == 0);
    CHECK(std::count(history.begin(), history.end(), '\n') == 4);

    const auto rows = cmd_run(c, log);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].params == 44836);
    CHECK(std::isfinite(rows[0].nmse_db));

    c.grid.l_values = {4};
    CHECK_THROWS_AS(cmd_run(c, log), IoError);
}

TEST_CASE("report: passthrough, best flags, errors")
{
    ScratchDir dir("report");
    std::ostringstream log;
    write_csv(dir.path / "one" / "results.csv", {row("bs-ul", 4, -10.0)});
    auto single = cmd_report(dir.path / "one", log);
    REQUIRE(single.size() == 1);
    CHECK(single[0].best);
    CHECK(single[0].row.nmse_db == -10.0);

    write_csv(dir.path / "two" / "a" / "results.csv", {row("bs-ul", 4, -10.0), row("bs-ul", 8, -6.0)});
    write_csv(dir.path / "two" / "b" / "results.csv", {row("mn", 4, -14.0), row("mn", 8, -9.0)});
    const auto merged = cmd_report(dir.path / "two", log);
    REQUIRE(merged.size() == 4);
    for (const auto& r : merged) {
        CHECK(r.best == (r.row.method == "mn"));
    }
    // Grouped by CR_eff.
    CHECK(merged[0].row.cr_eff == merged[1].row.cr_eff);
    CHECK(merged[2].row.cr_eff == merged[3].row.cr_eff);
    CHECK(slurp(dir.path / "two" / "report.csv").find(",best\n") != std::string::npos);

    std::filesystem::create_directories(dir.path / "empty");
    CHECK_THROWS_AS(cmd_report(dir.path / "empty", log), IoError);

    std::filesystem::create_directories(dir.path / "bad");
    std::ofstream(dir.path / "bad" / "results.csv") << "method,nmse\nx,1\n";
    CHECK_THROWS_AS(cmd_report(dir.path / "bad", log), FormatError);
}
