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
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "bsfb/beamspace/beamspace.hpp"
#include "bsfb/binio.hpp"
#include "bsfb/cli/cli.hpp"
#include "bsfb/errors.hpp"
#include "bsfb/parallel.hpp"
#include "bsfb/recovery/recovery.hpp"

namespace bsfb::cli {

namespace {

using nlohmann::json;

channel::ScenarioConfig scenario_for(const ExperimentConfig& config, const std::string& name)
{
    channel::ScenarioConfig s = channel::ScenarioConfig::preset(name);
    s.seed = stream_seed(config.seed, "data/" + name);
    return s;
}

bool dataset_matches(const channel::Dataset& d, const ExperimentConfig& config, const channel::ScenarioConfig& s)
{
    return d.geometry.n_h == config.geometry.n_h && d.geometry.n_v == config.geometry.n_v &&
           d.geometry.spacing == config.geometry.spacing && d.k_rbs == config.link.k_rbs &&
           d.samples.size() == config.samples && json(d.scenario) == json(s);
}

channel::Dataset generate(const ExperimentConfig& config, const std::string& name)
{
    channel::Dataset d;
    d.geometry = config.geometry;
    d.k_rbs = config.link.k_rbs;
    d.scenario = scenario_for(config, name);
    d.samples = channel::generate_dataset(d.scenario, d.geometry, config.link, config.samples, config.threads);
    return d;
}

// Reads the scenario's dataset, regenerating it when absent or stale.
channel::Dataset obtain_dataset(const ExperimentConfig& config, const std::string& name, std::ostream& log)
{
    const auto path = dataset_path(config, name);
    if (std::filesystem::exists(path)) {
        channel::Dataset d = channel::read_dataset(path);
        if (dataset_matches(d, config, scenario_for(config, name))) {
            return d;
        }
        log << "dataset " << path.string() << " does not match the config; regenerating\n";
    }
    std::filesystem::create_directories(path.parent_path());
    channel::Dataset d = generate(config, name);
    channel::write_dataset(path, d);
    return d;
}

struct Splits {
    std::vector<channel::ChannelSample> train;
    std::vector<channel::ChannelSample> val;
    std::vector<channel::ChannelSample> test;
};

Splits split(const channel::Dataset& d)
{
    const models::Split s = models::split_counts(d.samples.size());
    const auto b = d.samples.begin();
    Splits out;
    out.train.assign(b, b + static_cast<long>(s.train));
    out.val.assign(b + static_cast<long>(s.train), b + static_cast<long>(s.train + s.val));
    out.test.assign(b + static_cast<long>(s.train + s.val), d.samples.end());
    return out;
}

// Examples for a cell: per-RB methods at rbs_per_sample RBs, the FR model
// over all K.
std::vector<models::Example> cell_examples(const Cell& cell, const ExperimentConfig& config,
                                           const std::vector<channel::ChannelSample>& samples,
                                           const beamspace::ObmMatrix& obm)
{
    models::Architecture a;
    if (cell.is_model) {
        a = cell_architecture(cell, config);
    } else {
        a = models::Architecture::per_rb(models::ModelKind::bsdualnet0, config.geometry.n_h, config.geometry.n_v,
                                         cell.l);
    }
    return models::make_examples(samples, obm, a, config.rbs_per_sample);
}

std::string format_double(const char* fmt, double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, fmt, v);
    return buf;
}

std::vector<std::string> split_csv(const std::string& line)
{
    std::vector<std::string> out;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) {
        out.push_back(field);
    }
    if (!line.empty() && line.back() == ',') {
        out.emplace_back();
    }
    return out;
}

template <typename T>
T parse_number(const std::string& text, const std::filesystem::path& path)
{
    std::istringstream ss(text);
    T v{};
    if (!(ss >> v) || !ss.eof()) {
        throw FormatError(path.string() + ": cannot parse '" + text + "'");
    }
    return v;
}

void write_text(const std::filesystem::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out || !(out << text)) {
        throw IoError("cannot write " + path.string());
    }
}

}  // namespace

std::filesystem::path dataset_path(const ExperimentConfig& config, const std::string& scenario)
{
    return config.out / "data" / (scenario + ".bsfd");
}

std::filesystem::path model_stem(const ExperimentConfig& config, const Cell& cell)
{
    return config.out / "models" / (cell.scenario + "__" + cell.id());
}

std::filesystem::path estimates_path(const ExperimentConfig& config, const Cell& cell)
{
    return config.out / "estimates" / (cell.scenario + "__" + cell.id() + ".bsfe");
}

void write_results_csv(std::ostream& out, const std::vector<ResultRow>& rows)
{
    out << kResultsHeader << '\n';
    for (const auto& r : rows) {
        out << r.method << ',' << r.scenario << ',' << r.l << ',' << r.fr << ',' << r.br << ','
            << format_double("%g", r.cr) << ',' << format_double("%g", r.cr_eff) << ',' << r.bits << ','
            << format_double("%.6f", r.nmse_db) << ',' << r.params << ',' << r.macs << ','
            << format_double("%.3f", r.seconds) << '\n';
    }
}

json results_json(const std::vector<ResultRow>& rows)
{
    json arr = json::array();
    for (const auto& r : rows) {
        arr.push_back(json{{"method", r.method},
                           {"scenario", r.scenario},
                           {"cell", r.cell_id},
                           {"L", r.l},
                           {"FR", r.fr},
                           {"BR", r.br},
                           {"CR", r.cr},
                           {"CR_eff", r.cr_eff},
                           {"bits", r.bits},
                           {"n_ue", r.n_ue},
                           {"nmse_db", r.nmse_db},
                           {"pilot_res", r.pilot_res},
                           {"feedback_bits", r.feedback_bits},
                           {"params", r.params},
                           {"macs", r.macs},
                           {"wall_seconds", r.wall_seconds}});
    }
    return arr;
}

std::vector<GenerateSummary> cmd_generate(const ExperimentConfig& config, std::ostream& log)
{
    config.validate();
    const beamspace::ObmMatrix obm = beamspace::build_obm(config.geometry);
    const std::size_t top = std::max<std::size_t>(1, config.geometry.n_b() / 4);
    std::vector<GenerateSummary> out;
    for (const auto& name : config.scenarios) {
        const auto path = dataset_path(config, name);
        std::filesystem::create_directories(path.parent_path());
        const channel::Dataset d = generate(config, name);
        channel::write_dataset(path, d);
        double sum = 0.0;
        std::size_t count = 0;
        for (const auto& s : d.samples) {
            const Eigen::MatrixXcd h_bs = beamspace::to_beam_domain(s.h_dl, obm);
            for (Eigen::Index k = 0; k < h_bs.cols(); ++k) {
                sum += beamspace::beam_energy_fraction(h_bs.col(k), top);
                ++count;
            }
        }
        GenerateSummary g{name, d.samples.size(), sum / static_cast<double>(count), path};
        log << "generated " << g.samples << " " << name << " samples -> " << path.string()
            << " (mean top-" << top << " beam energy fraction " << format_double("%.4f", g.energy_fraction) << ")\n";
        out.push_back(std::move(g));
    }
    return out;
}

std::vector<TrainSummary> cmd_train(const ExperimentConfig& config, std::ostream& log)
{
    config.validate();
    const beamspace::ObmMatrix obm = beamspace::build_obm(config.geometry);
    std::vector<TrainSummary> out;
    std::ostringstream history;
    history << "model,epoch,loss1,loss2,val_nmse_db\n";
    std::map<std::string, Splits> data;
    for (const auto& cell : plan_cells(config)) {
        if (!cell.is_model) {
            continue;
        }
        if (data.count(cell.scenario) == 0) {
            data.emplace(cell.scenario, split(obtain_dataset(config, cell.scenario, log)));
        }
        const Splits& s = data.at(cell.scenario);
        const models::Architecture arch = cell_architecture(cell, config);
        models::TrainConfig tc = config.train;
        tc.seed = stream_seed(config.seed, "train/" + cell.scenario + "/" + cell.id());
        log << "training " << cell.scenario << " " << cell.id() << "\n";
        const models::ModelBundle bundle =
            models::train_two_stage(arch, cell_examples(cell, config, s.train, obm),
                                    cell_examples(cell, config, s.val, obm), tc,
                                    [&log](const models::HistoryRow& r, const nn::ParameterSet&) {
                                        log << "  epoch " << r.epoch << " loss1 " << format_double("%.6g", r.loss1)
                                            << " loss2 " << format_double("%.6g", r.loss2) << " val "
                                            << format_double("%.3f", r.val_nmse_db) << " dB\n";
                                    });
        const auto stem = model_stem(config, cell);
        std::filesystem::create_directories(stem.parent_path());
        models::save_bundle(stem, bundle);
        for (const auto& r : bundle.history) {
            history << cell.scenario << "__" << cell.id() << ',' << r.epoch << ','
                    << format_double("%.17g", r.loss1) << ',' << format_double("%.17g", r.loss2) << ','
                    << format_double("%.17g", r.val_nmse_db) << '\n';
        }
        out.push_back(TrainSummary{cell, stem, bundle.history[bundle.best_epoch].val_nmse_db, bundle.best_epoch});
    }
    std::filesystem::create_directories(config.out);
    write_text(config.out / "history.csv", history.str());
    return out;
}

std::vector<ResultRow> cmd_run(const ExperimentConfig& config, std::ostream& log)
{
    config.validate();
    const beamspace::ObmMatrix obm = beamspace::build_obm(config.geometry);
    const std::vector<Cell> cells = plan_cells(config);

    std::map<std::string, Splits> data;
    for (const auto& name : config.scenarios) {
        data.emplace(name, split(obtain_dataset(config, name, log)));
    }
    // Fail before any work if a checkpoint is missing.
    for (const auto& cell : cells) {
        if (cell.is_model && !std::filesystem::exists(model_stem(config, cell).string() + ".json")) {
            throw IoError("missing model checkpoint for " + cell.scenario + "/" + cell.id() + " (expected " +
                          model_stem(config, cell).string() + ".json; run 'train' first)");
        }
    }

    std::vector<ResultRow> rows(cells.size());
    parallel_chunks(cells.size(), config.threads, [&](std::size_t, std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            const Cell& cell = cells[i];
            const auto test = cell_examples(cell, config, data.at(cell.scenario).test, obm);
            models::Evaluation ev;
            if (cell.is_model) {
                const models::ModelBundle bundle = models::load_bundle(model_stem(config, cell));
                if (bundle.arch.to_json() != cell_architecture(cell, config).to_json()) {
                    throw ConfigError("checkpoint " + model_stem(config, cell).string() +
                                      " was trained for a different architecture");
                }
                models::InferenceOptions opt;
                opt.noise_std = config.noise_std;
                opt.seed = stream_seed(config.seed, "noise/" + cell.scenario + "/" + cell.id());
                ev = models::evaluate_model(bundle.arch, bundle.params, test, opt);
            } else {
                ev = models::evaluate_baseline(cell.baseline, test, cell.l, config.bits,
                                               stream_seed(config.seed, "ista/" + cell.scenario + "/L" +
                                                                            std::to_string(cell.l)));
            }
            ResultRow r = account(cell, config);
            r.nmse_db = ev.nmse_db;
            r.wall_seconds = ev.seconds;
            r.seconds = config.record_wall_time ? ev.seconds : 0.0;
            rows[i] = r;
            if (config.save_estimates) {
                const auto path = estimates_path(config, cell);
                std::filesystem::create_directories(path.parent_path());
                write_estimates(path, StoredEstimates{std::move(ev.estimates), std::move(ev.truths)});
            }
        }
    });
    for (const auto& r : rows) {
        log << r.scenario << " " << r.cell_id << ": " << format_double("%.3f", r.nmse_db) << " dB\n";
    }

    std::filesystem::create_directories(config.out);
    std::ostringstream csv;
    write_results_csv(csv, rows);
    write_text(config.out / "results.csv", csv.str());
    const json doc{{"config", config.to_json()}, {"results", results_json(rows)}};
    write_text(config.out / "results.json", doc.dump(2) + "\n");
    return rows;
}

std::vector<ResultRow> read_results_csv(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    std::string line;
    if (!std::getline(in, line) || line != kResultsHeader) {
        throw FormatError(path.string() + ": schema mismatch, expected header '" + std::string(kResultsHeader) + "'");
    }
    std::vector<ResultRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        const auto f = split_csv(line);
        if (f.size() != 12) {
            throw FormatError(path.string() + ": schema mismatch, row has " + std::to_string(f.size()) +
                              " fields: '" + line + "'");
        }
        ResultRow r;
        r.method = f[0];
        r.scenario = f[1];
        r.l = parse_number<std::size_t>(f[2], path);
        r.fr = parse_number<std::size_t>(f[3], path);
        r.br = parse_number<std::size_t>(f[4], path);
        r.cr = parse_number<double>(f[5], path);
        r.cr_eff = parse_number<double>(f[6], path);
        r.bits = parse_number<int>(f[7], path);
        r.nmse_db = parse_number<double>(f[8], path);
        r.params = parse_number<std::size_t>(f[9], path);
        r.macs = parse_number<std::size_t>(f[10], path);
        r.seconds = parse_number<double>(f[11], path);
        rows.push_back(std::move(r));
    }
    return rows;
}

std::vector<ReportRow> cmd_report(const std::filesystem::path& dir, std::ostream& log)
{
    if (!std::filesystem::is_directory(dir)) {
        throw IoError("no results: " + dir.string() + " is not a directory");
    }
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::recursive_directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().filename() == "results.csv") {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());
    std::vector<ReportRow> rows;
    for (const auto& f : files) {
        for (auto& r : read_results_csv(f)) {
            rows.push_back(ReportRow{std::move(r), false});
        }
    }
    if (rows.empty()) {
        throw IoError("no results found under " + dir.string());
    }
    std::stable_sort(rows.begin(), rows.end(), [](const ReportRow& a, const ReportRow& b) {
        if (a.row.scenario != b.row.scenario) {
            return a.row.scenario < b.row.scenario;
        }
        return a.row.cr_eff < b.row.cr_eff;
    });
    for (std::size_t begin = 0; begin < rows.size();) {
        std::size_t end = begin;
        double best = rows[begin].row.nmse_db;
        while (end < rows.size() && rows[end].row.scenario == rows[begin].row.scenario &&
               rows[end].row.cr_eff == rows[begin].row.cr_eff) {
            best = std::min(best, rows[end].row.nmse_db);
            ++end;
        }
        for (std::size_t i = begin; i < end; ++i) {
            rows[i].best = rows[i].row.nmse_db == best;
        }
        begin = end;
    }

    std::ostringstream csv;
    csv << kResultsHeader << ",best\n";
    std::vector<ResultRow> plain;
    for (const auto& r : rows) {
        plain.push_back(r.row);
    }
    std::ostringstream body;
    write_results_csv(body, plain);
    std::istringstream lines(body.str());
    std::string line;
    std::getline(lines, line);
    for (const auto& r : rows) {
        std::getline(lines, line);
        csv << line << ',' << (r.best ? 1 : 0) << '\n';
    }
    write_text(dir / "report.csv", csv.str());

    char head[160];
    std::snprintf(head, sizeof head, "%-14s %-26s %4s %3s %3s %6s %7s %10s\n", "scenario", "method", "L", "FR", "BR",
                  "CR", "CR_eff", "NMSE[dB]");
    log << head;
    for (const auto& r : rows) {
        char buf[200];
        std::snprintf(buf, sizeof buf, "%-14s %-26s %4zu %3zu %3zu %6g %7g %10.3f%s\n", r.row.scenario.c_str(),
                      r.row.method.c_str(), r.row.l, r.row.fr, r.row.br, r.row.cr, r.row.cr_eff, r.row.nmse_db,
                      r.best ? "  *" : "");
        log << buf;
    }
    return rows;
}

void write_estimates(const std::filesystem::path& path, const StoredEstimates& e)
{
    if (e.estimates.size() != e.truths.size()) {
        throw DimensionError("estimate and truth counts differ");
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    io::Writer w(out);
    w.bytes("BSFE");
    w.u32(1);
    w.u64(e.estimates.size());
    for (std::size_t i = 0; i < e.estimates.size(); ++i) {
        for (const Eigen::MatrixXcd* m : {&e.estimates[i], &e.truths[i]}) {
            w.u32(static_cast<std::uint32_t>(m->rows()));
            w.u32(static_cast<std::uint32_t>(m->cols()));
            w.f64s(reinterpret_cast<const double*>(m->data()), static_cast<std::size_t>(m->size()) * 2);
        }
    }
}

StoredEstimates read_estimates(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    io::Reader r(in, path.string());
    r.expect_magic("BSFE");
    if (r.u32() != 1) {
        throw FormatError(path.string() + ": unsupported estimates version");
    }
    const std::uint64_t n = r.u64();
    StoredEstimates out;
    for (std::uint64_t i = 0; i < n; ++i) {
        for (auto* dst : {&out.estimates, &out.truths}) {
            const std::uint32_t rows = r.u32();
            const std::uint32_t cols = r.u32();
            Eigen::MatrixXcd m(rows, cols);
            r.f64s(reinterpret_cast<double*>(m.data()), static_cast<std::size_t>(m.size()) * 2);
            dst->push_back(std::move(m));
        }
    }
    return out;
}

}  // namespace bsfb::cli
