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
// bsfb: dataset generation, training, evaluation and reporting.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "bsfb/cli/cli.hpp"
#include "bsfb/errors.hpp"

namespace {

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<std::string> preset;
};

bsfb::cli::ExperimentConfig resolve(const Options& o)
{
    bsfb::cli::ExperimentConfig c;
    if (!o.config.empty()) {
        c = bsfb::cli::load_config(o.config);
    }
    if (o.seed) {
        c.seed = *o.seed;
    }
    if (o.out) {
        c.out = *o.out;
    }
    if (o.preset) {
        c.scenarios = {*o.preset};
    }
    c.validate();
    return c;
}

void add_common(CLI::App* cmd, Options& o)
{
    cmd->add_option("--config", o.config, "experiment config (JSON)")->check(CLI::ExistingFile);
    cmd->add_option("--seed", o.seed, "top-level seed");
    cmd->add_option("--out", o.out, "output directory");
    cmd->add_option("--preset", o.preset, "scenario preset")->check(CLI::IsMember({"indoor-like", "outdoor-like"}));
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Beam-space CSI feedback experiments"};
    app.require_subcommand(1);

    Options opts;
    auto* generate = app.add_subcommand("generate", "write channel datasets");
    auto* train = app.add_subcommand("train", "train every configured model");
    auto* eval = app.add_subcommand("eval", "evaluate models and baselines on the test split");
    for (auto* cmd : {generate, train, eval}) {
        add_common(cmd, opts);
    }
    std::string report_dir;
    auto* report = app.add_subcommand("report", "merge results.csv files and flag the best per CR_eff");
    report->add_option("dir", report_dir, "results directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (generate->parsed()) {
            bsfb::cli::cmd_generate(resolve(opts), std::cout);
        } else if (train->parsed()) {
            bsfb::cli::cmd_train(resolve(opts), std::cout);
        } else if (eval->parsed()) {
            bsfb::cli::cmd_run(resolve(opts), std::cout);
        } else if (report->parsed()) {
            bsfb::cli::cmd_report(report_dir, std::cout);
        }
    } catch (const bsfb::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
