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
#include <cmath>
#include <numeric>

#include "bsfb/errors.hpp"
#include "bsfb/models/models.hpp"
#include "bsfb/numerics/ops.hpp"
#include "bsfb/parallel.hpp"
#include "bsfb/recovery/recovery.hpp"
#include "bsfb/rng.hpp"

namespace bsfb::models {

namespace {

std::vector<std::vector<const Example*>> make_groups(const std::vector<Example>& examples, std::size_t n_ue)
{
    std::vector<std::vector<const Example*>> groups;
    for (std::size_t i = 0; i + n_ue <= examples.size(); i += n_ue) {
        std::vector<const Example*> g;
        for (std::size_t u = 0; u < n_ue; ++u) {
            g.push_back(&examples[i + u]);
        }
        groups.push_back(std::move(g));
    }
    return groups;
}

// Grid estimates and [N_b, K, 2] targets share their flat layout.
double squared_distance(const nn::Tensor& a, const nn::Tensor& b)
{
    if (a.size() != b.size()) {
        throw DimensionError("estimate and target sizes differ");
    }
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

bool is_combining(const std::string& name)
{
    return name.rfind("c.", 0) == 0;
}

void accumulate(nn::ParameterSet& sum, const nn::ParameterSet& g)
{
    auto it = g.begin();
    for (auto& e : sum) {
        auto dst = e.value.data();
        auto src = it->value.data();
        for (std::size_t i = 0; i < dst.size(); ++i) {
            dst[i] += src[i];
        }
        ++it;
    }
}

}  // namespace

void TrainConfig::validate(std::size_t train_examples, std::size_t n_ue) const
{
    if (epochs < 1) {
        throw ConfigError("epochs must be at least 1");
    }
    if (n_first >= epochs) {
        throw ConfigError("N_first (" + std::to_string(n_first) + ") must be below the epoch count (" +
                          std::to_string(epochs) + ")");
    }
    if (batch_size < n_ue) {
        throw ConfigError("batch size must hold at least one group of " + std::to_string(n_ue) + " UEs");
    }
    if (batch_size > train_examples) {
        throw ConfigError("batch size " + std::to_string(batch_size) + " exceeds the " +
                          std::to_string(train_examples) + " training examples");
    }
    if (!(lr > 0.0) || !(lr_late > 0.0)) {
        throw ConfigError("learning rates must be positive");
    }
    for (double a : {alpha_stage1, alpha_stage2}) {
        if (!(a >= 0.0 && a <= 1.0)) {
            throw ConfigError("alpha must lie in [0, 1]");
        }
    }
    if (!(temperature_start > 0.0) || !(temperature_end > 0.0)) {
        throw ConfigError("temperatures must be positive");
    }
    if (threads == 0) {
        throw ConfigError("threads must be positive");
    }
}

nlohmann::json TrainConfig::to_json() const
{
    return nlohmann::json{{"epochs", epochs},
                          {"batch_size", batch_size},
                          {"n_first", n_first},
                          {"lr", lr},
                          {"lr_late", lr_late},
                          {"lr_drop_epoch", lr_drop_epoch},
                          {"alpha_stage1", alpha_stage1},
                          {"alpha_stage2", alpha_stage2},
                          {"temperature_start", temperature_start},
                          {"temperature_end", temperature_end},
                          {"seed", seed},
                          {"threads", threads}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j)
{
    if (!j.is_object()) {
        throw ConfigError("training config must be a JSON object");
    }
    TrainConfig c;
    for (const auto& [key, value] : j.items()) {
        try {
            if (key == "epochs") {
                c.epochs = value.get<std::size_t>();
            } else if (key == "batch_size") {
                c.batch_size = value.get<std::size_t>();
            } else if (key == "n_first") {
                c.n_first = value.get<std::size_t>();
            } else if (key == "lr") {
                c.lr = value.get<double>();
            } else if (key == "lr_late") {
                c.lr_late = value.get<double>();
            } else if (key == "lr_drop_epoch") {
                c.lr_drop_epoch = value.get<std::size_t>();
            } else if (key == "alpha_stage1") {
                c.alpha_stage1 = value.get<double>();
            } else if (key == "alpha_stage2") {
                c.alpha_stage2 = value.get<double>();
            } else if (key == "temperature_start") {
                c.temperature_start = value.get<double>();
            } else if (key == "temperature_end") {
                c.temperature_end = value.get<double>();
            } else if (key == "seed") {
                c.seed = value.get<std::uint64_t>();
            } else if (key == "threads") {
                c.threads = value.get<std::size_t>();
            } else {
                throw ConfigError("unknown training key '" + key + "'");
            }
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("training key '" + key + "': " + e.what());
        }
    }
    return c;
}

LossBreakdown evaluate_loss(const Architecture& arch, const nn::ParameterSet& params,
                            const std::vector<Example>& examples, double temperature)
{
    LossBreakdown out;
    for (const auto& group : make_groups(examples, arch.n_ue)) {
        nn::Tape tape;
        nn::Binding bind(tape, params, [](const std::string&) { return false; });
        const GroupGraph g = build_group_graph(arch, bind, group, 0.0, temperature);
        out.loss1 += tape.value(g.loss1)[0];
        out.loss2 += tape.value(g.loss2)[0];
        for (std::size_t u = 0; u < group.size(); ++u) {
            out.per_ue.push_back(squared_distance(tape.value(g.final[u]), nn::complex_to_tensor(group[u]->h_bs)));
        }
    }
    return out;
}

Evaluation evaluate_model(const Architecture& arch, const nn::ParameterSet& params,
                          const std::vector<Example>& examples, const InferenceOptions& options)
{
    const auto start = std::chrono::steady_clock::now();
    Evaluation out;
    const auto groups = make_groups(examples, arch.n_ue);
    if (groups.empty()) {
        throw ConfigError("evaluation needs at least one group of " + std::to_string(arch.n_ue) + " UEs");
    }
    std::size_t index = 0;
    for (const auto& group : groups) {
        InferenceOptions o = options;
        o.seed = splitmix64(options.seed ^ (0x9E3779B97F4A7C15ULL * ++index));
        GroupEstimate est = infer_group(arch, params, group, o);
        for (std::size_t u = 0; u < group.size(); ++u) {
            out.estimates.push_back(std::move(est.final[u]));
            out.truths.push_back(group[u]->h_bs);
        }
    }
    out.nmse_db = recovery::nmse_db(out.estimates, out.truths);
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
}

ModelBundle train_two_stage(const Architecture& arch, const std::vector<Example>& train,
                            const std::vector<Example>& val, const TrainConfig& config, const ProgressFn& progress)
{
    arch.validate();
    config.validate(train.size(), arch.n_ue);
    const auto groups = make_groups(train, arch.n_ue);
    const std::size_t groups_per_batch = std::max<std::size_t>(1, config.batch_size / arch.n_ue);
    const bool has_stage1 = arch.kind != ModelKind::bsdualnet0;

    ModelBundle bundle;
    bundle.arch = arch;
    bundle.params = init_parameters(arch, config.seed);
    nn::AdamState adam;
    adam.config = config.adam;

    const std::size_t train_ues = groups.size() * arch.n_ue;
    auto record = [&](HistoryRow row, const nn::ParameterSet& params) {
        row.val_nmse_db = evaluate_model(arch, params, val).nmse_db;
        if (bundle.history.empty() || row.val_nmse_db < bundle.history[bundle.best_epoch].val_nmse_db) {
            bundle.best_epoch = bundle.history.size();
            bundle.params = params;
        }
        bundle.history.push_back(row);
        if (progress) {
            progress(row, params);
        }
    };

    nn::ParameterSet params = bundle.params;
    {
        const LossBreakdown l0 = evaluate_loss(arch, params, train, config.temperature_start);
        record(HistoryRow{0, l0.loss1 / static_cast<double>(train_ues), l0.loss2 / static_cast<double>(train_ues), 0.0},
               params);
    }

    std::vector<std::size_t> order(groups.size());
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        const bool stage1 = has_stage1 && epoch <= config.n_first;
        const double alpha = !has_stage1 ? 0.0 : (stage1 ? config.alpha_stage1 : config.alpha_stage2);
        double temperature = config.temperature_end;
        if (stage1 && config.n_first > 1) {
            temperature = config.temperature_start + (config.temperature_end - config.temperature_start) *
                                                         static_cast<double>(epoch - 1) /
                                                         static_cast<double>(config.n_first - 1);
        }
        const double lr = epoch > config.lr_drop_epoch ? config.lr_late : config.lr;
        nn::TrainablePredicate trainable;
        if (stage1) {
            trainable = [](const std::string& name) { return !is_combining(name); };
        }

        std::iota(order.begin(), order.end(), std::size_t{0});
        std::mt19937_64 shuffle_rng = derive_rng(config.seed, 0x53485546, epoch);
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        double loss1 = 0.0;
        double loss2 = 0.0;
        for (std::size_t begin = 0; begin < order.size(); begin += groups_per_batch) {
            const std::size_t count = std::min(groups_per_batch, order.size() - begin);
            std::vector<nn::ParameterSet> grads(count);
            std::vector<double> l1(count);
            std::vector<double> l2(count);
            parallel_chunks(count, config.threads, [&](std::size_t, std::size_t lo, std::size_t hi) {
                for (std::size_t i = lo; i < hi; ++i) {
                    nn::Tape tape;
                    nn::Binding bind(tape, params, trainable);
                    const GroupGraph g = build_group_graph(arch, bind, groups[order[begin + i]], alpha, temperature);
                    tape.backward(g.loss);
                    grads[i] = bind.gradients();
                    l1[i] = tape.value(g.loss1)[0];
                    l2[i] = tape.value(g.loss2)[0];
                }
            });
            nn::ParameterSet total = std::move(grads[0]);
            for (std::size_t i = 1; i < count; ++i) {
                accumulate(total, grads[i]);
            }
            const double inv = 1.0 / static_cast<double>(count * arch.n_ue);
            for (auto& e : total) {
                for (auto& x : e.value.data()) {
                    x *= inv;
                }
            }
            for (std::size_t i = 0; i < count; ++i) {
                loss1 += l1[i];
                loss2 += l2[i];
            }
            if (!std::isfinite(loss1) || !std::isfinite(loss2)) {
                throw TrainingError("non-finite training loss at epoch " + std::to_string(epoch));
            }
            try {
                nn::adam_step(params, total, adam, lr, trainable);
            } catch (const TrainingError& e) {
                throw TrainingError("epoch " + std::to_string(epoch) + ": " + e.what());
            }
        }
        record(HistoryRow{epoch, loss1 / static_cast<double>(train_ues), loss2 / static_cast<double>(train_ues), 0.0},
               params);
    }
    return bundle;
}

ModelBundle train_two_stage(const Architecture& arch, const std::vector<channel::ChannelSample>& dataset,
                            const channel::UpaGeometry& geometry, const TrainConfig& config,
                            std::size_t rbs_per_sample)
{
    const Split split = split_counts(dataset.size());
    const beamspace::ObmMatrix obm = beamspace::build_obm(geometry);
    const auto first = dataset.begin();
    const std::vector<channel::ChannelSample> train_s(first, first + static_cast<long>(split.train));
    const std::vector<channel::ChannelSample> val_s(first + static_cast<long>(split.train),
                                                    first + static_cast<long>(split.train + split.val));
    return train_two_stage(arch, make_examples(train_s, obm, arch, rbs_per_sample),
                           make_examples(val_s, obm, arch, rbs_per_sample), config);
}

}  // namespace bsfb::models
