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

// The four learned CSI-acquisition pipelines, their training loop and the
// classical baselines they are compared against.
//
// Beam-domain grids are tensors [N_V, N_H, C]: flat spatial index
// q * N_H + k equals the beam index, so a complex beam vector [N_b, 1, 2]
// reshapes to [N_V, N_H, 2] without reordering.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "bsfb/airlink/airlink.hpp"
#include "bsfb/beamspace/beamspace.hpp"
#include "bsfb/channel/channel.hpp"
#include "bsfb/numerics/adam.hpp"
#include "bsfb/numerics/layers.hpp"

namespace bsfb::models {

enum class ModelKind { bsdualnet0, bsdualnet, bsdualnet_mn, bsdualnet_fr };

std::string model_kind_name(ModelKind kind);
// Accepts the names produced above; ConfigError otherwise.
ModelKind parse_model_kind(const std::string& name);

struct Architecture {
    ModelKind kind = ModelKind::bsdualnet_mn;
    std::size_t n_h = 8;
    std::size_t n_v = 4;
    // RBs seen by one example: 1 for the per-RB models, K for the FR model.
    std::size_t k_rbs = 1;
    std::size_t l = 8;
    std::size_t n_ue = 1;
    int bits = 8;
    std::size_t fr = 1;
    std::size_t br = 1;
    double cr = 1.0;
    std::size_t residual_blocks = 5;

    std::size_t n_b() const noexcept { return n_h * n_v; }
    // Pilot-bearing RBs per example (FR model only).
    std::size_t pilot_rbs() const noexcept { return (k_rbs + fr - 1) / fr; }
    // ceil(2 L K / (CR FR)) real codeword elements (FR model only).
    std::size_t codeword_length() const;
    // Real values fed back per UE.
    std::size_t feedback_values() const;
    double cr_eff() const noexcept { return static_cast<double>(br * fr) * cr; }

    void validate() const;
    nlohmann::json to_json() const;
    static Architecture from_json(const nlohmann::json& j);

    // The per-RB models with their L derived from BR; the FR model from
    // (K, FR, BR, CR).
    static Architecture per_rb(ModelKind kind, std::size_t n_h, std::size_t n_v, std::size_t l, std::size_t n_ue = 1,
                               int bits = 8);
    static Architecture frequency_reduced(std::size_t n_h, std::size_t n_v, std::size_t k_rbs, std::size_t fr,
                                          std::size_t br, double cr, std::size_t n_ue = 1, int bits = 8);
};

/// Layer lists of every sub-network. Parameter prefixes: "bm." beam merging,
/// "re." recovery, "c." combining, "enc."/"dec." frequency compression.
struct NetworkLayout {
    std::vector<nn::LayerSpec> merging;
    std::vector<nn::LayerSpec> recovery;
    std::vector<nn::LayerSpec> combining;
    std::vector<nn::LayerSpec> encoder;
    std::vector<nn::LayerSpec> decoder;
};

NetworkLayout network_layout(const Architecture& arch);
nn::ParameterSet init_parameters(const Architecture& arch, std::uint64_t seed);

struct Complexity {
    std::size_t params = 0;
    std::size_t macs = 0;
};

Complexity count_complexity(const std::vector<nn::LayerSpec>& layers);
Complexity count_complexity(const Architecture& arch);

/// One UE's channel at the RBs an example covers.
struct Example {
    // Beam-domain DL CSI, N_b x k_rbs.
    Eigen::MatrixXcd h_bs;
    // |B^T h_UL|, N_b x k_rbs.
    Eigen::MatrixXd ul_mag;
};

// Per-RB models: `rbs_per_sample` examples per sample at RBs spaced K /
// rbs_per_sample apart. FR model (arch.k_rbs > 1): one example holding all K.
std::vector<Example> make_examples(const std::vector<channel::ChannelSample>& samples,
                                   const beamspace::ObmMatrix& obm, const Architecture& arch,
                                   std::size_t rbs_per_sample = 1);

struct Split {
    std::size_t train = 0;
    std::size_t val = 0;
    std::size_t test = 0;
};

// 57,143 : 28,571 : remainder, scaled to `count`.
Split split_counts(std::size_t count);

/// Training-graph outputs for one group of n_ue UEs sharing one T.
struct GroupGraph {
    nn::Var loss1;
    nn::Var loss2;
    nn::Var loss;
    std::vector<nn::Var> initial;
    std::vector<nn::Var> final;
    nn::Var t;
};

// Differentiable pipeline with the soft quantizer at `temperature`.
GroupGraph build_group_graph(const Architecture& arch, const nn::Binding& bind,
                             const std::vector<const Example*>& group, double alpha, double temperature);

struct InferenceOptions {
    double noise_std = 0.0;
    std::uint64_t seed = 0;
};

/// Hard-quantized evaluation of one group through the air-link model.
struct GroupEstimate {
    std::vector<Eigen::MatrixXcd> initial;
    std::vector<Eigen::MatrixXcd> final;
    std::optional<airlink::MergingMatrix> t;
};

GroupEstimate infer_group(const Architecture& arch, const nn::ParameterSet& params,
                          const std::vector<const Example*>& group, const InferenceOptions& options = {});

// Beam merging network alone: T for the given UL magnitude stack.
airlink::MergingMatrix beam_merging_forward(const Architecture& arch, const nn::ParameterSet& params,
                                            const std::vector<const Example*>& group);

struct TrainConfig {
    std::size_t epochs = 300;
    // UEs per optimizer step.
    std::size_t batch_size = 200;
    std::size_t n_first = 30;
    double lr = 1e-3;
    double lr_late = 1e-4;
    std::size_t lr_drop_epoch = 100;
    double alpha_stage1 = 1.0;
    double alpha_stage2 = 0.1;
    double temperature_start = 5.0;
    double temperature_end = 100.0;
    std::uint64_t seed = 1;
    std::size_t threads = 1;
    nn::AdamConfig adam;

    void validate(std::size_t train_examples, std::size_t n_ue) const;
    nlohmann::json to_json() const;
    static TrainConfig from_json(const nlohmann::json& j);
};

struct HistoryRow {
    std::size_t epoch = 0;
    double loss1 = 0.0;
    double loss2 = 0.0;
    double val_nmse_db = 0.0;
};

struct ModelBundle {
    Architecture arch;
    nn::ParameterSet params;
    std::vector<HistoryRow> history;
    std::size_t best_epoch = 0;
};

Complexity count_complexity(const ModelBundle& bundle);

// Called after every epoch with the row just recorded and the parameters at
// the end of that epoch.
using ProgressFn = std::function<void(const HistoryRow&, const nn::ParameterSet&)>;

// Stage 1 (epochs 1..n_first): alpha = alpha_stage1, combining frozen,
// temperature annealed linearly. Stage 2: alpha = alpha_stage2, everything
// trainable. BSdualNet0 has no stage 1 (nothing trainable precedes its
// combining network) and trains on loss2 throughout. Returns the parameters
// of the epoch with the best validation NMSE; row 0 of the history is the
// untrained model. TrainingError on a non-finite loss, naming the epoch.
ModelBundle train_two_stage(const Architecture& arch, const std::vector<Example>& train,
                            const std::vector<Example>& val, const TrainConfig& config,
                            const ProgressFn& progress = {});

// Splits the samples, builds examples and trains.
ModelBundle train_two_stage(const Architecture& arch, const std::vector<channel::ChannelSample>& dataset,
                            const channel::UpaGeometry& geometry, const TrainConfig& config,
                            std::size_t rbs_per_sample = 1);

struct LossBreakdown {
    double loss1 = 0.0;
    double loss2 = 0.0;
    // loss2 term of every UE in example order.
    std::vector<double> per_ue;
};

// Sums of squared Frobenius errors over all UEs, evaluated on the training
// graph (soft quantizer) without updating anything.
LossBreakdown evaluate_loss(const Architecture& arch, const nn::ParameterSet& params,
                            const std::vector<Example>& examples, double temperature);

struct Evaluation {
    std::vector<Eigen::MatrixXcd> estimates;
    std::vector<Eigen::MatrixXcd> truths;
    double nmse_db = 0.0;
    double seconds = 0.0;
};

Evaluation evaluate_model(const Architecture& arch, const nn::ParameterSet& params,
                          const std::vector<Example>& examples, const InferenceOptions& options = {});

enum class Baseline { bs_ul, bs_dl, ista_fixed, ista_continuation };

std::string baseline_name(Baseline b);
Baseline parse_baseline(const std::string& name);

// Per-RB baselines on examples with one RB each. BS-UL/BS-DL feed back the
// quantized responses of the top-L UL/DL beams; the ISTA baselines use one
// fixed Gaussian T drawn from `seed`.
Evaluation evaluate_baseline(Baseline baseline, const std::vector<Example>& examples, std::size_t l, int bits,
                             std::uint64_t seed = 7);

// Bundle files: <stem>.bsnn parameters, <stem>.json architecture and
// training summary, <stem>.history.csv.
void save_bundle(const std::filesystem::path& stem, const ModelBundle& bundle);
ModelBundle load_bundle(const std::filesystem::path& stem);
void write_history_csv(std::ostream& out, const std::vector<HistoryRow>& history);

}  // namespace bsfb::models
