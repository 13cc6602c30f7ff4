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

#include "bsfb/errors.hpp"
#include "bsfb/models/models.hpp"
#include "bsfb/rng.hpp"

namespace bsfb::models {

namespace {

const std::vector<std::size_t> kStack = {16, 8, 4, 2};
const std::vector<std::size_t> kBlockChannels2d = {16, 8, 4, 2};
const std::vector<std::size_t> kBlockChannelsFr = {16, 8, 4, 2, 1};

bool is_fr(const Architecture& a)
{
    return a.kind == ModelKind::bsdualnet_fr;
}

std::vector<nn::LayerSpec> merging_layers(const Architecture& a)
{
    const std::size_t n_b = a.n_b();
    std::vector<std::size_t> spatial = {a.n_v, a.n_h};
    if (is_fr(a)) {
        spatial.push_back(a.k_rbs);
    }
    auto layers = nn::conv_stack("bm", spatial, a.n_ue, kStack, false);
    const std::size_t flat = 2 * n_b * (is_fr(a) ? a.k_rbs : 1);
    layers.push_back({nn::LayerKind::dense, "bm.fc", {flat, 2 * n_b * a.l}});
    layers.push_back({nn::LayerKind::reshape, "bm.shape", {n_b, a.l, 2}});
    return layers;
}

std::vector<nn::LayerSpec> recovery_layers(const Architecture& a)
{
    std::vector<nn::LayerSpec> layers;
    layers.push_back({nn::LayerKind::dense, "re.fc", {2 * a.l, 2 * a.n_b()}});
    layers.push_back({nn::LayerKind::reshape, "re.shape", {a.n_v, a.n_h, 2}});
    auto convs = nn::conv_stack("re", {a.n_v, a.n_h}, 2, kStack, true);
    layers.insert(layers.end(), convs.begin(), convs.end());
    return layers;
}

std::vector<nn::LayerSpec> combining_layers(const Architecture& a)
{
    std::vector<nn::LayerSpec> layers;
    for (std::size_t i = 0; i < a.residual_blocks; ++i) {
        std::vector<std::size_t> sizes;
        std::vector<std::size_t> channels;
        if (is_fr(a)) {
            // Magnitude-only refinement with the UL magnitude as side input.
            sizes = {2, a.n_b(), a.k_rbs, 1, 1};
            channels = kBlockChannelsFr;
        } else {
            sizes = {2, a.n_v, a.n_h, 2, 1};
            channels = kBlockChannels2d;
        }
        sizes.insert(sizes.end(), channels.begin(), channels.end());
        layers.push_back({nn::LayerKind::residual_block, "c.block" + std::to_string(i), std::move(sizes)});
    }
    return layers;
}

std::vector<nn::LayerSpec> encoder_layers(const Architecture& a)
{
    const std::size_t p = a.pilot_rbs();
    auto layers = nn::conv_stack("enc", {a.l, p}, 2, kStack, false);
    layers.push_back({nn::LayerKind::dense, "enc.fc", {2 * a.l * p, a.codeword_length()}});
    layers.push_back({nn::LayerKind::tanh, "enc.squash", {}});
    layers.push_back({nn::LayerKind::soft_quantize, "enc.quant", {static_cast<std::size_t>(a.bits)}});
    return layers;
}

std::vector<nn::LayerSpec> decoder_layers(const Architecture& a)
{
    std::vector<nn::LayerSpec> layers;
    layers.push_back({nn::LayerKind::dense, "dec.fc", {a.codeword_length(), 2 * a.n_b() * a.k_rbs}});
    layers.push_back({nn::LayerKind::reshape, "dec.shape", {a.n_b(), a.k_rbs, 2}});
    auto convs = nn::conv_stack("dec", {a.n_b(), a.k_rbs}, 2, kStack, true);
    layers.insert(layers.end(), convs.begin(), convs.end());
    return layers;
}

}  // namespace

std::string model_kind_name(ModelKind kind)
{
    switch (kind) {
    case ModelKind::bsdualnet0:
        return "bsdualnet0";
    case ModelKind::bsdualnet:
        return "bsdualnet";
    case ModelKind::bsdualnet_mn:
        return "bsdualnet-mn";
    case ModelKind::bsdualnet_fr:
        return "bsdualnet-fr";
    }
    return "unknown";
}

ModelKind parse_model_kind(const std::string& name)
{
    for (ModelKind k : {ModelKind::bsdualnet0, ModelKind::bsdualnet, ModelKind::bsdualnet_mn, ModelKind::bsdualnet_fr}) {
        if (model_kind_name(k) == name) {
            return k;
        }
    }
    throw ConfigError("unknown model kind '" + name + "'");
}

std::size_t Architecture::codeword_length() const
{
    if (cr < 1.0 || !std::isfinite(cr)) {
        throw ConfigError("CR must be a finite value >= 1, got " + std::to_string(cr));
    }
    const double exact = 2.0 * static_cast<double>(l * k_rbs) / (cr * static_cast<double>(fr));
    // Guard against 2LK/(CR FR) landing a rounding error above an integer.
    const auto n = static_cast<std::size_t>(std::ceil(exact - 1e-9));
    if (n == 0) {
        throw ConfigError("CR = " + std::to_string(cr) + " leaves an empty codeword");
    }
    return n;
}

std::size_t Architecture::feedback_values() const
{
    return is_fr(*this) ? codeword_length() : 2 * l;
}

void Architecture::validate() const
{
    if (n_h == 0 || n_v == 0) {
        throw ConfigError("array dimensions must be positive");
    }
    if (l == 0 || l > n_b()) {
        throw ConfigError("L must lie in [1, N_b], got " + std::to_string(l));
    }
    if (n_ue == 0) {
        throw ConfigError("UE count must be positive");
    }
    if (bits < 1 || bits > 16) {
        throw ConfigError("bits must lie in [1, 16]");
    }
    if (fr == 0 || br == 0) {
        throw ConfigError("FR and BR must be positive");
    }
    if (residual_blocks == 0) {
        throw ConfigError("at least one residual block is required");
    }
    if (is_fr(*this)) {
        if (k_rbs == 0) {
            throw ConfigError("the FR model needs K >= 1");
        }
        codeword_length();
    } else if (k_rbs != 1) {
        throw ConfigError("per-RB models take one RB per example");
    }
}

nlohmann::json Architecture::to_json() const
{
    return nlohmann::json{{"kind", model_kind_name(kind)},
                          {"n_h", n_h},
                          {"n_v", n_v},
                          {"k_rbs", k_rbs},
                          {"l", l},
                          {"n_ue", n_ue},
                          {"bits", bits},
                          {"fr", fr},
                          {"br", br},
                          {"cr", cr},
                          {"residual_blocks", residual_blocks}};
}

Architecture Architecture::from_json(const nlohmann::json& j)
{
    Architecture a;
    try {
        a.kind = parse_model_kind(j.at("kind").get<std::string>());
        a.n_h = j.at("n_h").get<std::size_t>();
        a.n_v = j.at("n_v").get<std::size_t>();
        a.k_rbs = j.at("k_rbs").get<std::size_t>();
        a.l = j.at("l").get<std::size_t>();
        a.n_ue = j.at("n_ue").get<std::size_t>();
        a.bits = j.at("bits").get<int>();
        a.fr = j.at("fr").get<std::size_t>();
        a.br = j.at("br").get<std::size_t>();
        a.cr = j.at("cr").get<double>();
        a.residual_blocks = j.at("residual_blocks").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("architecture descriptor: ") + e.what());
    }
    a.validate();
    return a;
}

Architecture Architecture::per_rb(ModelKind kind, std::size_t n_h, std::size_t n_v, std::size_t l, std::size_t n_ue,
                                  int bits)
{
    if (kind == ModelKind::bsdualnet_fr) {
        throw ConfigError("use Architecture::frequency_reduced for the FR model");
    }
    Architecture a;
    a.kind = kind;
    a.n_h = n_h;
    a.n_v = n_v;
    a.l = l;
    a.n_ue = n_ue;
    a.bits = bits;
    a.br = l == 0 ? 1 : static_cast<std::size_t>(std::llround(static_cast<double>(n_h * n_v) / static_cast<double>(l)));
    a.validate();
    return a;
}

Architecture Architecture::frequency_reduced(std::size_t n_h, std::size_t n_v, std::size_t k_rbs, std::size_t fr,
                                             std::size_t br, double cr, std::size_t n_ue, int bits)
{
    const airlink::PilotPlacement p = airlink::make_placement(k_rbs, fr, br, n_h * n_v);
    Architecture a;
    a.kind = ModelKind::bsdualnet_fr;
    a.n_h = n_h;
    a.n_v = n_v;
    a.k_rbs = k_rbs;
    a.l = p.l;
    a.n_ue = n_ue;
    a.bits = bits;
    a.fr = fr;
    a.br = br;
    a.cr = cr;
    a.validate();
    return a;
}

NetworkLayout network_layout(const Architecture& arch)
{
    arch.validate();
    NetworkLayout out;
    if (arch.kind != ModelKind::bsdualnet0) {
        out.merging = merging_layers(arch);
    }
    if (arch.kind == ModelKind::bsdualnet) {
        out.recovery = recovery_layers(arch);
    }
    if (arch.kind == ModelKind::bsdualnet_fr) {
        out.encoder = encoder_layers(arch);
        out.decoder = decoder_layers(arch);
    }
    out.combining = combining_layers(arch);
    return out;
}

nn::ParameterSet init_parameters(const Architecture& arch, std::uint64_t seed)
{
    const NetworkLayout layout = network_layout(arch);
    nn::ParameterSet params;
    std::mt19937_64 rng = derive_rng(seed, 0x494E4954);
    for (const auto* part : {&layout.merging, &layout.recovery, &layout.encoder, &layout.decoder, &layout.combining}) {
        for (const auto& spec : *part) {
            nn::init_layer(spec, params, rng);
        }
    }
    return params;
}

Complexity count_complexity(const std::vector<nn::LayerSpec>& layers)
{
    Complexity c;
    for (const auto& spec : layers) {
        c.params += nn::parameter_count(spec);
        c.macs += nn::mac_count(spec);
    }
    return c;
}

Complexity count_complexity(const Architecture& arch)
{
    const NetworkLayout layout = network_layout(arch);
    Complexity total;
    for (const auto* part : {&layout.merging, &layout.recovery, &layout.encoder, &layout.decoder, &layout.combining}) {
        const Complexity c = count_complexity(*part);
        total.params += c.params;
        total.macs += c.macs;
    }
    return total;
}

Complexity count_complexity(const ModelBundle& bundle)
{
    Complexity c = count_complexity(bundle.arch);
    if (c.params != bundle.params.scalar_count()) {
        throw DimensionError("bundle holds " + std::to_string(bundle.params.scalar_count()) +
                             " parameters but its architecture implies " + std::to_string(c.params));
    }
    return c;
}

Split split_counts(std::size_t count)
{
    Split s;
    s.train = static_cast<std::size_t>(std::llround(static_cast<double>(count) * 57143.0 / 100000.0));
    s.val = static_cast<std::size_t>(std::llround(static_cast<double>(count) * 28571.0 / 100000.0));
    if (s.train + s.val > count) {
        s.val = count - s.train;
    }
    s.test = count - s.train - s.val;
    return s;
}

std::vector<Example> make_examples(const std::vector<channel::ChannelSample>& samples,
                                   const beamspace::ObmMatrix& obm, const Architecture& arch,
                                   std::size_t rbs_per_sample)
{
    std::vector<Example> out;
    if (samples.empty()) {
        return out;
    }
    const auto k = static_cast<std::size_t>(samples.front().h_dl.cols());
    const bool fr = arch.kind == ModelKind::bsdualnet_fr;
    if (fr && k != arch.k_rbs) {
        throw DimensionError("dataset has K = " + std::to_string(k) + " RBs, architecture expects " +
                             std::to_string(arch.k_rbs));
    }
    if (!fr && (rbs_per_sample == 0 || rbs_per_sample > k)) {
        throw ConfigError("rbs_per_sample must lie in [1, K]");
    }
    for (const auto& s : samples) {
        if (static_cast<std::size_t>(s.h_dl.rows()) != obm.n_b() || static_cast<std::size_t>(s.h_dl.cols()) != k) {
            throw DimensionError("sample shape does not match the dataset");
        }
        const Eigen::MatrixXcd dl = beamspace::to_beam_domain(s.h_dl, obm);
        const Eigen::MatrixXd ul = beamspace::to_beam_domain(s.h_ul, obm).cwiseAbs();
        if (fr) {
            out.push_back(Example{dl, ul});
            continue;
        }
        for (std::size_t r = 0; r < rbs_per_sample; ++r) {
            const std::size_t rb = r * k / rbs_per_sample;
            out.push_back(Example{dl.col(static_cast<Eigen::Index>(rb)), ul.col(static_cast<Eigen::Index>(rb))});
        }
    }
    return out;
}

}  // namespace bsfb::models
