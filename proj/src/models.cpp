#include "milr/models.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "milr/rng.hpp"

namespace milr {

namespace {

const char* kCheckpointMagic = "MILR1";

struct VariantInfo {
    Variant variant;
    const char* token;
    const char* display;
};

constexpr VariantInfo kVariants[] = {
    {Variant::MeanPool, "mean-pool", "MEAN-POOL"},
    {Variant::MaxPool, "max-pool", "MAX-POOL"},
    {Variant::MeanPoolIns, "mean-pool-ins", "MEAN-POOL-INS"},
    {Variant::MaxPoolIns, "max-pool-ins", "MAX-POOL-INS"},
    {Variant::Abmil, "abmil", "ABMIL"},
    {Variant::MultiHead, "multihead", "MULTIHEAD"},
};

std::vector<double> minmax_normalize(std::vector<double> v) {
    if (v.empty()) return v;
    const auto [mn, mx] = std::minmax_element(v.begin(), v.end());
    const double lo = *mn, hi = *mx;
    if (hi == lo) {
        std::fill(v.begin(), v.end(), 0.5);
        return v;
    }
    for (double& x : v) x = (x - lo) / (hi - lo);
    return v;
}

std::size_t argmax_row(const Tensor2& row1xc) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < row1xc.cols; ++c) {
        if (row1xc(0, c) > row1xc(0, best)) best = c;
    }
    return best;
}

}  // namespace

std::string variant_name(Variant v) {
    for (const auto& info : kVariants) {
        if (info.variant == v) return info.display;
    }
    return "?";
}

std::string variant_token(Variant v) {
    for (const auto& info : kVariants) {
        if (info.variant == v) return info.token;
    }
    return "?";
}

Variant parse_variant(std::string_view name) {
    for (const auto& info : kVariants) {
        if (name == info.token || name == info.display) return info.variant;
    }
    std::string valid;
    for (const auto& info : kVariants) {
        if (!valid.empty()) valid += ", ";
        valid += info.token;
    }
    throw std::invalid_argument("unknown variant '" + std::string(name) +
                                "' (valid: " + valid + ")");
}

std::string scoring_name(ScoringMode m) {
    switch (m) {
        case ScoringMode::Att: return "att";
        case ScoringMode::Patch: return "patch";
        case ScoringMode::MaxSel: return "maxsel";
    }
    return "?";
}

ScoringMode parse_scoring(std::string_view name) {
    if (name == "att" || name == "ATT") return ScoringMode::Att;
    if (name == "patch" || name == "PATCH") return ScoringMode::Patch;
    if (name == "maxsel" || name == "MAXSEL") return ScoringMode::MaxSel;
    throw std::invalid_argument("unknown scoring mode '" + std::string(name) +
                                "' (valid: att, patch, maxsel)");
}

std::vector<ScoringMode> valid_scorings(const ModelConfig& config) {
    switch (config.variant) {
        case Variant::MeanPool: return {};
        case Variant::MaxPool: return {ScoringMode::MaxSel};
        case Variant::MeanPoolIns: return {ScoringMode::Patch};
        case Variant::MaxPoolIns: return {ScoringMode::MaxSel, ScoringMode::Patch};
        case Variant::Abmil:
        case Variant::MultiHead:
            if (config.additive) return {ScoringMode::Att, ScoringMode::Patch};
            return {ScoringMode::Att};
    }
    return {};
}

ScoringMode default_scoring(Variant variant, bool additive) {
    (void)additive;
    switch (variant) {
        case Variant::MaxPool:
        case Variant::MaxPoolIns: return ScoringMode::MaxSel;
        case Variant::MeanPoolIns: return ScoringMode::Patch;
        default: return ScoringMode::Att;
    }
}

void ModelConfig::validate() const {
    if (input_dim == 0 || embed_dim == 0) {
        throw std::invalid_argument("model config: zero feature/embedding width");
    }
    if (num_classes < 2) {
        throw std::invalid_argument("model config: num_classes must be >= 2");
    }
    if (num_heads == 0) {
        throw std::invalid_argument("model config: num_heads must be >= 1");
    }
    if (variant == Variant::MultiHead && embed_dim % num_heads != 0) {
        throw std::invalid_argument(
            "model config: embed_dim " + std::to_string(embed_dim) +
            " not divisible by num_heads " + std::to_string(num_heads));
    }
    if (has_attention() && attn_hidden == 0) {
        throw std::invalid_argument("model config: attn_hidden must be >= 1");
    }
    if (additive && !has_attention()) {
        throw std::invalid_argument(
            "model config: additive requires an attention variant (abmil, multihead)");
    }
    if (variant != Variant::MeanPool) {
        const auto valid = valid_scorings(*this);
        if (std::find(valid.begin(), valid.end(), scoring) == valid.end()) {
            throw std::invalid_argument("model config: scoring mode '" +
                                        scoring_name(scoring) + "' not valid for " +
                                        variant_name(variant));
        }
    }
}

Tensor2& MilModel::param(std::string_view name) {
    for (auto& p : params) {
        if (p.name == name) return p.value;
    }
    throw std::invalid_argument("no parameter named '" + std::string(name) + "'");
}

const Tensor2& MilModel::param(std::string_view name) const {
    return const_cast<MilModel*>(this)->param(name);
}

std::size_t MilModel::n_scalars() const {
    std::size_t n = 0;
    for (const auto& p : params) n += p.value.size();
    return n;
}

std::string MilModel::layer_of(std::string_view param_name) {
    const auto dot = param_name.find('.');
    return std::string(param_name.substr(0, dot));
}

MilModel build_model(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    Rng rng(seed);
    MilModel model{config, {}};
    auto add_weight = [&](const std::string& name, std::size_t r, std::size_t c,
                          std::size_t fan_in) {
        Tensor2 t(r, c);
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (double& v : t.data) v = rng.uniform(-bound, bound);
        model.params.push_back({name, std::move(t)});
    };
    auto add_bias = [&](const std::string& name, std::size_t c) {
        model.params.push_back({name, Tensor2(1, c, 0.0)});
    };

    add_weight("embed.w", config.input_dim, config.embed_dim, config.input_dim);
    add_bias("embed.b", config.embed_dim);
    if (config.has_attention()) {
        const std::size_t S = config.head_width();
        const std::size_t K = config.attn_hidden;
        for (std::size_t k = 0; k < config.heads(); ++k) {
            const std::string p = "attn" + std::to_string(k) + ".";
            add_weight(p + "v", S, K, S);
            add_bias(p + "v_b", K);
            add_weight(p + "u", S, K, S);
            add_bias(p + "u_b", K);
            add_weight(p + "w", K, 1, K);
            add_bias(p + "w_b", 1);
        }
    }
    add_weight("classifier.w", config.embed_dim, config.num_classes, config.embed_dim);
    add_bias("classifier.b", config.num_classes);

    if (model.n_scalars() != count_params(config)) {
        throw std::logic_error("build_model: parameter count mismatch");
    }
    return model;
}

std::size_t count_params(const ModelConfig& config) {
    config.validate();
    const std::size_t D = config.embed_dim;
    const std::size_t C = config.num_classes;
    std::size_t n = config.input_dim * D + D;  // embedding
    n += D * C + C;                            // classifier
    if (config.has_attention()) {
        const std::size_t S = config.head_width();
        const std::size_t K = config.attn_hidden;
        n += config.heads() * (2 * (S * K + K) + K + 1);  // gated attention
    }
    return n;
}

std::uint64_t count_flops(const ModelConfig& config, std::size_t n_instances) {
    config.validate();
    if (n_instances == 0) {
        throw std::invalid_argument("count_flops: n_instances must be >= 1");
    }
    const std::uint64_t n = n_instances;
    const std::uint64_t D = config.embed_dim;
    const std::uint64_t C = config.num_classes;
    std::uint64_t macs = n * config.input_dim * D;
    if (config.has_attention()) {
        const std::uint64_t S = config.head_width();
        const std::uint64_t K = config.attn_hidden;
        macs += n * config.heads() * (2 * S * K + K);
    }
    const bool per_instance_classifier =
        config.additive || config.variant == Variant::MeanPoolIns ||
        config.variant == Variant::MaxPoolIns;
    macs += (per_instance_classifier ? n : 1) * D * C;
    return macs;
}

ForwardGraph build_graph(const MilModel& model, const FeatureBag& bag,
                         std::optional<std::size_t> label) {
    const ModelConfig& config = model.config;
    config.validate();
    const std::size_t n = bag.n_instances();
    if (n == 0) throw EmptyBagError("forward: bag '" + bag.slide_id + "' is empty");
    if (bag.features.cols != config.input_dim) {
        throw ShapeError("forward: bag feature width " +
                         std::to_string(bag.features.cols) + " != model input_dim " +
                         std::to_string(config.input_dim));
    }
    if (label && *label >= config.num_classes) {
        throw std::invalid_argument("forward: label " + std::to_string(*label) +
                                    " out of range");
    }

    ForwardGraph g;
    Tape& tape = g.tape;
    const NodeId x = tape.input(bag.features);
    g.param_nodes.reserve(model.params.size());
    auto pid = [&](std::string_view name) -> NodeId {
        for (std::size_t i = 0; i < model.params.size(); ++i) {
            if (model.params[i].name == name) return g.param_nodes[i];
        }
        throw std::logic_error("missing parameter node");
    };
    for (const auto& p : model.params) g.param_nodes.push_back(tape.input(p.value));

    const NodeId h =
        tape.relu(tape.add_rowvec(tape.matmul(x, pid("embed.w")), pid("embed.b")));

    const NodeId cw = pid("classifier.w");
    const NodeId cb = pid("classifier.b");
    BagOutput& out = g.output;

    switch (config.variant) {
        case Variant::MeanPool: {
            const NodeId repr = tape.colwise_mean(h);
            g.logits_node = tape.add_rowvec(tape.matmul(repr, cw), cb);
            break;
        }
        case Variant::MaxPool: {
            const NodeId repr = tape.colwise_max(h);
            g.logits_node = tape.add_rowvec(tape.matmul(repr, cw), cb);
            const auto& arg = tape.argmax_rows(repr);
            out.maxsel.assign(n, 0.0);
            for (std::size_t idx : arg) out.maxsel[idx] += 1.0;
            for (double& v : out.maxsel) v /= static_cast<double>(arg.size());
            break;
        }
        case Variant::MeanPoolIns:
        case Variant::MaxPoolIns: {
            const NodeId inst_logits = tape.add_rowvec(tape.matmul(h, cw), cb);
            const NodeId inst_probs = tape.rowwise_softmax(inst_logits);
            NodeId agg;
            if (config.variant == Variant::MeanPoolIns) {
                agg = tape.colwise_mean(inst_probs);
            } else {
                agg = tape.colwise_max(inst_probs);
                const auto& arg = tape.argmax_rows(agg);
                out.maxsel.assign(n, 0.0);
                for (std::size_t idx : arg) out.maxsel[idx] += 1.0;
                for (double& v : out.maxsel) v /= static_cast<double>(arg.size());
            }
            g.slide_probs_node = tape.rowwise_normalize(agg);
            out.instance_probs = tape.value(inst_probs);
            break;
        }
        case Variant::Abmil:
        case Variant::MultiHead: {
            const std::size_t heads = config.heads();
            const std::size_t width = config.head_width();
            std::vector<NodeId> parts;
            parts.reserve(heads);
            out.attention.assign(n, 0.0);
            for (std::size_t k = 0; k < heads; ++k) {
                const std::string p = "attn" + std::to_string(k) + ".";
                const NodeId hk = heads == 1 ? h : tape.slice_cols(h, k * width, width);
                const NodeId t = tape.tanh(
                    tape.add_rowvec(tape.matmul(hk, pid(p + "v")), pid(p + "v_b")));
                const NodeId u = tape.sigmoid(
                    tape.add_rowvec(tape.matmul(hk, pid(p + "u")), pid(p + "u_b")));
                const NodeId e = tape.add_rowvec(
                    tape.matmul(tape.hadamard(t, u), pid(p + "w")), pid(p + "w_b"));
                const NodeId attn_row = tape.rowwise_softmax(tape.transpose(e));  // 1 x N
                const Tensor2& a = tape.value(attn_row);
                for (std::size_t i = 0; i < n; ++i) {
                    out.attention[i] += a(0, i) / static_cast<double>(heads);
                }
                if (config.additive) {
                    parts.push_back(tape.scale_rows(hk, tape.transpose(attn_row)));
                } else {
                    parts.push_back(tape.matmul(attn_row, hk));
                }
            }
            const NodeId merged = parts.size() == 1 ? parts[0] : tape.concat_cols(parts);
            if (config.additive) {
                const NodeId contrib = tape.add_rowvec(tape.matmul(merged, cw), cb);
                g.logits_node = tape.colwise_sum(contrib);
                out.contributions = tape.value(contrib);
            } else {
                g.logits_node = tape.add_rowvec(tape.matmul(merged, cw), cb);
            }
            break;
        }
    }

    const bool instance_pooling = config.variant == Variant::MeanPoolIns ||
                                  config.variant == Variant::MaxPoolIns;
    if (instance_pooling) {
        out.probabilities = tape.value(g.slide_probs_node);
        out.logits = out.probabilities;
        for (double& v : out.logits.data) v = std::log(std::max(v, 1e-300));
        if (label) g.loss_node = tape.nll_from_probs(g.slide_probs_node, *label);
    } else {
        out.logits = tape.value(g.logits_node);
        const NodeId probs = tape.rowwise_softmax(g.logits_node);
        g.slide_probs_node = probs;
        out.probabilities = tape.value(probs);
        if (label) g.loss_node = tape.softmax_cross_entropy(g.logits_node, *label);
    }
    out.predicted_class = argmax_row(out.probabilities);
    if (!valid_scorings(config).empty()) {
        out.patch_scores = scores_for_mode(config, out, config.scoring);
    }
    return g;
}

BagOutput forward(const MilModel& model, const FeatureBag& bag) {
    return build_graph(model, bag, std::nullopt).output;
}

std::vector<double> scores_for_mode(const ModelConfig& config, const BagOutput& out,
                                    ScoringMode mode) {
    const auto valid = valid_scorings(config);
    if (std::find(valid.begin(), valid.end(), mode) == valid.end()) {
        throw UnsupportedScoringError(
            variant_name(config.variant) + (config.additive ? "-ADD" : "") +
            " does not provide '" + scoring_name(mode) + "' patch scores");
    }
    switch (mode) {
        case ScoringMode::Att:
            return out.attention;
        case ScoringMode::MaxSel:
            return out.maxsel;
        case ScoringMode::Patch: {
            std::vector<double> s;
            if (config.additive) {
                // Per-instance softmax over the contribution row.
                const Tensor2& c = out.contributions;
                s.resize(c.rows);
                for (std::size_t i = 0; i < c.rows; ++i) {
                    double m = c(i, 0);
                    for (std::size_t j = 1; j < c.cols; ++j) m = std::max(m, c(i, j));
                    double z = 0.0;
                    for (std::size_t j = 0; j < c.cols; ++j) z += std::exp(c(i, j) - m);
                    s[i] = std::exp(c(i, out.predicted_class) - m) / z;
                }
            } else {
                const Tensor2& p = out.instance_probs;
                s.resize(p.rows);
                for (std::size_t i = 0; i < p.rows; ++i) {
                    s[i] = p(i, out.predicted_class);
                }
            }
            return minmax_normalize(std::move(s));
        }
    }
    return {};
}

std::vector<double> patch_scores(const MilModel& model, const FeatureBag& bag,
                                 ScoringMode mode) {
    // Validate before paying for the forward pass.
    const auto valid = valid_scorings(model.config);
    if (std::find(valid.begin(), valid.end(), mode) == valid.end()) {
        throw UnsupportedScoringError(
            variant_name(model.config.variant) + (model.config.additive ? "-ADD" : "") +
            " does not provide '" + scoring_name(mode) + "' patch scores");
    }
    return scores_for_mode(model.config, forward(model, bag), mode);
}

// --- checkpoint io ---------------------------------------------------------

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v),
                          static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

void put_f64(std::ostream& os, double d) {
    const auto bits = std::bit_cast<std::uint64_t>(d);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t get_u32(std::istream& is, const char* what) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) {
        throw FormatError(std::string("checkpoint truncated while reading ") + what);
    }
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) |
           (static_cast<std::uint32_t>(b[3]) << 24);
}

double get_f64(std::istream& is, const char* what) {
    unsigned char b[8];
    if (!is.read(reinterpret_cast<char*>(b), 8)) {
        throw FormatError(std::string("checkpoint truncated while reading ") + what);
    }
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return std::bit_cast<double>(bits);
}

nlohmann::json config_to_json(const ModelConfig& c) {
    return {{"input_dim", c.input_dim},   {"embed_dim", c.embed_dim},
            {"attn_hidden", c.attn_hidden}, {"num_heads", c.num_heads},
            {"num_classes", c.num_classes}, {"variant", variant_token(c.variant)},
            {"additive", c.additive},       {"scoring", scoring_name(c.scoring)}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.input_dim = j.at("input_dim").get<std::size_t>();
    c.embed_dim = j.at("embed_dim").get<std::size_t>();
    c.attn_hidden = j.at("attn_hidden").get<std::size_t>();
    c.num_heads = j.at("num_heads").get<std::size_t>();
    c.num_classes = j.at("num_classes").get<std::size_t>();
    c.variant = parse_variant(j.at("variant").get<std::string>());
    c.additive = j.at("additive").get<bool>();
    c.scoring = parse_scoring(j.at("scoring").get<std::string>());
    return c;
}

}  // namespace

void save_checkpoint(const MilModel& model, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot open checkpoint for writing: " + path);
    os.write(kCheckpointMagic, 5);
    const std::string cfg = config_to_json(model.config).dump();
    put_u32(os, static_cast<std::uint32_t>(cfg.size()));
    os.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
    for (const auto& p : model.params) {
        put_u32(os, static_cast<std::uint32_t>(p.name.size()));
        os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
        put_u32(os, static_cast<std::uint32_t>(p.value.rows));
        put_u32(os, static_cast<std::uint32_t>(p.value.cols));
        for (double v : p.value.data) put_f64(os, v);
    }
    if (!os) throw FormatError("checkpoint write failed: " + path);
}

MilModel load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open checkpoint: " + path);
    char magic[5];
    if (!is.read(magic, 5) || std::memcmp(magic, kCheckpointMagic, 5) != 0) {
        throw FormatError("bad checkpoint magic at offset 0: " + path);
    }
    const std::uint32_t cfg_len = get_u32(is, "config length");
    std::string cfg(cfg_len, '\0');
    if (!is.read(cfg.data(), cfg_len)) {
        throw FormatError("checkpoint truncated while reading config: " + path);
    }
    MilModel model;
    try {
        model.config = config_from_json(nlohmann::json::parse(cfg));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("checkpoint config is not valid JSON: " + std::string(e.what()));
    }
    while (is.peek() != std::char_traits<char>::eof()) {
        const std::uint32_t name_len = get_u32(is, "parameter name length");
        std::string name(name_len, '\0');
        if (!is.read(name.data(), name_len)) {
            throw FormatError("checkpoint truncated while reading parameter name");
        }
        const std::uint32_t rows = get_u32(is, "rows");
        const std::uint32_t cols = get_u32(is, "cols");
        Tensor2 t(rows, cols);
        for (double& v : t.data) v = get_f64(is, "parameter data");
        model.params.push_back({std::move(name), std::move(t)});
    }
    if (model.n_scalars() != count_params(model.config)) {
        throw FormatError("checkpoint parameter count does not match its config");
    }
    return model;
}

}  // namespace milr
