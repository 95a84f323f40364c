#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "milr/feature_bag.hpp"
#include "milr/tape.hpp"
#include "milr/tensor.hpp"

namespace milr {

enum class Variant {
    MeanPool,
    MaxPool,
    MeanPoolIns,
    MaxPoolIns,
    Abmil,
    MultiHead,
};

enum class ScoringMode { Att, Patch, MaxSel };

std::string variant_name(Variant v);   // display form, e.g. "MEAN-POOL"
std::string variant_token(Variant v);  // flag form, e.g. "mean-pool"
std::string scoring_name(ScoringMode m);
Variant parse_variant(std::string_view name);  // throws listing valid names
ScoringMode parse_scoring(std::string_view name);

/// Architecture of one aggregator. Defaults follow the common
/// 1024 -> 512 -> 256 feature/embedding/attention widths.
struct ModelConfig {
    std::size_t input_dim = 1024;
    std::size_t embed_dim = 512;   // D
    std::size_t attn_hidden = 256; // K, gated-attention width
    std::size_t num_heads = 1;     // H, MultiHead only
    std::size_t num_classes = 2;
    Variant variant = Variant::Abmil;
    bool additive = false;
    ScoringMode scoring = ScoringMode::Att;  // default score used in BagOutput

    void validate() const;  // throws std::invalid_argument on bad combinations
    bool has_attention() const {
        return variant == Variant::Abmil || variant == Variant::MultiHead;
    }
    std::size_t heads() const { return variant == Variant::MultiHead ? num_heads : 1; }
    std::size_t head_width() const { return embed_dim / heads(); }
};

/// Scoring modes a variant can emit, in reporting order.
std::vector<ScoringMode> valid_scorings(const ModelConfig& config);
ScoringMode default_scoring(Variant variant, bool additive);

struct NamedParam {
    std::string name;
    Tensor2 value;
};

struct MilModel {
    ModelConfig config;
    std::vector<NamedParam> params;  // fixed construction order

    Tensor2& param(std::string_view name);
    const Tensor2& param(std::string_view name) const;
    std::size_t n_scalars() const;
    /// Layer group of a parameter ("embed", "attn0", ..., "classifier").
    static std::string layer_of(std::string_view param_name);
};

/// Parameters drawn uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)], biases
/// zero. Bit-deterministic for a given seed.
MilModel build_model(const ModelConfig& config, std::uint64_t seed);

std::size_t count_params(const ModelConfig& config);

/// Multiply-accumulate count of the dense products only (embedding,
/// attention projections, classifier applications). Nonlinearities and
/// pooling reductions are excluded from the convention.
std::uint64_t count_flops(const ModelConfig& config, std::size_t n_instances);

struct BagOutput {
    Tensor2 logits;         // 1 x C
    Tensor2 probabilities;  // 1 x C, sums to 1
    std::size_t predicted_class = 0;
    std::vector<double> patch_scores;  // scores for config.scoring

    // Raw per-mode material.
    std::vector<double> attention;      // mean over heads; attention variants
    Tensor2 instance_probs;             // N x C; instance-pooling variants
    std::vector<double> maxsel;         // selection frequencies; max variants
    Tensor2 contributions;              // N x C; additive variants
};

/// Forward graph handle for training: the tape plus the node ids needed to
/// pull parameter gradients after backward().
struct ForwardGraph {
    Tape tape;
    std::vector<NodeId> param_nodes;  // aligned with model.params
    NodeId logits_node = 0;           // logit-producing variants
    NodeId slide_probs_node = 0;
    std::optional<NodeId> loss_node;
    BagOutput output;
};

ForwardGraph build_graph(const MilModel& model, const FeatureBag& bag,
                         std::optional<std::size_t> label);

BagOutput forward(const MilModel& model, const FeatureBag& bag);

/// Final, normalized per-patch scores for one mode: ATT and MAXSEL sum to 1;
/// PATCH is min-max normalized per bag (constant vectors map to 0.5).
std::vector<double> patch_scores(const MilModel& model, const FeatureBag& bag,
                                 ScoringMode mode);
std::vector<double> scores_for_mode(const ModelConfig& config, const BagOutput& out,
                                    ScoringMode mode);

void save_checkpoint(const MilModel& model, const std::string& path);
MilModel load_checkpoint(const std::string& path);

}  // namespace milr
