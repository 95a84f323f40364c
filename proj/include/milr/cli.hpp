#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "milr/annotations.hpp"
#include "milr/data.hpp"
#include "milr/models.hpp"
#include "milr/training.hpp"

namespace milr::cli {

struct SynthOptions {
    SynthConfig synth;
    std::array<double, 3> split = {0.6, 0.2, 0.2};
    std::uint64_t split_seed = 0;
    std::string out;
};

/// Writes features/, annotations/, manifest.json, labels.csv and
/// provenance.json under out. Identical options produce identical bytes.
int cmd_synth(const SynthOptions& options);

struct BenchOptions {
    std::string data;  // manifest path
    std::string out;
    std::vector<std::string> variants = {"mean-pool",     "max-pool", "mean-pool-ins",
                                         "max-pool-ins",  "abmil",    "abmil-add"};
    std::size_t heads = 2;
    std::optional<std::size_t> embed_dim;    // default: input_dim / 2
    std::optional<std::size_t> attn_hidden;  // default: embed_dim / 2
    TrainConfig train;
    std::size_t mi_bins = 32;
    std::string mi_units = "nats";  // or "bits"
    bool pooled_reliability = false;
    LabelRule label_rule = LabelRule::Center;
    double overlap_tau = 0.25;
    std::size_t flops_bag_size = 120;
    std::size_t topk_heatmaps = 3;
    std::size_t heatmap_block = 8;
    std::size_t jobs = 1;
};

/// Full protocol for every requested variant; writes report.{csv,md,json},
/// per-run training logs, first-seed checkpoints, top/bottom-k heatmaps and
/// provenance.json under out.
int cmd_bench(const BenchOptions& options);

struct CostOptions {
    std::vector<std::string> variants = {"mean-pool",    "max-pool",  "mean-pool-ins",
                                         "max-pool-ins", "abmil",     "abmil-add",
                                         "multihead",    "multihead-add"};
    std::size_t bag_size = 120;
    std::size_t input_dim = 1024;
    std::size_t embed_dim = 512;
    std::size_t attn_hidden = 256;
    std::size_t heads = 2;
    std::size_t classes = 2;
};

struct CostRow {
    std::string label;
    std::uint64_t flops = 0;
    std::size_t params = 0;
};

std::vector<CostRow> compute_cost_table(const CostOptions& options);

/// Prints the FLOPs / model-size table without training anything.
int cmd_cost(const CostOptions& options);

struct HeatmapOptions {
    std::string data;        // manifest path
    std::string checkpoint;  // .milr file
    std::vector<std::string> slides;  // empty: every annotated test slide
    std::string scoring;              // empty: the checkpoint's default mode
    std::string out;
    std::size_t block = 8;
};

int cmd_heatmap(const HeatmapOptions& options);

struct ReportOptions {
    std::string from;  // report.json produced by cmd_bench
    std::string out;
};

/// Re-renders the CSV and Markdown tables from a stored report dump.
int cmd_report(const ReportOptions& options);

/// Variant spec strings accepted by bench/cost, e.g. "abmil-add".
struct VariantSpec {
    Variant variant;
    bool additive = false;
};
VariantSpec parse_variant_spec(const std::string& name);

/// Entry point used by the milr binary; args excludes argv[0].
int run_cli(const std::vector<std::string>& args);

}  // namespace milr::cli
