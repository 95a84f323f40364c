#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "milr/annotations.hpp"
#include "milr/classification.hpp"

namespace milr {

struct MetricStat {
    double mean = 0.0;
    std::optional<double> stddev;  // absent with a single seed
};

/// One reliability row of the table. Additive and MAX-POOL-INS models emit
/// two rows that share a single classification/computation block.
struct ReliabilityRow {
    std::string label;
    MetricStat mi, spearman, auprc;
};

struct ReportEntry {
    std::string model_label;
    std::vector<ReliabilityRow> reliability;  // empty for MEAN-POOL
    MetricStat auc, f1;
    std::uint64_t flops = 0;       // MACs at the stated bag size
    std::size_t model_params = 0;  // scalar parameter count
};

struct ExperimentReport {
    std::vector<ReportEntry> entries;
    std::vector<std::pair<std::string, std::string>> metadata;  // ordered
};

/// Raw per-seed evaluation of one model variant, before aggregation.
struct VariantEvaluation {
    std::string model_label;
    std::vector<std::uint64_t> seeds;
    std::vector<double> auc;  // one value per seed
    std::vector<double> f1;
    struct ScoringEval {
        std::string row_label;
        std::vector<double> mi, spearman, auprc;  // one value per seed
    };
    std::vector<ScoringEval> scorings;
    std::uint64_t flops = 0;
    std::size_t model_params = 0;
};

ExperimentReport build_report(
    const std::vector<VariantEvaluation>& evaluations,
    std::vector<std::pair<std::string, std::string>> metadata);

enum class TableFormat { Csv, Markdown };

/// Deterministic text table. Reliability cells use 4 decimals,
/// classification 3; FLOPs are printed in M and model size in K. MEAN-POOL
/// reliability cells render as "-". In CSV the shared classification and
/// computation values repeat on every reliability row; in Markdown the
/// continuation rows leave them blank.
std::string render_table(const ExperimentReport& report, TableFormat format);

/// Parses a table produced by render_table(Csv) back into numbers.
ExperimentReport parse_csv_table(const std::string& text);

/// 8-bit binary PGM. Each patch becomes one block of pixels at its grid
/// cell; scores are min-max mapped onto 0..255 (constant scores render
/// mid-gray); cells without a patch stay black. When labels are given, a
/// companion "<stem>_truth.pgm" with 0/255 values is written next to it.
void export_heatmap(const std::vector<double>& scores, const PatchGrid& grid,
                    const std::vector<std::pair<std::uint32_t, std::uint32_t>>& coords,
                    const std::string& path, const std::vector<int>* labels = nullptr,
                    std::size_t block = 1);

struct PgmImage {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> pixels;
};

PgmImage read_pgm(const std::string& path);

}  // namespace milr
