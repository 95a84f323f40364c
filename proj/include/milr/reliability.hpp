#pragma once

#include <cstddef>
#include <vector>

#include "milr/tensor.hpp"

namespace milr {

/// Average fractional ranks, 1-based; ties get the mean of their rank span.
std::vector<double> average_ranks(const std::vector<double>& values);

/// Histogram mutual information between patch scores and binary labels, in
/// nats. Scores are min-max normalized per call and quantized into `bins`
/// equal-width bins; constant scores collapse to a single bin.
double mutual_information(const std::vector<double>& scores,
                          const std::vector<int>& labels, std::size_t bins = 32);

/// Spearman's rank correlation with average-rank tie handling. Constant
/// scores are reported as 0.
double spearman(const std::vector<double>& scores, const std::vector<int>& labels);

/// Average precision over the descending score ranking, ties grouped.
double auprc(const std::vector<double>& scores, const std::vector<int>& labels);

struct ReliabilityResult {
    double mi = 0.0;
    double spearman = 0.0;
    double auprc = 0.0;
    std::size_t n_pos = 0;
    std::size_t n_neg = 0;
};

ReliabilityResult slide_reliability(const std::vector<double>& scores,
                                    const std::vector<int>& labels,
                                    std::size_t bins = 32);

/// A slide enters reliability evaluation only if both label classes occur.
bool slide_eligible(const std::vector<int>& labels);

/// Unweighted mean over the given per-slide results.
ReliabilityResult dataset_reliability(const std::vector<ReliabilityResult>& slides);

struct DatasetReliability {
    ReliabilityResult mean;
    std::size_t n_eligible = 0;
    std::size_t n_excluded = 0;
};

/// Filters ineligible slides, then averages per-slide metrics. With
/// `pooled`, concatenates all eligible slides' scores and labels and
/// computes each metric once instead.
DatasetReliability evaluate_slides(
    const std::vector<std::pair<std::vector<double>, std::vector<int>>>& slides,
    std::size_t bins = 32, bool pooled = false);

}  // namespace milr
