#pragma once

#include <cstddef>
#include <vector>

namespace milr {

/// One evaluated slide: the model's class probabilities, its argmax
/// prediction, and the ground-truth class.
struct EvalRun {
    std::vector<double> probabilities;
    std::size_t predicted_class = 0;
    std::size_t true_class = 0;
};

/// Binary: rank-based Mann-Whitney AUC with 0.5 credit for ties.
/// Multi-class: unweighted one-vs-rest macro average over classes that have
/// both positives and negatives in the truth.
double roc_auc(const std::vector<EvalRun>& runs);

/// Binary: F1 of the positive class. Multi-class: macro-F1 with
/// zero-support classes contributing 0.
double f1(const std::vector<EvalRun>& runs);

struct MeanStd {
    double mean = 0.0;
    double stddev = 0.0;  // sample standard deviation (n-1)
};

MeanStd aggregate_seeds(const std::vector<double>& values);

}  // namespace milr
