#include "milr/classification.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "milr/reliability.hpp"

namespace milr {

namespace {

std::size_t n_classes_of(const std::vector<EvalRun>& runs) {
    if (runs.empty()) throw std::invalid_argument("no evaluation runs");
    return runs[0].probabilities.size();
}

// AUC for one class as the positive, from average ranks of its probability.
double binary_auc(const std::vector<EvalRun>& runs, std::size_t cls) {
    std::vector<double> scores(runs.size());
    std::size_t n_pos = 0;
    for (std::size_t i = 0; i < runs.size(); ++i) {
        scores[i] = runs[i].probabilities[cls];
        n_pos += (runs[i].true_class == cls);
    }
    const std::size_t n_neg = runs.size() - n_pos;
    const auto ranks = average_ranks(scores);
    double rank_sum_pos = 0.0;
    for (std::size_t i = 0; i < runs.size(); ++i) {
        if (runs[i].true_class == cls) rank_sum_pos += ranks[i];
    }
    const double u = rank_sum_pos - double(n_pos) * double(n_pos + 1) / 2.0;
    return u / (double(n_pos) * double(n_neg));
}

}  // namespace

double roc_auc(const std::vector<EvalRun>& runs) {
    const std::size_t c = n_classes_of(runs);
    std::vector<std::size_t> support(c, 0);
    for (const auto& r : runs) {
        if (r.true_class >= c) throw std::invalid_argument("true class out of range");
        support[r.true_class] += 1;
    }
    const std::size_t present =
        c - std::count(support.begin(), support.end(), std::size_t{0});
    if (present < 2) {
        throw std::invalid_argument("roc_auc: truth contains a single class");
    }
    if (c == 2) return binary_auc(runs, 1);
    double total = 0.0;
    std::size_t used = 0;
    for (std::size_t cls = 0; cls < c; ++cls) {
        if (support[cls] == 0 || support[cls] == runs.size()) continue;
        total += binary_auc(runs, cls);
        ++used;
    }
    return total / double(used);
}

double f1(const std::vector<EvalRun>& runs) {
    const std::size_t c = n_classes_of(runs);
    std::vector<std::size_t> tp(c, 0), fp(c, 0), fn(c, 0);
    for (const auto& r : runs) {
        if (r.predicted_class == r.true_class) {
            tp[r.true_class] += 1;
        } else {
            fp[r.predicted_class] += 1;
            fn[r.true_class] += 1;
        }
    }
    auto class_f1 = [&](std::size_t cls) {
        const double denom = double(2 * tp[cls] + fp[cls] + fn[cls]);
        return denom == 0.0 ? 0.0 : 2.0 * double(tp[cls]) / denom;
    };
    if (c == 2) return class_f1(1);
    double total = 0.0;
    for (std::size_t cls = 0; cls < c; ++cls) total += class_f1(cls);
    return total / double(c);
}

MeanStd aggregate_seeds(const std::vector<double>& values) {
    if (values.size() < 2) {
        throw std::invalid_argument("aggregate_seeds: needs at least 2 values");
    }
    // Summation over sorted values makes the result independent of input order.
    std::vector<double> sorted = values;
    std::sort(sorted.begin(), sorted.end());
    MeanStd out;
    for (double v : sorted) out.mean += v;
    out.mean /= double(sorted.size());
    double ss = 0.0;
    for (double v : sorted) ss += (v - out.mean) * (v - out.mean);
    out.stddev = std::sqrt(ss / double(sorted.size() - 1));
    return out;
}

}  // namespace milr
