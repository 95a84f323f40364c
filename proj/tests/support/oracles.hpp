#pragma once

// Brute-force reference implementations of the reliability metrics. Each one
// takes a different computational route than the library (entropy identity,
// quadratic-time ranks, threshold enumeration) so agreement is meaningful.

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

namespace milr::oracle {

inline double entropy(const std::vector<double>& probs) {
    double h = 0.0;
    for (double p : probs) {
        if (p > 0.0) h -= p * std::log(p);
    }
    return h;
}

// MI via H(B) + H(Y) - H(B,Y) over the same equal-width binning.
inline double mutual_information(const std::vector<double>& scores,
                                 const std::vector<int>& labels, std::size_t bins) {
    const std::size_t n = scores.size();
    double lo = scores[0], hi = scores[0];
    for (double s : scores) {
        lo = std::min(lo, s);
        hi = std::max(hi, s);
    }
    std::vector<std::size_t> b(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        if (hi > lo) {
            const double u = (scores[i] - lo) / (hi - lo);
            b[i] = std::min<std::size_t>(bins - 1, std::size_t(u * double(bins)));
        }
    }
    std::vector<double> pb(bins, 0.0), py(2, 0.0), pby(bins * 2, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t y = labels[i] != 0 ? 1 : 0;
        pb[b[i]] += 1.0 / double(n);
        py[y] += 1.0 / double(n);
        pby[b[i] * 2 + y] += 1.0 / double(n);
    }
    return entropy(pb) + entropy(py) - entropy(pby);
}

// Average rank of element i computed by direct counting, O(n^2).
inline std::vector<double> slow_ranks(const std::vector<double>& v) {
    const std::size_t n = v.size();
    std::vector<double> ranks(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t less = 0, equal = 0;
        for (std::size_t j = 0; j < n; ++j) {
            less += (v[j] < v[i]);
            equal += (v[j] == v[i]);
        }
        ranks[i] = double(less) + (double(equal) + 1.0) / 2.0;
    }
    return ranks;
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const std::size_t n = a.size();
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= double(n);
    mb /= double(n);
    double cov = 0.0, va = 0.0, vb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        cov += (a[i] - ma) * (b[i] - mb);
        va += (a[i] - ma) * (a[i] - ma);
        vb += (b[i] - mb) * (b[i] - mb);
    }
    if (va == 0.0 || vb == 0.0) return 0.0;
    return cov / std::sqrt(va * vb);
}

inline double spearman(const std::vector<double>& scores,
                       const std::vector<int>& labels) {
    std::vector<double> lv(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) lv[i] = labels[i] != 0 ? 1.0 : 0.0;
    return pearson(slow_ranks(scores), slow_ranks(lv));
}

// Average precision by enumerating every distinct score threshold.
inline double average_precision(const std::vector<double>& scores,
                                const std::vector<int>& labels) {
    std::set<double, std::greater<double>> thresholds(scores.begin(), scores.end());
    std::size_t n_pos = 0;
    for (int y : labels) n_pos += (y != 0);
    double ap = 0.0, prev_recall = 0.0;
    for (double t : thresholds) {
        std::size_t tp = 0, predicted = 0;
        for (std::size_t i = 0; i < scores.size(); ++i) {
            if (scores[i] >= t) {
                ++predicted;
                tp += (labels[i] != 0);
            }
        }
        const double precision = double(tp) / double(predicted);
        const double recall = double(tp) / double(n_pos);
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    return ap;
}

}  // namespace milr::oracle
