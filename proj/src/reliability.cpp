#include "milr/reliability.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace milr {

namespace {

void check_lengths(const std::vector<double>& scores, const std::vector<int>& labels,
                   const char* op) {
    if (scores.size() != labels.size()) {
        throw ShapeError(std::string(op) + ": " + std::to_string(scores.size()) +
                         " scores vs " + std::to_string(labels.size()) + " labels");
    }
}

std::pair<std::size_t, std::size_t> count_classes(const std::vector<int>& labels) {
    std::size_t pos = 0;
    for (int y : labels) pos += (y != 0);
    return {pos, labels.size() - pos};
}

void require_both_classes(const std::vector<int>& labels, const char* op) {
    const auto [pos, neg] = count_classes(labels);
    if (pos == 0 || neg == 0) {
        throw DegenerateLabelsError(std::string(op) +
                                    ": labels are single-class (n_pos=" +
                                    std::to_string(pos) + ", n_neg=" +
                                    std::to_string(neg) + ")");
    }
}

}  // namespace

std::vector<double> average_ranks(const std::vector<double>& values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
        const double mean_rank = 0.5 * (double(i + 1) + double(j + 1));
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = mean_rank;
        i = j + 1;
    }
    return ranks;
}

double mutual_information(const std::vector<double>& scores,
                          const std::vector<int>& labels, std::size_t bins) {
    check_lengths(scores, labels, "mutual_information");
    require_both_classes(labels, "mutual_information");
    if (bins == 0) throw std::invalid_argument("mutual_information: bins must be >= 1");
    const std::size_t n = scores.size();

    const auto [mn, mx] = std::minmax_element(scores.begin(), scores.end());
    const double lo = *mn, hi = *mx;
    std::vector<std::size_t> bin_of(n, 0);
    if (hi > lo) {
        for (std::size_t i = 0; i < n; ++i) {
            const double s = (scores[i] - lo) / (hi - lo);
            bin_of[i] = std::min(bins - 1,
                                 static_cast<std::size_t>(s * static_cast<double>(bins)));
        }
    }

    std::vector<std::size_t> joint(bins * 2, 0);
    std::vector<std::size_t> marg_b(bins, 0);
    std::size_t marg_y1 = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t y = labels[i] != 0 ? 1 : 0;
        joint[bin_of[i] * 2 + y] += 1;
        marg_b[bin_of[i]] += 1;
        marg_y1 += y;
    }
    const double total = static_cast<double>(n);
    const double py[2] = {double(n - marg_y1) / total, double(marg_y1) / total};
    double mi = 0.0;
    for (std::size_t b = 0; b < bins; ++b) {
        if (marg_b[b] == 0) continue;
        const double pb = double(marg_b[b]) / total;
        for (std::size_t y = 0; y < 2; ++y) {
            const std::size_t c = joint[b * 2 + y];
            if (c == 0) continue;
            const double pby = double(c) / total;
            mi += pby * std::log(pby / (pb * py[y]));
        }
    }
    return std::max(mi, 0.0);
}

double spearman(const std::vector<double>& scores, const std::vector<int>& labels) {
    check_lengths(scores, labels, "spearman");
    if (scores.size() < 2) {
        throw std::invalid_argument("spearman: needs at least 2 samples");
    }
    require_both_classes(labels, "spearman");
    const std::size_t n = scores.size();
    const std::vector<double> rs = average_ranks(scores);
    std::vector<double> label_values(n);
    for (std::size_t i = 0; i < n; ++i) label_values[i] = labels[i] != 0 ? 1.0 : 0.0;
    const std::vector<double> rl = average_ranks(label_values);

    double ms = 0.0, ml = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        ms += rs[i];
        ml += rl[i];
    }
    ms /= double(n);
    ml /= double(n);
    double cov = 0.0, vs = 0.0, vl = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        cov += (rs[i] - ms) * (rl[i] - ml);
        vs += (rs[i] - ms) * (rs[i] - ms);
        vl += (rl[i] - ml) * (rl[i] - ml);
    }
    if (vs == 0.0 || vl == 0.0) return 0.0;  // constant scores -> no association
    return cov / std::sqrt(vs * vl);
}

double auprc(const std::vector<double>& scores, const std::vector<int>& labels) {
    check_lengths(scores, labels, "auprc");
    require_both_classes(labels, "auprc");
    const std::size_t n = scores.size();
    const auto [n_pos, n_neg] = count_classes(labels);
    (void)n_neg;

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return scores[a] > scores[b];
    });

    // Walk tie groups; precision/recall evaluated at group boundaries only.
    double ap = 0.0;
    double prev_recall = 0.0;
    std::size_t seen = 0, tp = 0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        for (std::size_t k = i; k <= j; ++k) tp += (labels[order[k]] != 0);
        seen = j + 1;
        const double precision = double(tp) / double(seen);
        const double recall = double(tp) / double(n_pos);
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j + 1;
    }
    return ap;
}

ReliabilityResult slide_reliability(const std::vector<double>& scores,
                                    const std::vector<int>& labels, std::size_t bins) {
    ReliabilityResult r;
    const auto [pos, neg] = count_classes(labels);
    r.n_pos = pos;
    r.n_neg = neg;
    r.mi = mutual_information(scores, labels, bins);
    r.spearman = spearman(scores, labels);
    r.auprc = auprc(scores, labels);
    return r;
}

bool slide_eligible(const std::vector<int>& labels) {
    const auto [pos, neg] = count_classes(labels);
    return pos >= 1 && neg >= 1;
}

ReliabilityResult dataset_reliability(const std::vector<ReliabilityResult>& slides) {
    if (slides.empty()) {
        throw std::invalid_argument("dataset_reliability: no eligible slides");
    }
    ReliabilityResult mean;
    for (const auto& s : slides) {
        mean.mi += s.mi;
        mean.spearman += s.spearman;
        mean.auprc += s.auprc;
        mean.n_pos += s.n_pos;
        mean.n_neg += s.n_neg;
    }
    const double k = static_cast<double>(slides.size());
    mean.mi /= k;
    mean.spearman /= k;
    mean.auprc /= k;
    return mean;
}

DatasetReliability evaluate_slides(
    const std::vector<std::pair<std::vector<double>, std::vector<int>>>& slides,
    std::size_t bins, bool pooled) {
    DatasetReliability out;
    std::vector<ReliabilityResult> eligible;
    std::vector<double> all_scores;
    std::vector<int> all_labels;
    for (const auto& [scores, labels] : slides) {
        if (!slide_eligible(labels)) {
            ++out.n_excluded;
            continue;
        }
        ++out.n_eligible;
        if (pooled) {
            all_scores.insert(all_scores.end(), scores.begin(), scores.end());
            all_labels.insert(all_labels.end(), labels.begin(), labels.end());
        } else {
            eligible.push_back(slide_reliability(scores, labels, bins));
        }
    }
    if (out.n_eligible == 0) {
        throw std::invalid_argument("evaluate_slides: no eligible slides");
    }
    out.mean = pooled ? slide_reliability(all_scores, all_labels, bins)
                      : dataset_reliability(eligible);
    return out;
}

}  // namespace milr
