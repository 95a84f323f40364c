#include <doctest.h>

#include <cmath>

#include "milr/reliability.hpp"
#include "milr/rng.hpp"
#include "support/oracles.hpp"

using namespace milr;

namespace {

// Random score/label pair with both classes present.
std::pair<std::vector<double>, std::vector<int>> random_slide(Rng& rng,
                                                              std::size_t max_len = 64) {
    const std::size_t n = 2 + rng.uniform_index(max_len - 1);
    std::vector<double> scores(n);
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
        // coarse grid so ties actually occur
        scores[i] = rng.uniform_index(8) / 7.0;
        labels[i] = rng.uniform01() < 0.3 ? 1 : 0;
    }
    labels[0] = 1;
    labels[n - 1] = 0;
    return {scores, labels};
}

}  // namespace

TEST_CASE("mutual information hand cases") {
    // perfect dependence, balanced labels
    CHECK(mutual_information({1, 1, 0, 0}, {1, 1, 0, 0}) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-12));
    // constant scores carry no information
    CHECK(mutual_information({0.4, 0.4, 0.4, 0.4}, {1, 0, 1, 0}) == 0.0);
    // two-bin joint histogram worked case
    CHECK(mutual_information({0.9, 0.8, 0.2, 0.1}, {1, 1, 0, 0}, 2) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-12));

    CHECK_THROWS_AS(mutual_information({0.1, 0.2}, {1, 1}), DegenerateLabelsError);
    CHECK_THROWS_AS(mutual_information({0.1}, {1, 0}), ShapeError);
}

TEST_CASE("mutual information bounded by ln(bins) and label entropy") {
    Rng rng(42);
    for (int rep = 0; rep < 200; ++rep) {
        const auto [scores, labels] = random_slide(rng);
        const std::size_t bins = 2 + rng.uniform_index(31);
        const double mi = mutual_information(scores, labels, bins);
        std::size_t pos = 0;
        for (int y : labels) pos += y;
        const double p = double(pos) / double(labels.size());
        const double hy = -(p * std::log(p) + (1 - p) * std::log(1 - p));
        CHECK(mi >= 0.0);
        CHECK(mi <= std::min(std::log(double(bins)), hy) + 1e-12);
    }
}

TEST_CASE("spearman hand cases") {
    CHECK(spearman({0.1, 0.9}, {0, 1}) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(spearman({0.9, 0.1}, {0, 1}) == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(spearman({0.5, 0.5, 0.5}, {1, 0, 1}) == 0.0);
    CHECK(spearman({0.5, 0.5, 0.1, 0.9}, {1, 0, 0, 1}) ==
          doctest::Approx(oracle::spearman({0.5, 0.5, 0.1, 0.9}, {1, 0, 0, 1}))
              .epsilon(1e-12));
    CHECK_THROWS_AS(spearman({0.1}, {1}), std::invalid_argument);
}

TEST_CASE("spearman antisymmetry under score negation") {
    Rng rng(7);
    for (int rep = 0; rep < 100; ++rep) {
        const auto [scores, labels] = random_slide(rng);
        std::vector<double> neg(scores.size());
        for (std::size_t i = 0; i < scores.size(); ++i) neg[i] = -scores[i];
        CHECK(std::abs(spearman(scores, labels) + spearman(neg, labels)) <= 1e-12);
    }
}

TEST_CASE("auprc hand cases") {
    // perfect ranking at 25 percent prevalence
    CHECK(auprc({0.9, 0.3, 0.2, 0.1}, {1, 0, 0, 0}) == doctest::Approx(1.0));
    // constant scores fall back to prevalence
    CHECK(auprc({0.5, 0.5, 0.5, 0.5}, {1, 0, 0, 0}) == doctest::Approx(0.25));
    // worked mixed case: 1*(1/2) + (2/3)*(1/2)
    CHECK(auprc({0.9, 0.7, 0.6, 0.2}, {1, 0, 1, 0}) ==
          doctest::Approx(1.0 / 2.0 + (2.0 / 3.0) * (1.0 / 2.0)).epsilon(1e-12));
    CHECK_THROWS_AS(auprc({0.1, 0.2}, {0, 0}), DegenerateLabelsError);
}

TEST_CASE("metrics match their brute-force oracles on 1000 random slides") {
    Rng rng(2025);
    for (int rep = 0; rep < 1000; ++rep) {
        const auto [scores, labels] = random_slide(rng);
        const std::size_t bins = 2 + rng.uniform_index(31);
        CHECK(std::abs(mutual_information(scores, labels, bins) -
                       oracle::mutual_information(scores, labels, bins)) <= 1e-10);
        CHECK(std::abs(spearman(scores, labels) -
                       oracle::spearman(scores, labels)) <= 1e-10);
        CHECK(std::abs(auprc(scores, labels) -
                       oracle::average_precision(scores, labels)) <= 1e-10);
    }
}

TEST_CASE("metrics are invariant under strictly increasing transforms") {
    Rng rng(11);
    for (int rep = 0; rep < 50; ++rep) {
        const auto [scores, labels] = random_slide(rng);
        std::vector<double> warped(scores.size());
        for (std::size_t i = 0; i < scores.size(); ++i) {
            warped[i] = std::exp(2.0 * scores[i]) + 3.0;
        }
        // rank-based metrics: exact invariance
        CHECK(std::abs(spearman(scores, labels) - spearman(warped, labels)) <= 1e-12);
        CHECK(std::abs(auprc(scores, labels) - auprc(warped, labels)) <= 1e-12);
        // MI: exact under positive affine maps (normalization absorbs them)
        std::vector<double> affine(scores.size());
        for (std::size_t i = 0; i < scores.size(); ++i) affine[i] = 2.5 * scores[i] - 7.0;
        CHECK(mutual_information(scores, labels) ==
              mutual_information(affine, labels));
    }
}

TEST_CASE("joint permutation leaves all metrics bit-identical") {
    Rng rng(13);
    const auto [scores, labels] = random_slide(rng, 32);
    const std::size_t n = scores.size();
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    rng.shuffle(perm);
    std::vector<double> ps(n);
    std::vector<int> pl(n);
    for (std::size_t i = 0; i < n; ++i) {
        ps[i] = scores[perm[i]];
        pl[i] = labels[perm[i]];
    }
    CHECK(mutual_information(scores, labels) == mutual_information(ps, pl));
    CHECK(spearman(scores, labels) == spearman(ps, pl));
    CHECK(auprc(scores, labels) == auprc(ps, pl));
}

TEST_CASE("auprc at least prevalence for positively associated scores") {
    Rng rng(17);
    for (int rep = 0; rep < 50; ++rep) {
        const std::size_t n = 8 + rng.uniform_index(32);
        std::vector<double> scores(n);
        std::vector<int> labels(n);
        for (std::size_t i = 0; i < n; ++i) {
            labels[i] = rng.uniform01() < 0.4 ? 1 : 0;
            scores[i] = labels[i] ? rng.uniform(0.4, 1.0) : rng.uniform(0.0, 0.6);
        }
        labels[0] = 1;
        labels[1] = 0;
        std::size_t pos = 0;
        for (int y : labels) pos += y;
        const double prevalence = double(pos) / double(n);
        CHECK(auprc(scores, labels) >= prevalence - 1e-12);
    }
}

TEST_CASE("slide_reliability bundles the three metrics") {
    // scores equal to labels: perfectly monotone including the ties
    const std::vector<double> scores{1.0, 1.0, 0.0, 0.0};
    const std::vector<int> labels{1, 1, 0, 0};
    const auto r = slide_reliability(scores, labels);
    CHECK(r.mi == doctest::Approx(std::log(2.0)));
    CHECK(r.spearman == doctest::Approx(1.0));
    CHECK(r.auprc == doctest::Approx(1.0));
    CHECK(r.n_pos == 2);
    CHECK(r.n_neg == 2);

    // distinct scores against tied binary labels cannot reach 1 exactly
    const auto r2 = slide_reliability({0.9, 0.8, 0.1, 0.2}, labels);
    CHECK(r2.spearman ==
          doctest::Approx(oracle::spearman({0.9, 0.8, 0.1, 0.2}, labels)));
    CHECK(r2.auprc == doctest::Approx(1.0));

    const auto flat = slide_reliability({0.3, 0.3, 0.3, 0.3}, labels);
    CHECK(flat.mi == 0.0);
    CHECK(flat.spearman == 0.0);
    CHECK(flat.auprc == doctest::Approx(0.5));
}

TEST_CASE("dataset_reliability averages eligible slides and counts exclusions") {
    ReliabilityResult a;
    a.mi = 0.2;
    a.spearman = 0.5;
    a.auprc = 0.6;
    ReliabilityResult b;
    b.mi = 0.4;
    b.spearman = 0.1;
    b.auprc = 0.8;
    const auto mean = dataset_reliability({a, b});
    CHECK(mean.mi == doctest::Approx(0.3));
    CHECK(mean.spearman == doctest::Approx(0.3));
    CHECK(mean.auprc == doctest::Approx(0.7));

    CHECK(dataset_reliability({a}).mi == doctest::Approx(0.2));
    CHECK_THROWS_AS(dataset_reliability({}), std::invalid_argument);

    // mixed eligible/ineligible set equals the mean over the eligible subset
    std::vector<std::pair<std::vector<double>, std::vector<int>>> slides;
    slides.push_back({{0.9, 0.1}, {1, 0}});
    slides.push_back({{0.5, 0.6}, {0, 0}});  // ineligible: all negative
    slides.push_back({{0.2, 0.7, 0.8}, {0, 1, 1}});
    const auto ev = evaluate_slides(slides);
    CHECK(ev.n_eligible == 2);
    CHECK(ev.n_excluded == 1);
    const auto manual = dataset_reliability(
        {slide_reliability({0.9, 0.1}, {1, 0}),
         slide_reliability({0.2, 0.7, 0.8}, {0, 1, 1})});
    CHECK(ev.mean.mi == doctest::Approx(manual.mi));
    CHECK(ev.mean.auprc == doctest::Approx(manual.auprc));

    // pooled mode concatenates instead of averaging
    const auto pooled = evaluate_slides(slides, 32, true);
    std::vector<double> cat_s{0.9, 0.1, 0.2, 0.7, 0.8};
    std::vector<int> cat_l{1, 0, 0, 1, 1};
    CHECK(pooled.mean.auprc == doctest::Approx(auprc(cat_s, cat_l)));
}
