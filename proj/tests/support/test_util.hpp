#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "milr/rng.hpp"
#include "milr/tensor.hpp"

namespace milr::testutil {

inline double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

inline double max_rel_err(const Tensor2& a, const Tensor2& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        worst = std::max(worst, rel_err(a.data[i], b.data[i]));
    }
    return worst;
}

inline double max_rel_err(const std::vector<Tensor2>& a, const std::vector<Tensor2>& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        worst = std::max(worst, max_rel_err(a[i], b[i]));
    }
    return worst;
}

inline Tensor2 random_tensor(Rng& rng, std::size_t rows, std::size_t cols,
                             double lo = -1.0, double hi = 1.0) {
    Tensor2 t(rows, cols);
    for (double& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

}  // namespace milr::testutil
