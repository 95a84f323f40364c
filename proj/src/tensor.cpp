#include "milr/tensor.hpp"

#include <cmath>

namespace milr {

Tensor2::Tensor2(std::initializer_list<std::initializer_list<double>> init) {
    rows = init.size();
    cols = rows == 0 ? 0 : init.begin()->size();
    data.reserve(rows * cols);
    for (const auto& r : init) {
        if (r.size() != cols) {
            throw ShapeError("Tensor2 initializer rows have unequal widths");
        }
        data.insert(data.end(), r.begin(), r.end());
    }
}

Tensor2 Tensor2::row(std::initializer_list<double> values) {
    Tensor2 t(1, values.size());
    std::size_t j = 0;
    for (double v : values) t.data[j++] = v;
    return t;
}

Tensor2 Tensor2::identity(std::size_t n) {
    Tensor2 t(n, n);
    for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
    return t;
}

std::string Tensor2::shape_str() const {
    return std::to_string(rows) + "x" + std::to_string(cols);
}

bool Tensor2::all_finite() const {
    for (double v : data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

void require_same_shape(const Tensor2& a, const Tensor2& b, const char* op) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() +
                         " vs " + b.shape_str());
    }
}

}  // namespace milr
