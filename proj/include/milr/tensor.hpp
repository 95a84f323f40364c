#pragma once

#include <cstddef>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace milr {

// Shape or argument violations on the numeric surface.
struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Operation requires at least one instance/row.
struct EmptyBagError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Malformed binary/JSON artifact on disk.
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Patch labels are all-0 or all-1; metric undefined for the slide.
struct DegenerateLabelsError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Requested scoring mode is not defined for the model variant.
struct UnsupportedScoringError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Dense row-major matrix of doubles. The only tensor shape the engine needs.
struct Tensor2 {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Tensor2() = default;
    Tensor2(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}
    Tensor2(std::initializer_list<std::initializer_list<double>> init);

    static Tensor2 row(std::initializer_list<double> values);
    static Tensor2 identity(std::size_t n);

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    std::size_t size() const { return data.size(); }
    bool same_shape(const Tensor2& other) const {
        return rows == other.rows && cols == other.cols;
    }
    std::string shape_str() const;

    bool all_finite() const;
};

void require_same_shape(const Tensor2& a, const Tensor2& b, const char* op);

}  // namespace milr
