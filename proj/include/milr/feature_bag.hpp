#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "milr/tensor.hpp"

namespace milr {

/// One slide: N patch feature vectors plus the (col, row) grid cell of each
/// patch and the slide-level class label.
struct FeatureBag {
    std::string slide_id;
    Tensor2 features;  // N x input_dim
    std::vector<std::pair<std::uint32_t, std::uint32_t>> coords;
    std::size_t label = 0;

    std::size_t n_instances() const { return features.rows; }
};

}  // namespace milr
