#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "milr/annotations.hpp"
#include "milr/feature_bag.hpp"

namespace milr {

struct SlideEntry {
    std::string slide_id;
    std::string feature_path;
    std::string annotation_path;  // empty when the slide has no annotation
    std::size_t label = 0;
    std::string split;  // train / val / test
};

struct DatasetManifest {
    std::string dataset;
    std::vector<std::string> class_names;
    std::size_t input_dim = 0;
    std::size_t patch_size = 256;
    std::vector<SlideEntry> slides;
};

/// Synthetic bag generator. Background instances are isotropic Gaussian
/// noise; each positive class plants its own signature direction on a
/// random subset of instances. Class 0 is the normal class and receives no
/// key instances.
struct SynthConfig {
    std::size_t classes = 2;
    std::size_t slides_per_class = 50;
    std::size_t bag_min = 40;
    std::size_t bag_max = 120;
    double key_frac_min = 0.3;
    double key_frac_max = 0.6;
    std::size_t dim = 32;
    double mu = 4.0;     // signature offset magnitude
    double sigma = 1.0;  // background noise scale
    std::uint64_t seed = 0;
    std::size_t patch_size = 256;

    void validate() const;
};

struct SynthSlide {
    FeatureBag bag;
    std::vector<int> patch_labels;  // key-instance indicator per patch
    SlideAnnotation annotation;     // one square region per key patch
};

struct SynthDataset {
    DatasetManifest manifest;  // feature/annotation paths left empty
    std::vector<SynthSlide> slides;
    std::vector<std::vector<double>> signatures;  // unit directions per class
};

SynthDataset generate_synthetic(const SynthConfig& config);

/// "MILF1" container: u32 instance count and width, row-major f64 features,
/// then (col,row) u32 patch coordinates. Little-endian throughout.
FeatureBag read_feature_file(const std::string& path);
void write_feature_file(const FeatureBag& bag, const std::string& path);

/// Stratified split with largest-remainder rounding per class.
/// fractions = (train, val, test), must sum to 1.
void split_dataset(DatasetManifest& manifest, const std::array<double, 3>& fractions,
                   std::uint64_t seed);

DatasetManifest read_manifest(const std::string& path);
void write_manifest(const DatasetManifest& manifest, const std::string& path);

void write_labels_csv(const DatasetManifest& manifest, const std::string& path);

/// Loads every bag listed in the manifest; paths are resolved against the
/// manifest's directory by read_manifest.
std::vector<FeatureBag> load_bags(const DatasetManifest& manifest);

}  // namespace milr
