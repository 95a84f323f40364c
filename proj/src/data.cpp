#include "milr/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "milr/rng.hpp"

namespace milr {

namespace {

const char* kFeatureMagic = "MILF1";

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v),
                          static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is, const std::string& path, const char* what) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) {
        throw FormatError(path + ": truncated while reading " + what);
    }
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) |
           (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_f64(std::ostream& os, double d) {
    const auto bits = std::bit_cast<std::uint64_t>(d);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

double get_f64(std::istream& is, const std::string& path, const char* what) {
    unsigned char b[8];
    if (!is.read(reinterpret_cast<char*>(b), 8)) {
        throw FormatError(path + ": truncated while reading " + what);
    }
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return std::bit_cast<double>(bits);
}

}  // namespace

void SynthConfig::validate() const {
    if (classes < 2) throw std::invalid_argument("synth: needs at least 2 classes");
    if (slides_per_class == 0) throw std::invalid_argument("synth: zero slides per class");
    if (bag_min == 0 || bag_max < bag_min) {
        throw std::invalid_argument("synth: invalid bag size range");
    }
    if (!(key_frac_min > 0.0) || key_frac_max < key_frac_min || key_frac_max > 1.0) {
        throw std::invalid_argument(
            "synth: key fraction must satisfy 0 < min <= max <= 1 for positive slides");
    }
    if (dim == 0) throw std::invalid_argument("synth: zero feature width");
    if (dim < classes - 1) {
        throw std::invalid_argument("synth: feature width too small for orthogonal "
                                    "class signatures");
    }
    if (!(mu > 0.0) || !(sigma > 0.0)) {
        throw std::invalid_argument("synth: mu and sigma must be positive");
    }
}

SynthDataset generate_synthetic(const SynthConfig& config) {
    config.validate();
    Rng rng(config.seed);
    SynthDataset ds;
    ds.manifest.dataset = "synthetic";
    ds.manifest.input_dim = config.dim;
    ds.manifest.patch_size = config.patch_size;
    ds.manifest.class_names.push_back("normal");
    for (std::size_t c = 1; c < config.classes; ++c) {
        ds.manifest.class_names.push_back(
            config.classes == 2 ? "tumor" : "tumor" + std::to_string(c));
    }

    // Orthonormal signature directions, class 0 excluded.
    ds.signatures.assign(config.classes, {});
    for (std::size_t c = 1; c < config.classes; ++c) {
        std::vector<double> d(config.dim);
        for (double& v : d) v = rng.normal();
        for (std::size_t prev = 1; prev < c; ++prev) {
            double dot = 0.0;
            for (std::size_t k = 0; k < config.dim; ++k) dot += d[k] * ds.signatures[prev][k];
            for (std::size_t k = 0; k < config.dim; ++k) d[k] -= dot * ds.signatures[prev][k];
        }
        double norm = 0.0;
        for (double v : d) norm += v * v;
        norm = std::sqrt(norm);
        for (double& v : d) v /= norm;
        ds.signatures[c] = std::move(d);
    }

    for (std::size_t c = 0; c < config.classes; ++c) {
        for (std::size_t s = 0; s < config.slides_per_class; ++s) {
            SynthSlide slide;
            const std::size_t n = rng.uniform_int(config.bag_min, config.bag_max);
            slide.bag.slide_id =
                ds.manifest.class_names[c] + "_" + std::to_string(s);
            slide.bag.label = c;
            slide.bag.features = Tensor2(n, config.dim);
            for (double& v : slide.bag.features.data) v = rng.normal(0.0, config.sigma);

            slide.patch_labels.assign(n, 0);
            if (c > 0) {
                const double frac = rng.uniform(config.key_frac_min, config.key_frac_max);
                const std::size_t n_keys = std::min<std::size_t>(
                    n, std::max<std::size_t>(1, std::size_t(std::lround(frac * double(n)))));
                std::vector<std::size_t> order(n);
                std::iota(order.begin(), order.end(), 0);
                rng.shuffle(order);
                for (std::size_t k = 0; k < n_keys; ++k) {
                    const std::size_t i = order[k];
                    slide.patch_labels[i] = 1;
                    for (std::size_t j = 0; j < config.dim; ++j) {
                        slide.bag.features(i, j) += config.mu * ds.signatures[c][j];
                    }
                }
            }

            // Square-ish grid layout for heatmap export.
            const std::size_t side =
                static_cast<std::size_t>(std::ceil(std::sqrt(double(n))));
            const std::size_t rows = (n + side - 1) / side;
            slide.bag.coords.reserve(n);
            for (std::size_t i = 0; i < n; ++i) {
                slide.bag.coords.emplace_back(static_cast<std::uint32_t>(i % side),
                                              static_cast<std::uint32_t>(i / side));
            }
            slide.annotation.slide_id = slide.bag.slide_id;
            slide.annotation.width = side * config.patch_size;
            slide.annotation.height = rows * config.patch_size;
            const double ps = static_cast<double>(config.patch_size);
            for (std::size_t i = 0; i < n; ++i) {
                if (!slide.patch_labels[i]) continue;
                const double x0 = slide.bag.coords[i].first * ps;
                const double y0 = slide.bag.coords[i].second * ps;
                Polygon p;
                p.cls = ds.manifest.class_names[c];
                p.vertices = {{x0, y0}, {x0 + ps, y0}, {x0 + ps, y0 + ps}, {x0, y0 + ps}};
                slide.annotation.regions.push_back(std::move(p));
            }

            SlideEntry entry;
            entry.slide_id = slide.bag.slide_id;
            entry.label = c;
            ds.manifest.slides.push_back(std::move(entry));
            ds.slides.push_back(std::move(slide));
        }
    }
    return ds;
}

void write_feature_file(const FeatureBag& bag, const std::string& path) {
    if (bag.coords.size() != bag.features.rows) {
        throw ShapeError("write_feature_file: coordinate count " +
                         std::to_string(bag.coords.size()) + " != instance count " +
                         std::to_string(bag.features.rows));
    }
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot open feature file for writing: " + path);
    os.write(kFeatureMagic, 5);
    put_u32(os, static_cast<std::uint32_t>(bag.features.rows));
    put_u32(os, static_cast<std::uint32_t>(bag.features.cols));
    for (double v : bag.features.data) put_f64(os, v);
    for (const auto& [col, row] : bag.coords) {
        put_u32(os, col);
        put_u32(os, row);
    }
    if (!os) throw FormatError("feature file write failed: " + path);
}

FeatureBag read_feature_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open feature file: " + path);
    char magic[5];
    if (!is.read(magic, 5) || std::memcmp(magic, kFeatureMagic, 5) != 0) {
        throw FormatError(path + ": bad feature-file magic at offset 0");
    }
    const std::uint32_t n = get_u32(is, path, "instance count");
    const std::uint32_t dim = get_u32(is, path, "feature width");
    FeatureBag bag;
    bag.features = Tensor2(n, dim);
    for (double& v : bag.features.data) v = get_f64(is, path, "features");
    bag.coords.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        const std::uint32_t col = get_u32(is, path, "patch coordinates");
        const std::uint32_t row = get_u32(is, path, "patch coordinates");
        bag.coords.emplace_back(col, row);
    }
    bag.slide_id = std::filesystem::path(path).stem().string();
    return bag;
}

void split_dataset(DatasetManifest& manifest, const std::array<double, 3>& fractions,
                   std::uint64_t seed) {
    const double total = fractions[0] + fractions[1] + fractions[2];
    if (std::abs(total - 1.0) > 1e-9) {
        throw std::invalid_argument("split fractions must sum to 1");
    }
    std::size_t buckets_used = 0;
    for (double f : fractions) buckets_used += (f > 0.0);

    std::vector<std::vector<std::size_t>> by_class(manifest.class_names.size());
    for (std::size_t i = 0; i < manifest.slides.size(); ++i) {
        const std::size_t label = manifest.slides[i].label;
        if (label >= by_class.size()) {
            throw std::invalid_argument("slide label out of class range");
        }
        by_class[label].push_back(i);
    }

    Rng rng(seed);
    const char* names[3] = {"train", "val", "test"};
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        auto& members = by_class[c];
        if (members.empty()) continue;
        if (members.size() < buckets_used) {
            throw std::invalid_argument(
                "class '" + manifest.class_names[c] + "' has " +
                std::to_string(members.size()) + " slides, fewer than the " +
                std::to_string(buckets_used) + " split buckets");
        }
        rng.shuffle(members);
        // Largest-remainder allocation.
        const double n = static_cast<double>(members.size());
        std::size_t counts[3];
        double remainders[3];
        std::size_t assigned = 0;
        for (int b = 0; b < 3; ++b) {
            const double want = fractions[b] * n;
            counts[b] = static_cast<std::size_t>(want);
            remainders[b] = want - double(counts[b]);
            assigned += counts[b];
        }
        while (assigned < members.size()) {
            int best = 0;
            for (int b = 1; b < 3; ++b) {
                if (remainders[b] > remainders[best]) best = b;
            }
            counts[best] += 1;
            remainders[best] = -1.0;
            ++assigned;
        }
        std::size_t cursor = 0;
        for (int b = 0; b < 3; ++b) {
            for (std::size_t k = 0; k < counts[b]; ++k) {
                manifest.slides[members[cursor++]].split = names[b];
            }
        }
    }
}

DatasetManifest read_manifest(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw FormatError("cannot open manifest: " + path);
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("manifest " + path + " is not valid JSON: " + e.what());
    }
    DatasetManifest m;
    const auto dir = std::filesystem::path(path).parent_path();
    try {
        m.dataset = j.at("dataset").get<std::string>();
        m.class_names = j.at("classes").get<std::vector<std::string>>();
        m.input_dim = j.at("input_dim").get<std::size_t>();
        m.patch_size = j.at("patch_size").get<std::size_t>();
        for (const auto& s : j.at("slides")) {
            SlideEntry e;
            e.slide_id = s.at("slide_id").get<std::string>();
            e.feature_path = (dir / s.at("features").get<std::string>()).string();
            if (s.contains("annotations") && !s.at("annotations").is_null()) {
                e.annotation_path = (dir / s.at("annotations").get<std::string>()).string();
            }
            e.label = s.at("label").get<std::size_t>();
            e.split = s.value("split", "");
            if (e.label >= m.class_names.size()) {
                throw FormatError("manifest " + path + ": slide '" + e.slide_id +
                                  "' label out of range");
            }
            if (!e.split.empty() && e.split != "train" && e.split != "val" &&
                e.split != "test") {
                throw FormatError("manifest " + path + ": slide '" + e.slide_id +
                                  "' has unknown split '" + e.split + "'");
            }
            m.slides.push_back(std::move(e));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("manifest " + path + " has missing fields: " + e.what());
    }
    return m;
}

void write_manifest(const DatasetManifest& manifest, const std::string& path) {
    const auto dir = std::filesystem::path(path).parent_path();
    nlohmann::json slides = nlohmann::json::array();
    for (const auto& e : manifest.slides) {
        nlohmann::json s = {
            {"slide_id", e.slide_id},
            {"features", std::filesystem::relative(e.feature_path, dir).string()},
            {"label", e.label},
            {"split", e.split},
        };
        if (!e.annotation_path.empty()) {
            s["annotations"] = std::filesystem::relative(e.annotation_path, dir).string();
        }
        slides.push_back(std::move(s));
    }
    const nlohmann::json j = {{"dataset", manifest.dataset},
                              {"classes", manifest.class_names},
                              {"input_dim", manifest.input_dim},
                              {"patch_size", manifest.patch_size},
                              {"slides", slides}};
    std::ofstream os(path);
    if (!os) throw FormatError("cannot write manifest: " + path);
    os << j.dump(2) << "\n";
}

void write_labels_csv(const DatasetManifest& manifest, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw FormatError("cannot write labels csv: " + path);
    os << "slide_id,label,split\n";
    for (const auto& e : manifest.slides) {
        os << e.slide_id << "," << e.label << "," << e.split << "\n";
    }
}

std::vector<FeatureBag> load_bags(const DatasetManifest& manifest) {
    std::vector<FeatureBag> bags;
    bags.reserve(manifest.slides.size());
    for (const auto& e : manifest.slides) {
        FeatureBag bag = read_feature_file(e.feature_path);
        if (bag.features.cols != manifest.input_dim) {
            throw FormatError("feature file " + e.feature_path + " has width " +
                              std::to_string(bag.features.cols) +
                              " but the manifest declares " +
                              std::to_string(manifest.input_dim));
        }
        bag.slide_id = e.slide_id;
        bag.label = e.label;
        bags.push_back(std::move(bag));
    }
    return bags;
}

}  // namespace milr
