#include "milr/annotations.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

namespace milr {

PatchGrid tessellate(std::size_t slide_width, std::size_t slide_height,
                     std::size_t patch_size) {
    if (slide_width == 0 || slide_height == 0 || patch_size == 0) {
        throw std::invalid_argument("tessellate: dimensions must be positive");
    }
    if (patch_size > slide_width || patch_size > slide_height) {
        throw std::invalid_argument(
            "tessellate: patch size " + std::to_string(patch_size) +
            " exceeds slide " + std::to_string(slide_width) + "x" +
            std::to_string(slide_height));
    }
    PatchGrid grid;
    grid.patch_size = patch_size;
    grid.slide_width = slide_width;
    grid.slide_height = slide_height;
    grid.grid_cols = slide_width / patch_size;
    grid.grid_rows = slide_height / patch_size;
    grid.patches.reserve(grid.grid_cols * grid.grid_rows);
    for (std::size_t row = 0; row < grid.grid_rows; ++row) {
        for (std::size_t col = 0; col < grid.grid_cols; ++col) {
            grid.patches.emplace_back(static_cast<std::uint32_t>(col),
                                      static_cast<std::uint32_t>(row));
        }
    }
    return grid;
}

namespace {

bool on_segment(double px, double py, double ax, double ay, double bx, double by) {
    const double cross = (bx - ax) * (py - ay) - (by - ay) * (px - ax);
    if (cross != 0.0) return false;
    return std::min(ax, bx) <= px && px <= std::max(ax, bx) &&
           std::min(ay, by) <= py && py <= std::max(ay, by);
}

}  // namespace

bool point_in_polygon(double x, double y, const Polygon& poly) {
    const auto& v = poly.vertices;
    if (v.size() < 3) {
        throw std::invalid_argument("point_in_polygon: polygon has fewer than 3 vertices");
    }
    const std::size_t n = v.size();
    for (std::size_t i = 0; i < n; ++i) {
        const auto& a = v[i];
        const auto& b = v[(i + 1) % n];
        if (on_segment(x, y, a[0], a[1], b[0], b[1])) return true;
    }
    bool inside = false;
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        const double xi = v[i][0], yi = v[i][1];
        const double xj = v[j][0], yj = v[j][1];
        const bool crosses = (yi > y) != (yj > y);
        if (crosses && x < (xj - xi) * (y - yi) / (yj - yi) + xi) {
            inside = !inside;
        }
    }
    return inside;
}

namespace {

bool in_any_region(double x, double y, const std::vector<Polygon>& regions) {
    for (const auto& p : regions) {
        if (point_in_polygon(x, y, p)) return true;
    }
    return false;
}

}  // namespace

std::vector<int> assign_patch_labels(const PatchGrid& grid,
                                     const std::vector<Polygon>& regions,
                                     LabelRule rule, double tau) {
    for (const auto& p : regions) {
        if (p.vertices.size() < 3) {
            throw std::invalid_argument("assign_patch_labels: degenerate polygon");
        }
        double min_x = p.vertices[0][0], max_x = min_x;
        double min_y = p.vertices[0][1], max_y = min_y;
        for (const auto& v : p.vertices) {
            min_x = std::min(min_x, v[0]);
            max_x = std::max(max_x, v[0]);
            min_y = std::min(min_y, v[1]);
            max_y = std::max(max_y, v[1]);
        }
        if (max_x < 0.0 || max_y < 0.0 || min_x > double(grid.slide_width) ||
            min_y > double(grid.slide_height)) {
            throw std::invalid_argument(
                "assign_patch_labels: polygon lies entirely outside the slide; "
                "annotation and grid are likely in different coordinate frames");
        }
    }

    const double ps = static_cast<double>(grid.patch_size);
    std::vector<int> labels(grid.patches.size(), 0);
    for (std::size_t k = 0; k < grid.patches.size(); ++k) {
        const double x0 = grid.patches[k].first * ps;
        const double y0 = grid.patches[k].second * ps;
        if (rule == LabelRule::Center) {
            labels[k] = in_any_region(x0 + ps / 2.0, y0 + ps / 2.0, regions) ? 1 : 0;
        } else {
            std::size_t covered = 0;
            for (std::size_t sy = 0; sy < 16; ++sy) {
                for (std::size_t sx = 0; sx < 16; ++sx) {
                    const double x = x0 + (double(sx) + 0.5) * ps / 16.0;
                    const double y = y0 + (double(sy) + 0.5) * ps / 16.0;
                    covered += in_any_region(x, y, regions) ? 1 : 0;
                }
            }
            labels[k] = (double(covered) / 256.0 >= tau) ? 1 : 0;
        }
    }
    return labels;
}

SlideAnnotation read_annotation_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw FormatError("cannot open annotation file: " + path);
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("annotation file " + path + " is not valid JSON: " + e.what());
    }
    SlideAnnotation ann;
    try {
        ann.slide_id = j.at("slide_id").get<std::string>();
        ann.width = j.at("width").get<std::size_t>();
        ann.height = j.at("height").get<std::size_t>();
        for (const auto& r : j.at("regions")) {
            Polygon p;
            p.cls = r.at("class").get<std::string>();
            for (const auto& v : r.at("vertices")) {
                p.vertices.push_back({v.at(0).get<double>(), v.at(1).get<double>()});
            }
            ann.regions.push_back(std::move(p));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("annotation file " + path + " has missing fields: " + e.what());
    }
    return ann;
}

void write_annotation_file(const SlideAnnotation& ann, const std::string& path) {
    nlohmann::json regions = nlohmann::json::array();
    for (const auto& p : ann.regions) {
        nlohmann::json vertices = nlohmann::json::array();
        for (const auto& v : p.vertices) {
            vertices.push_back({v[0], v[1]});
        }
        regions.push_back({{"class", p.cls}, {"vertices", vertices}});
    }
    const nlohmann::json j = {{"slide_id", ann.slide_id},
                              {"width", ann.width},
                              {"height", ann.height},
                              {"regions", regions}};
    std::ofstream os(path);
    if (!os) throw FormatError("cannot write annotation file: " + path);
    os << j.dump(2) << "\n";
}

}  // namespace milr
