#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "milr/tensor.hpp"

namespace milr {

/// Closed polygon in slide pixel coordinates; the last vertex connects back
/// to the first implicitly. Self-intersections are resolved by the even-odd
/// fill rule.
struct Polygon {
    std::vector<std::array<double, 2>> vertices;
    std::string cls;
};

/// Axis-aligned, origin-anchored, non-overlapping patch grid. Partial edge
/// patches are dropped. Patches are listed row-major as (col, row) cells.
struct PatchGrid {
    std::size_t patch_size = 256;
    std::size_t slide_width = 0;
    std::size_t slide_height = 0;
    std::size_t grid_cols = 0;
    std::size_t grid_rows = 0;
    std::vector<std::pair<std::uint32_t, std::uint32_t>> patches;
};

PatchGrid tessellate(std::size_t slide_width, std::size_t slide_height,
                     std::size_t patch_size);

/// Even-odd ray casting; points on the boundary count as inside.
bool point_in_polygon(double x, double y, const Polygon& poly);

enum class LabelRule { Center, Overlap };

/// CENTER: a patch is positive iff its center lies in any region.
/// OVERLAP: positive iff the covered area fraction, estimated on a 16x16
/// subsample, is at least tau.
std::vector<int> assign_patch_labels(const PatchGrid& grid,
                                     const std::vector<Polygon>& regions,
                                     LabelRule rule = LabelRule::Center,
                                     double tau = 0.25);

struct SlideAnnotation {
    std::string slide_id;
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<Polygon> regions;
};

SlideAnnotation read_annotation_file(const std::string& path);
void write_annotation_file(const SlideAnnotation& ann, const std::string& path);

}  // namespace milr
