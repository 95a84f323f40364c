#include <doctest.h>

#include <filesystem>

#include "milr/annotations.hpp"

using namespace milr;

namespace {

Polygon square(double x0, double y0, double x1, double y1, std::string cls = "roi") {
    Polygon p;
    p.vertices = {{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}};
    p.cls = std::move(cls);
    return p;
}

// Concave "C": a square with a rectangular notch cut from the right side.
Polygon c_shape() {
    Polygon p;
    p.vertices = {{0, 0}, {10, 0}, {10, 3}, {4, 3}, {4, 7}, {10, 7}, {10, 10}, {0, 10}};
    p.cls = "c";
    return p;
}

}  // namespace

TEST_CASE("tessellate basic grids") {
    const PatchGrid g1 = tessellate(512, 512, 256);
    CHECK(g1.patches.size() == 4);
    CHECK(g1.grid_cols == 2);
    CHECK(g1.grid_rows == 2);

    const PatchGrid g2 = tessellate(600, 300, 256);
    CHECK(g2.patches.size() == 2);
    CHECK(g2.grid_cols == 2);
    CHECK(g2.grid_rows == 1);

    const PatchGrid g3 = tessellate(256, 256, 256);
    CHECK(g3.patches.size() == 1);
    CHECK(g3.patches[0] == std::pair<std::uint32_t, std::uint32_t>{0, 0});

    CHECK_THROWS_AS(tessellate(100, 100, 256), std::invalid_argument);
}

TEST_CASE("point_in_polygon basics and boundary") {
    const Polygon unit = square(0, 0, 1, 1);
    CHECK(point_in_polygon(0.5, 0.5, unit));
    CHECK_FALSE(point_in_polygon(10.0, 10.0, unit));
    // boundary counts as inside
    CHECK(point_in_polygon(0.0, 0.5, unit));
    CHECK(point_in_polygon(1.0, 1.0, unit));
    CHECK(point_in_polygon(0.5, 0.0, unit));

    Polygon degenerate;
    degenerate.vertices = {{0, 0}, {1, 1}};
    CHECK_THROWS_AS(point_in_polygon(0.5, 0.5, degenerate), std::invalid_argument);
}

TEST_CASE("concave polygon notch vs dense rasterization oracle") {
    const Polygon c = c_shape();
    // the notch interior is outside
    CHECK_FALSE(point_in_polygon(7.0, 5.0, c));
    CHECK(point_in_polygon(2.0, 5.0, c));

    // rasterization oracle: winding by scanline counting on a fine grid,
    // compared at strictly interior sample points
    auto oracle_inside = [&](double px, double py) {
        int crossings = 0;
        const auto& v = c.vertices;
        for (std::size_t i = 0, j = v.size() - 1; i < v.size(); j = i++) {
            const double xi = v[i][0], yi = v[i][1];
            const double xj = v[j][0], yj = v[j][1];
            if ((yi > py) != (yj > py)) {
                const double x_at = xi + (py - yi) * (xj - xi) / (yj - yi);
                if (x_at > px) ++crossings;
            }
        }
        return crossings % 2 == 1;
    };
    for (double y = 0.25; y < 10.0; y += 0.5) {
        for (double x = 0.25; x < 10.0; x += 0.5) {
            CHECK(point_in_polygon(x, y, c) == oracle_inside(x, y));
        }
    }
}

TEST_CASE("assign_patch_labels center rule") {
    const PatchGrid grid = tessellate(512, 256, 256);  // 2x1

    // polygon covering the whole slide
    const auto all = assign_patch_labels(grid, {square(0, 0, 512, 256)});
    CHECK(all == std::vector<int>{1, 1});

    // no polygons
    CHECK(assign_patch_labels(grid, {}) == std::vector<int>{0, 0});

    // left half
    const auto half = assign_patch_labels(grid, {square(0, 0, 256, 256)});
    CHECK(half == std::vector<int>{1, 0});
}

TEST_CASE("assign_patch_labels overlap rule uses the area fraction") {
    const PatchGrid grid = tessellate(512, 256, 256);
    // thin sliver: 16 px of the left patch (1/16 of its width)
    const auto sliver = square(0, 0, 16, 256);
    CHECK(assign_patch_labels(grid, {sliver}, LabelRule::Overlap, 0.5) ==
          std::vector<int>{0, 0});
    CHECK(assign_patch_labels(grid, {sliver}, LabelRule::Overlap, 0.05) ==
          std::vector<int>{1, 0});

    // half coverage with a threshold just below one half
    const auto left_half_patch = square(0, 0, 128, 256);
    CHECK(assign_patch_labels(grid, {left_half_patch}, LabelRule::Overlap, 0.49) ==
          std::vector<int>{1, 0});
}

TEST_CASE("center rule matches the overlap rule in the small-tau limit only "
          "when the overlap contains the center") {
    const PatchGrid grid = tessellate(512, 256, 256);
    const double tiny_tau = 1.0 / 256.0;  // one subsample is enough

    // covered center: both rules agree
    const auto centered = square(96, 96, 160, 160);
    CHECK(assign_patch_labels(grid, {centered}, LabelRule::Center) ==
          std::vector<int>{1, 0});
    CHECK(assign_patch_labels(grid, {centered}, LabelRule::Overlap, tiny_tau) ==
          std::vector<int>{1, 0});

    // overlap in a corner, center uncovered: the rules diverge
    const auto corner = square(0, 0, 64, 64);
    CHECK(assign_patch_labels(grid, {corner}, LabelRule::Center) ==
          std::vector<int>{0, 0});
    CHECK(assign_patch_labels(grid, {corner}, LabelRule::Overlap, tiny_tau) ==
          std::vector<int>{1, 0});
}

TEST_CASE("labels invariant to vertex rotation and region reordering") {
    const PatchGrid grid = tessellate(1024, 1024, 256);
    const Polygon a = square(10, 10, 500, 500, "a");
    const Polygon b = square(600, 600, 900, 1000, "b");
    Polygon a_rotated = a;
    std::rotate(a_rotated.vertices.begin(), a_rotated.vertices.begin() + 2,
                a_rotated.vertices.end());

    const auto base = assign_patch_labels(grid, {a, b});
    CHECK(base == assign_patch_labels(grid, {a_rotated, b}));
    CHECK(base == assign_patch_labels(grid, {b, a}));
    // every patch labeled, all values binary
    CHECK(base.size() == grid.patches.size());
    for (int v : base) CHECK((v == 0 || v == 1));
}

TEST_CASE("polygon fully outside the slide flags a frame mismatch") {
    const PatchGrid grid = tessellate(512, 512, 256);
    CHECK_THROWS_WITH_AS(
        assign_patch_labels(grid, {square(5000, 5000, 6000, 6000)}),
        doctest::Contains("coordinate frames"), std::invalid_argument);
}

TEST_CASE("annotation json round trip") {
    const auto dir = std::filesystem::temp_directory_path() / "milr_ann_test";
    std::filesystem::create_directories(dir);
    const std::string path = (dir / "slide1.json").string();

    SlideAnnotation ann;
    ann.slide_id = "slide1";
    ann.width = 2048;
    ann.height = 1024;
    ann.regions = {square(0, 0, 256, 256, "tumor"), square(512, 256, 768, 512, "tumor")};
    write_annotation_file(ann, path);

    const SlideAnnotation r = read_annotation_file(path);
    CHECK(r.slide_id == "slide1");
    CHECK(r.width == 2048);
    CHECK(r.height == 1024);
    REQUIRE(r.regions.size() == 2);
    CHECK(r.regions[1].cls == "tumor");
    CHECK(r.regions[1].vertices == ann.regions[1].vertices);

    CHECK_THROWS_AS(read_annotation_file((dir / "missing.json").string()), FormatError);
    std::filesystem::remove_all(dir);
}
