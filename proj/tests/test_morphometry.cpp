#include <cmath>

#include "doctest.h"
#include "endo/morphometry.hpp"
#include "fixtures.hpp"

using namespace endo;

namespace {

void check_against_oracle(const LabelMap& lm, const Rect& roi, const PixelScale& scale, HexNeighbors hex) {
    const auto got = measure(lm, scale, roi, hex);
    const auto want = oracle::naive_report(lm.labels, fixture::gutta_flags(lm), roi.x, roi.y, roi.w, roi.h,
                                           scale.x_um * scale.y_um, hex == HexNeighbors::CellsOnly);
    CHECK(got.n_cells == want.n_cells);
    CHECK(got.n_guttae == want.n_guttae);
    CHECK(got.cd == doctest::Approx(want.cd).epsilon(1e-9));
    CHECK(got.gar_pct == doctest::Approx(want.gar).epsilon(1e-9));
    if (want.n_cells > 0) {
        REQUIRE(got.mca.has_value());
        CHECK(*got.mca == doctest::Approx(want.mca).epsilon(1e-9));
        CHECK(*got.cv_pct == doctest::Approx(want.cv).epsilon(1e-9));
        CHECK(*got.hex_pct == doctest::Approx(want.hex).epsilon(1e-9));
    } else {
        CHECK_FALSE(got.mca.has_value());
    }
}

}  // namespace

TEST_CASE("report matches a naive recount") {
    const PixelScale scale;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const int w = 60 + int(seed * 13 % 40), h = 50 + int(seed * 7 % 30);
        const auto tess = oracle::tessellate(w, h, oracle::random_sites(w, h, 15 + int(seed) * 3, seed));
        const auto lm = fixture::tessellation_map(tess, 0.25, seed);
        check_against_oracle(lm, Rect{0, 0, w, h}, scale, HexNeighbors::AnyClass);
        check_against_oracle(lm, Rect{5, 4, w - 12, h - 9}, scale, HexNeighbors::CellsOnly);
    }
}

TEST_CASE("regular hexagonal lattice") {
    const auto tess = oracle::tessellate(160, 140, oracle::hex_sites(160, 140, 16, 14));
    const auto lm = fixture::tessellation_map(tess, 0.0, 1);
    const auto r = measure(lm, PixelScale{}, Rect{0, 0, 160, 140});
    REQUIRE(r.n_cells > 40);
    CHECK(*r.hex_pct == doctest::Approx(100.0));
    CHECK(*r.cv_pct == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(r.gar_pct == 0.0);
}

TEST_CASE("3x3 grid of squares: centre has 8 neighbours") {
    LabelMap lm(32, 32);
    std::int32_t l = 0;
    for (int j = 0; j < 3; ++j)
        for (int i = 0; i < 3; ++i) {
            ++l;
            lm.classes[l] = RegionClass::Cell;
            for (int y = 1 + j * 10; y < 10 + j * 10; ++y)
                for (int x = 1 + i * 10; x < 10 + i * 10; ++x) lm.labels(x, y) = l;
        }
    lm.validate();
    const auto stats = region_stats(lm, PixelScale{}, Rect{0, 0, 32, 32});
    const auto& centre = stats[4];
    CHECK(centre.label == 5);
    CHECK(centre.neighbor_labels.size() == 8);
    CHECK(centre.area_px == 81);
    CHECK_FALSE(centre.touches_border);
    const auto r = measure(lm, PixelScale{}, Rect{0, 0, 32, 32});
    CHECK(r.n_cells == 9);
    CHECK(*r.hex_pct == 0.0);
    // Every square reaches the ROI edge once the ROI hugs the squares.
    CHECK(measure(lm, PixelScale{}, Rect{1, 1, 29, 29}).n_cells == 1);
}

TEST_CASE("empty and gutta-only maps") {
    LabelMap lm(20, 20);
    const auto r = measure(lm, PixelScale{}, Rect{0, 0, 20, 20});
    CHECK(r.n_cells == 0);
    CHECK(r.cd == 0.0);
    CHECK_FALSE(r.mca.has_value());
    CHECK_FALSE(r.hex_pct.has_value());
    CHECK_FALSE(r.cv_pct.has_value());

    for (int y = 5; y < 15; ++y)
        for (int x = 5; x < 15; ++x) lm.labels(x, y) = 1;
    lm.classes[1] = RegionClass::Gutta;
    const auto g = measure(lm, PixelScale{1.0, 1.0}, Rect{0, 0, 20, 20});
    CHECK(g.gar_pct == doctest::Approx(25.0));
    CHECK(g.n_guttae == 1);
    CHECK_THROWS_AS(compute_report({}, 0.0), Error);
}

TEST_CASE("physical units") {
    LabelMap lm(10, 10);
    for (int y = 2; y < 6; ++y)
        for (int x = 2; x < 6; ++x) lm.labels(x, y) = 1;
    lm.classes[1] = RegionClass::Cell;
    const PixelScale s{2.0, 0.5};
    const auto r = measure(lm, s, Rect{0, 0, 10, 10});
    CHECK(*r.mca == doctest::Approx(16.0));
    CHECK(r.analyzed_area_mm2 == doctest::Approx(100e-6));
    CHECK(r.cd == doctest::Approx(1.0 / 100e-6));
    SegMasks m = to_masks(lm);
    CHECK(bounding_box_area(m, s) == doctest::Approx(16e-6));
}

TEST_CASE("class areas") {
    std::vector<RegionStats> stats(3);
    stats[0].area_um2 = 10;
    stats[1].area_um2 = 30;
    stats[2].area_um2 = 7;
    stats[2].cls = RegionClass::Gutta;
    const auto a = class_areas(stats);
    CHECK(a.cells.count == 2);
    CHECK(a.cells.min_um2 == 10);
    CHECK(a.cells.max_um2 == 30);
    CHECK(a.cells.mean_um2 == 20);
    CHECK(a.guttae.count == 1);
}

TEST_CASE("report serialization") {
    MorphoReport r;
    r.cd = 2500.5;
    r.mca = 400.25;
    r.hex_pct = 55.0;
    r.cv_pct = 30.0;
    r.gar_pct = 4.5;
    r.n_cells = 120;
    r.n_guttae = 3;
    r.analyzed_area_mm2 = 0.048;
    CHECK(report_from_json(report_json(r)) == r);
    MorphoReport empty;
    CHECK(report_from_json(report_json(empty)) == empty);
    CHECK(report_csv_row(empty).find(",,") != std::string::npos);
    CHECK(report_pretty(r).find("CD") < report_pretty(r).find("HEX"));
    CHECK_THROWS_AS(report_from_json("{"), Error);
}
