#include <filesystem>
#include <random>

#include "doctest.h"
#include "endo/annotation.hpp"
#include "endo/image_io.hpp"
#include "fixtures.hpp"

using namespace endo;
namespace fs = std::filesystem;

namespace {

// Two 10x10 cells separated by a vertical line at x = 11.
LabelMap pair_map() {
    LabelMap lm(24, 14);
    for (int y = 2; y < 12; ++y) {
        for (int x = 1; x < 11; ++x) lm.labels(x, y) = 1;
        for (int x = 12; x < 22; ++x) lm.labels(x, y) = 2;
    }
    lm.classes = {{1, RegionClass::Cell}, {2, RegionClass::Cell}};
    return lm;
}

EditSession pair_session() { return EditSession(GrayImage(24, 14, 100.0f), pair_map()); }

std::int64_t area_of(const LabelMap& lm, std::int32_t l) {
    std::int64_t n = 0;
    for (auto v : lm.labels.values()) n += v == l;
    return n;
}

}  // namespace

TEST_CASE("line rasterization is 8-connected and inclusive") {
    const auto pts = rasterize_line({0, 0}, {5, 2});
    REQUIRE(pts.size() == 6);
    CHECK(pts.front() == Point{0, 0});
    CHECK(pts.back() == Point{5, 2});
    for (std::size_t i = 1; i < pts.size(); ++i) {
        CHECK(std::abs(pts[i].x - pts[i - 1].x) <= 1);
        CHECK(std::abs(pts[i].y - pts[i - 1].y) <= 1);
    }
    CHECK(rasterize_polyline({{0, 0}, {3, 0}, {3, 3}}).size() == 7);
}

TEST_CASE("split and merge") {
    auto s = pair_session();
    const auto r = s.split(1, {{5, 0}, {5, 13}});
    REQUIRE(r.applied);
    REQUIRE(r.labels.size() == 2);
    s.labels().validate();
    CHECK(s.labels().region_count() == 3);
    CHECK(area_of(s.labels(), r.labels[0]) == 40);
    CHECK(area_of(s.labels(), r.labels[1]) == 50);
    CHECK(s.log().size() == 1);
    CHECK(s.dirty());

    const auto m = s.merge(r.labels[0], r.labels[1]);
    REQUIRE(m.applied);
    CHECK(area_of(s.labels(), r.labels[0]) == 100);
    CHECK(s.labels().region_count() == 2);

    SUBCASE("a cut that does not disconnect is a no-op") {
        const auto before = s.labels();
        const auto w = s.split(2, {{14, 4}, {16, 4}});
        CHECK_FALSE(w.applied);
        CHECK_FALSE(w.warning.empty());
        CHECK(s.labels() == before);
        CHECK(s.log().size() == 2);
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(s.split(99, {{0, 0}, {1, 1}}), Error);
        CHECK_THROWS_AS(s.merge(2, 2), Error);
        CHECK_THROWS_AS(s.merge(2, 77), Error);
    }
}

TEST_CASE("merge across the line restores it and needs adjacency") {
    auto s = pair_session();
    REQUIRE(s.merge(1, 2).applied);
    CHECK(s.labels().region_count() == 1);
    CHECK(area_of(s.labels(), 1) == 210);
    s.labels().validate();

    LabelMap far(30, 10);
    for (int y = 1; y < 9; ++y) {
        for (int x = 1; x < 6; ++x) far.labels(x, y) = 1;
        for (int x = 20; x < 25; ++x) far.labels(x, y) = 2;
    }
    far.classes = {{1, RegionClass::Cell}, {2, RegionClass::Cell}};
    EditSession f(GrayImage(30, 10), far);
    CHECK_THROWS_AS(f.merge(1, 2), Error);
}

TEST_CASE("merging across classes needs force") {
    auto lm = pair_map();
    lm.classes[2] = RegionClass::Gutta;
    EditSession s(GrayImage(24, 14), lm);
    CHECK_THROWS_AS(s.merge(1, 2), Error);
    REQUIRE(s.merge(1, 2, true).applied);
    CHECK(s.labels().classes.at(1) == RegionClass::Cell);
    s.labels().validate();
}

TEST_CASE("set_class keeps regions separated") {
    LabelMap lm(24, 14);
    for (int y = 2; y < 12; ++y) {
        for (int x = 1; x < 11; ++x) lm.labels(x, y) = 1;
        for (int x = 11; x < 22; ++x) lm.labels(x, y) = 2;  // touching, different classes
    }
    lm.classes = {{1, RegionClass::Cell}, {2, RegionClass::Gutta}};
    EditSession s(GrayImage(24, 14), lm);
    CHECK_FALSE(s.set_class(2, RegionClass::Gutta).applied);
    REQUIRE(s.set_class(2, RegionClass::Cell).applied);
    s.labels().validate();
    CHECK(s.labels().labels(11, 5) == 0);
    CHECK(s.labels().classes.at(2) == RegionClass::Cell);
}

TEST_CASE("draw and erase") {
    auto s = pair_session();
    // New gutta painted over empty space.
    const auto d = s.draw(0, RegionClass::Gutta, {{2, 0}, {20, 0}}, 0);
    REQUIRE(d.applied);
    const auto g = d.labels.at(0);
    CHECK(s.labels().classes.at(g) == RegionClass::Gutta);
    CHECK(area_of(s.labels(), g) == 19);
    s.labels().validate();
    // Extending cell 2 into the line would touch cell 1; those pixels stay empty.
    REQUIRE(s.draw(2, RegionClass::Cell, {{16, 12}, {11, 12}}, 1).applied);
    CHECK(s.labels().labels(11, 12) == 2);
    CHECK(s.labels().labels(11, 11) == 0);
    s.labels().validate();
    CHECK_FALSE(s.draw(1, RegionClass::Cell, {{11, 5}}, 0).applied);

    // Erasing a band through cell 1 splits it.
    const auto e = s.erase({{5, 2}, {5, 11}}, 0);
    REQUIRE(e.applied);
    s.labels().validate();
    CHECK(s.labels().region_count() == 4);
    CHECK_FALSE(s.erase({{23, 13}}, 0).applied);
    CHECK_THROWS_AS(s.erase({}, 1), Error);
}

TEST_CASE("undo, replay and JSON") {
    auto s = pair_session();
    const auto start = s.labels();
    s.split(1, {{5, 0}, {5, 13}});
    s.draw(0, RegionClass::Gutta, {{2, 0}, {20, 0}}, 0);
    const auto after_two = s.labels();
    s.erase({{15, 5}}, 2);
    CHECK(EditSession::replay(s.initial(), s.log()) == s.labels());

    const auto restored = EditSession::from_json(s.image(), s.to_json());
    CHECK(restored.labels() == s.labels());
    CHECK(restored.log() == s.log());

    s.undo();
    CHECK(s.labels() == after_two);
    s.undo();
    s.undo();
    CHECK(s.labels() == start);
    CHECK_THROWS_AS(s.undo(), Error);

    for (const auto& e : restored.log()) CHECK(edit_from_json(edit_to_json(e)) == e);
    CHECK_THROWS_AS(edit_from_json(R"({"op":"explode"})"), Error);
    CHECK_THROWS_AS(edit_from_json("not json"), Error);
}

TEST_CASE("undo history is bounded") {
    auto s = pair_session();
    for (int i = 0; i < 70; ++i) s.draw(0, RegionClass::Gutta, {{i % 20 + 2, 0}}, 0), s.erase({{i % 20 + 2, 0}}, 0);
    CHECK(s.undo_depth() == EditSession::kUndoDepth);
    CHECK(s.log().size() == 140);
}

TEST_CASE("live report and export round trip") {
    const auto tess = oracle::tessellate(96, 80, oracle::random_sites(96, 80, 30, 9));
    const auto masks = fixture::masks_of(fixture::tessellation_map(tess, 0.2, 9));
    EditSession s(GrayImage(96, 80, 120.0f), masks);
    s.split(s.labels().classes.begin()->first, {{0, 40}, {95, 40}});
    const auto live = s.live_report();
    CHECK(live.report == measure(s.labels(), PixelScale{}, live.roi));
    CHECK(live.areas.cells.count + live.areas.guttae.count == static_cast<std::int64_t>(s.labels().region_count()));

    const auto dir = fs::temp_directory_path() / "endo_test_annotation";
    fs::remove_all(dir);
    fs::create_directories(dir);
    s.export_to(dir / "out.tif");
    s.export_to(dir / "out.tif");
    CHECK(fs::exists(dir / "out.tif.bak"));
    const auto [img, back] = load_three_page_mask(dir / "out.tif");
    CHECK(img == s.image());
    EditSession again(img, back);
    CHECK(again.live_report().report == live.report);
    fs::remove_all(dir);

    EditSession empty(GrayImage(10, 10));
    CHECK(empty.live_report().report == MorphoReport{});
    CHECK_THROWS_AS(EditSession(GrayImage(10, 10), LabelMap(5, 5)), Error);
}
