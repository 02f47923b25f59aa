#include <filesystem>

#include "doctest.h"
#include "endo/distance_codec.hpp"
#include "endo/postprocess.hpp"
#include "endo/unet.hpp"
#include "fixtures.hpp"

using namespace endo;
namespace fs = std::filesystem;

namespace {

LabelMap two_squares(RegionClass a, RegionClass b, bool touching) {
    LabelMap lm(10, 6);
    for (int y = 1; y < 5; ++y)
        for (int x = 1; x < 5; ++x) lm.labels(x, y) = 1;
    const int x0 = touching ? 5 : 6;
    for (int y = 1; y < 5; ++y)
        for (int x = x0; x < x0 + 3; ++x) lm.labels(x, y) = 2;
    lm.classes = {{1, a}, {2, b}};
    return lm;
}

}  // namespace

TEST_CASE("label map invariants") {
    CHECK_NOTHROW(two_squares(RegionClass::Cell, RegionClass::Cell, false).validate());
    CHECK_NOTHROW(two_squares(RegionClass::Cell, RegionClass::Gutta, true).validate());
    CHECK_THROWS_AS(two_squares(RegionClass::Cell, RegionClass::Cell, true).validate(), Error);

    auto lm = two_squares(RegionClass::Cell, RegionClass::Gutta, false);
    lm.classes.erase(2);
    CHECK_THROWS_AS(lm.validate(), Error);

    lm = two_squares(RegionClass::Cell, RegionClass::Gutta, false);
    lm.classes[7] = RegionClass::Cell;
    CHECK_THROWS_AS(lm.validate(), Error);

    lm = two_squares(RegionClass::Cell, RegionClass::Gutta, false);
    lm.labels(9, 0) = 1;  // second component of label 1
    CHECK_THROWS_AS(lm.validate(), Error);
}

TEST_CASE("region class names") {
    CHECK(std::string(to_string(RegionClass::Gutta)) == "gutta");
    CHECK(region_class_from_string("cell") == RegionClass::Cell);
    CHECK_THROWS_AS(region_class_from_string("nucleus"), Error);
}

TEST_CASE("thresholds") {
    SignedDistMap m(4, 1);
    m[0] = 0.19f;
    m[1] = 0.21f;
    m[2] = -0.01f;
    m[3] = 0.0f;
    const auto c = threshold_cells(m);
    const auto g = threshold_guttae(m);
    CHECK((c[0] == 0 && c[1] == 1 && c[2] == 0 && c[3] == 0));
    CHECK((g[0] == 0 && g[1] == 0 && g[2] == 1 && g[3] == 0));
    const auto g2 = threshold_guttae(m, -0.005f);
    CHECK(g2[2] == 1);
    CHECK(threshold_guttae(m, -0.5f)[2] == 0);
    CHECK_THROWS_AS(watershed_decode(m, {.gutta_threshold = 0.1f}), Error);
}

TEST_CASE("decoding an encoded tessellation recovers every region") {
    for (std::uint64_t seed = 1; seed <= 6; ++seed) {
        const auto tess = oracle::tessellate(96, 80, oracle::random_sites(96, 80, 40, seed));
        const auto truth = fixture::tessellation_map(tess, 0.2, seed);
        const auto masks = fixture::masks_of(truth);
        const auto dec = watershed_decode(encode(masks));
        CHECK_NOTHROW(dec.validate());
        std::size_t big = 0;
        std::map<std::int32_t, std::int64_t> area;
        for (auto v : truth.labels.values())
            if (v) ++area[v];
        for (const auto& [l, a] : area) big += a >= kMinRegionPixels;
        CHECK(dec.region_count() == big);
        // Every decoded region sits inside one true region of the same class.
        for (const auto& [l, c] : dec.classes) {
            std::map<std::int32_t, int> hits;
            for (std::size_t i = 0; i < dec.labels.size(); ++i)
                if (dec.labels[i] == l) ++hits[truth.labels[i]];
            std::int32_t best = 0;
            int most = 0, total = 0;
            for (const auto& [t, n] : hits) {
                if (t == 0) continue;  // truth line pixels
                total += n;
                if (n > most) most = n, best = t;
            }
            REQUIRE(best != 0);
            CHECK(truth.classes.at(best) == c);
            CHECK(most >= 0.99 * total);
        }
    }
}

TEST_CASE("watershed lines separate touching cells") {
    SegMasks m(20, 9);
    for (int y = 1; y < 8; ++y)
        for (int x = 1; x < 19; ++x) m.cells(x, y) = x != 10;
    const auto lm = watershed_decode(encode(m));
    CHECK(lm.region_count() == 2);
    for (int y = 1; y < 8; ++y) CHECK(lm.labels(10, y) == 0);
    CHECK_NOTHROW(lm.validate());
}

TEST_CASE("small regions are dissolved and labels are sequential") {
    SignedDistMap d(12, 12, 0.0f);
    for (int y = 1; y < 6; ++y)
        for (int x = 1; x < 6; ++x) d(x, y) = 1.0f;
    d(9, 9) = d(10, 9) = 1.0f;  // 2 px region
    const auto lm = watershed_decode(d);
    CHECK(lm.region_count() == 1);
    CHECK(lm.classes.begin()->first == 1);
    CHECK(lm.labels(9, 9) == 0);

    LabelMap sparse(3, 1);
    sparse.labels[0] = 9;
    sparse.labels[2] = 4;
    sparse.classes = {{9, RegionClass::Cell}, {4, RegionClass::Gutta}};
    const auto seq = relabel_sequential(sparse);
    CHECK(seq.labels[0] == 1);
    CHECK(seq.labels[2] == 2);
    CHECK(seq.classes.at(2) == RegionClass::Gutta);
}

TEST_CASE("to_masks and reference labels") {
    auto lm = two_squares(RegionClass::Cell, RegionClass::Gutta, false);
    const auto m = to_masks(lm);
    CHECK(m.roi == Rect{1, 1, 8, 4});
    CHECK(m.cells(2, 2) == 1);
    CHECK(m.guttae(7, 2) == 1);
    CHECK(m.cells(7, 2) == 0);
    CHECK_NOTHROW(reference_labels(m).validate());
}

TEST_CASE("class map to distance keeps the partition") {
    Grid<std::uint8_t> cls(30, 12, static_cast<std::uint8_t>(PixelClass::Other));
    for (int y = 2; y < 10; ++y)
        for (int x = 2; x < 12; ++x) cls(x, y) = static_cast<std::uint8_t>(PixelClass::Cell);
    for (int y = 2; y < 10; ++y)
        for (int x = 16; x < 26; ++x) cls(x, y) = static_cast<std::uint8_t>(PixelClass::Gutta);
    const auto d = class_map_to_distance(cls);
    CHECK(d(5, 5) > 0.0f);
    CHECK(d(20, 5) < 0.0f);
    const auto lm = watershed_decode(d);
    CHECK(lm.region_count() == 2);
}

TEST_CASE("label map export round trip") {
    const auto dir = fs::temp_directory_path() / "endo_test_postprocess";
    fs::create_directories(dir);
    const auto tess = oracle::tessellate(64, 48, oracle::random_sites(64, 48, 20, 3));
    const auto lm = fixture::tessellation_map(tess, 0.3, 3);
    export_label_map(dir / "labels.png", lm);
    CHECK(fs::exists(dir / "labels.classes.json"));
    CHECK(import_label_map(dir / "labels.png") == lm);

    LabelMap huge(2, 1);
    huge.labels[0] = 70000;
    huge.classes[70000] = RegionClass::Cell;
    CHECK_THROWS_AS(export_label_map(dir / "huge.png", huge), Error);
    fs::remove_all(dir);
}
