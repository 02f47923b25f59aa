#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "endo/image_io.hpp"
#include "endo/morphometry.hpp"
#include "endo/synth.hpp"

using namespace endo;
namespace fs = std::filesystem;

TEST_CASE("generation is deterministic per seed") {
    SynthConfig c;
    c.seed = 42;
    c.guttae_fraction = 8.0;
    const auto a = generate(c);
    const auto b = generate(c);
    CHECK(a.first == b.first);
    CHECK(a.second == b.second);
    c.seed = 43;
    CHECK_FALSE(generate(c).second == a.second);
}

TEST_CASE("guttae fraction lands within 2 points of the target") {
    for (double target : {0.0, 3.0, 10.0, 25.0}) {
        for (std::uint64_t seed = 1; seed <= 3; ++seed) {
            SynthConfig c;
            c.seed = seed;
            c.guttae_fraction = target;
            const auto [img, masks] = generate(c);
            CHECK(std::abs(mask_gar_pct(masks) - target) <= 2.0);
            CHECK_NOTHROW(masks.validate());
        }
    }
}

TEST_CASE("rendered image and tessellation look plausible") {
    SynthConfig c;
    c.seed = 7;
    const auto [img, masks] = generate(c);
    CHECK(img.width() == 192);
    bool in_range = true;
    for (float v : img.pixels.values()) in_range &= v >= 0.0f && v <= 255.0f && v == std::floor(v);
    CHECK(in_range);
    const auto lm = reference_labels(masks);
    CHECK(lm.region_count() >= 80);
    CHECK(lm.region_count() <= 120);
    const auto r = measure(lm, img.scale, masks.roi);
    REQUIRE(r.hex_pct.has_value());
    CHECK(*r.hex_pct >= 30.0);
    CHECK(*r.cv_pct < 40.0);
    CHECK(r.gar_pct == 0.0);
}

TEST_CASE("config validation") {
    SynthConfig c;
    c.width = 4;
    CHECK_THROWS_AS(generate(c), Error);
    c = {};
    c.guttae_fraction = 95.0;
    CHECK_THROWS_AS(generate(c), Error);
    c = {};
    c.n_cells = 0;
    CHECK_THROWS_AS(generate(c), Error);
}

TEST_CASE("dataset generation and manifest") {
    SynthConfig t;
    t.width = t.height = 128;
    t.n_cells = 40;
    t.guttae_fraction = 20.0;
    const auto items = generate_dataset(t, 8, 5);
    REQUIRE(items.size() == 8);
    CHECK(items[0].guttae_fraction == 0.0);
    CHECK(items[4].guttae_fraction == 0.0);
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i % 4) CHECK(items[i].guttae_fraction > 0.0);
        CHECK(items[i].guttae_fraction <= 20.0);
    }
    CHECK(items[1].seed != items[2].seed);

    const auto dir = fs::temp_directory_path() / "endo_test_synth";
    fs::remove_all(dir);
    CHECK_THROWS_AS(write_dataset(dir, items, SplitSizes{5, 1, 1}), Error);
    const auto manifest = write_dataset(dir, items, SplitSizes{5, 1, 2});
    const auto entries = read_manifest(manifest);
    REQUIRE(entries.size() == 8);
    CHECK(entries[0].split == "train");
    CHECK(entries[5].split == "validation");
    CHECK(entries[7].split == "test");
    const auto [img, masks] = load_three_page_mask(entries[3].path);
    CHECK(img == items[3].image);
    CHECK(masks.cells == items[3].masks.cells);
    CHECK(masks.guttae == items[3].masks.guttae);
    fs::remove_all(dir);
}
