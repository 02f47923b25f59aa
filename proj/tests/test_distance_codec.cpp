#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "endo/distance_codec.hpp"
#include "oracles/oracles.hpp"

using namespace endo;

TEST_CASE("edt matches brute force on random masks") {
    for (std::uint64_t seed = 1; seed <= 12; ++seed) {
        const int w = 5 + static_cast<int>(seed * 7 % 31), h = 3 + static_cast<int>(seed * 11 % 29);
        const double p = 0.5 + 0.04 * static_cast<double>(seed);
        const auto m = oracle::random_mask(w, h, std::min(p, 0.97), seed);
        const auto want = oracle::brute_edt_squared(m);
        CHECK(edt_squared(m) == want);
        CHECK(edt_squared_serial(m) == want);
    }
}

TEST_CASE("edt edge cases") {
    SUBCASE("all background") {
        BinaryGrid m(7, 4, 0);
        CHECK(edt_squared(m) == Grid<std::int32_t>(7, 4, 0));
    }
    SUBCASE("all foreground uses the frame as background") {
        BinaryGrid m(9, 5, 1);
        CHECK(edt_squared(m) == oracle::brute_edt_squared(m));
        CHECK(edt_squared(m)(4, 2) == 9);
    }
    SUBCASE("single pixel and single row") {
        BinaryGrid one(1, 1, 1);
        CHECK(edt_squared(one)(0, 0) == 1);
        BinaryGrid row(13, 1, 1);
        row(6, 0) = 0;
        CHECK(edt_squared(row) == oracle::brute_edt_squared(row));
    }
    SUBCASE("disk") {
        const auto m = oracle::disk_mask(41, 37, 20.3, 18.6, 14.0);
        CHECK(edt_squared(m) == oracle::brute_edt_squared(m));
    }
}

TEST_CASE("encode is positive in cells, negative in guttae, zero elsewhere") {
    SegMasks s(30, 20);
    for (int y = 2; y < 10; ++y)
        for (int x = 2; x < 12; ++x) s.cells(x, y) = 1;
    for (int y = 12; y < 18; ++y)
        for (int x = 15; x < 25; ++x) s.guttae(x, y) = 1;
    s.fit_roi();
    const auto d = encode(s);
    const auto ec = oracle::brute_edt_squared(s.cells);
    const auto eg = oracle::brute_edt_squared(s.guttae);
    for (int y = 0; y < 20; ++y)
        for (int x = 0; x < 30; ++x) {
            const float want = std::sqrt(float(ec(x, y))) - std::sqrt(float(eg(x, y)));
            CHECK(d(x, y) == doctest::Approx(want));
        }
    auto back = sign_masks(d);
    CHECK(back.cells == s.cells);
    CHECK(back.guttae == s.guttae);
}

TEST_CASE("encode rejects overlapping masks") {
    SegMasks s(8, 8);
    s.cells(3, 3) = 1;
    s.guttae(3, 3) = 1;
    CHECK_THROWS_AS(encode(s), Error);
}

TEST_CASE("distance map dump round-trips") {
    SignedDistMap m(5, 3);
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = static_cast<float>(i) * 0.5f - 3.25f;
    const auto path = std::filesystem::temp_directory_path() / "endo_sdm_roundtrip.bin";
    save_distance_map(path, m);
    CHECK(load_distance_map(path) == m);
    std::filesystem::remove(path);
}
