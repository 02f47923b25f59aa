#include <random>

#include "doctest.h"
#include "endo/evaluation.hpp"
#include "oracles/oracles.hpp"

using namespace endo;

TEST_CASE("bland altman basics") {
    const std::vector<double> a{1, 2, 3, 4}, b{1, 2, 3, 4};
    const auto same = bland_altman(a, b);
    CHECK(same.mean_diff == 0.0);
    CHECK(same.ci_low == 0.0);
    CHECK(same.ci_high == 0.0);

    const std::vector<double> c{2, 2, 5, 3};
    const auto ab = bland_altman(a, c), ba = bland_altman(c, a);
    CHECK(ab.mean_diff == -ba.mean_diff);
    CHECK(ab.sd == ba.sd);
    CHECK(ab.ci_low == doctest::Approx(-ba.ci_high));

    std::vector<double> d;
    for (std::size_t i = 0; i < a.size(); ++i) d.push_back(a[i] - c[i]);
    CHECK(ab.mean_diff == doctest::Approx(oracle::mean(d)));
    CHECK(ab.sd == doctest::Approx(oracle::pop_sd(d)));
    const auto sample = bland_altman(a, c, SdKind::Sample);
    CHECK(sample.sd == doctest::Approx(oracle::pop_sd(d) * std::sqrt(4.0 / 3.0)));
    CHECK(ab.pairs[2].first == 4.0);
    CHECK(ab.pairs[2].second == -2.0);

    CHECK_THROWS_AS(bland_altman({1}, {1}), Error);
    CHECK_THROWS_AS(bland_altman({1, 2}, {1}), Error);
}

TEST_CASE("pixel accuracy") {
    LabelMap lm(4, 2);
    lm.labels(0, 0) = 1;
    lm.labels(1, 0) = 1;
    lm.labels(3, 1) = 2;
    lm.classes = {{1, RegionClass::Cell}, {2, RegionClass::Gutta}};
    SegMasks m(4, 2);
    m.cells(0, 0) = 1;
    m.guttae(1, 0) = 1;
    m.guttae(3, 1) = 1;
    CHECK(pixel_accuracy(lm, m) == doctest::Approx(100.0 * 7 / 8));
    m.roi = Rect{2, 0, 2, 2};
    CHECK(pixel_accuracy(lm, m) == doctest::Approx(100.0));
    CHECK(mean_pixel_accuracy({lm, lm}, {m, m}) == doctest::Approx(100.0));
    CHECK_THROWS_AS(pixel_accuracy(LabelMap(3, 3), m), Error);
}

TEST_CASE("morphometric MAE treats absent values as zero") {
    MorphoReport p, r;
    p.cd = 2000;
    r.cd = 2100;
    p.mca = 500;
    r.mca = 480;
    r.cv_pct = 30;  // predicted report has no CV
    const auto row = morpho_mae(10, {p, p}, {r, r});
    CHECK(row.epoch == 10);
    CHECK(row.mae_cd == doctest::Approx(100));
    CHECK(row.mae_mca == doctest::Approx(20));
    CHECK(row.mae_cv == doctest::Approx(30));
    CHECK(row.mae_hex == 0.0);

    const auto rows = epoch_mae_curves({10, 20}, 2, [&](std::size_t c, std::size_t) {
        MorphoReport x = r;
        x.cd += c == 0 ? 50.0 : 10.0;
        return x;
    }, {r, r});
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].mae_cd == doctest::Approx(50));
    CHECK(rows[1].mae_cd == doctest::Approx(10));
    CHECK(rows[1].epoch == 20);
}

TEST_CASE("GAR strata") {
    CHECK(gar_stratum(0.0) == "healthy");
    CHECK(gar_stratum(4.9) == "mild");
    CHECK(gar_stratum(5.0) == "moderate");
    CHECK(gar_stratum(25.0) == "severe");
    MorphoReport a, b, c;
    a.gar_pct = 3;
    b.gar_pct = 1;
    c.gar_pct = 2;
    const auto g = gar_agreement({a, b}, {c, c}, {"mild", "mild"});
    CHECK(g.at("mild").n == 2);
    CHECK(g.at("mild").mean == doctest::Approx(0.0));
    CHECK(g.at("mild").sd == doctest::Approx(1.0));
}

TEST_CASE("csv and svg output") {
    const auto ba = bland_altman({1, 2, 3}, {1.5, 2, 2});
    const auto csv = ba_csv(ba);
    CHECK(csv.rfind("n,mean_diff,sd,ci_low,ci_high\n3,", 0) == 0);
    const auto svg = svg_bland_altman("CD", ba);
    CHECK(svg.find("<svg") != std::string::npos);
    CHECK(svg.find("</svg>") != std::string::npos);
    const auto plot = svg_line_plot("MAE <CD>", "epoch", "MAE", {{"dm", {{10, 5}, {20, 3}}}, {"mask", {{10, 8}, {20, 6}}}});
    CHECK(plot.find("MAE &lt;CD&gt;") != std::string::npos);
    CHECK(plot.find("dm") != std::string::npos);
    CHECK(epochs_csv({EpochRow{10, 1, 2, 3, 4}}) == "epoch,mae_mca,mae_cv,mae_cd,mae_hex\n10,1,2,3,4\n");
}
