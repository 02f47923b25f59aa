#pragma once

// Small builders shared by the unit and acceptance tests.

#include <map>
#include <random>

#include "endo/postprocess.hpp"
#include "oracles/oracles.hpp"

namespace fixture {

/// LabelMap over a tessellation; roughly gutta_p of the regions become guttae.
/// Labels whose pixels were thinned into several pieces are renumbered per
/// component so the map satisfies the invariants.
inline endo::LabelMap tessellation_map(const endo::Grid<std::int32_t>& tess, double gutta_p, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::bernoulli_distribution g(gutta_p);
    std::map<std::int32_t, endo::RegionClass> site_class;
    endo::Grid<int> comp;
    const int n = oracle::flood_components(tess.width(), tess.height(), [&](int x, int y) { return tess(x, y) != 0; }, comp);
    (void)n;
    endo::LabelMap lm(tess.width(), tess.height());
    // Components of one site are distinguished by the flood labels, which
    // never merge across sites because sites are separated by lines.
    for (std::size_t i = 0; i < tess.size(); ++i) {
        if (!tess[i]) continue;
        const auto site = tess[i];
        if (!site_class.count(site)) site_class[site] = g(rng) ? endo::RegionClass::Gutta : endo::RegionClass::Cell;
        lm.labels[i] = comp[i];
        lm.classes[comp[i]] = site_class[site];
    }
    return lm;
}

inline std::map<std::int32_t, bool> gutta_flags(const endo::LabelMap& lm) {
    std::map<std::int32_t, bool> out;
    for (const auto& [l, c] : lm.classes) out[l] = c == endo::RegionClass::Gutta;
    return out;
}

inline endo::SegMasks masks_of(const endo::LabelMap& lm) {
    endo::SegMasks m(lm.width(), lm.height());
    for (std::size_t i = 0; i < lm.labels.size(); ++i) {
        if (!lm.labels[i]) continue;
        (lm.classes.at(lm.labels[i]) == endo::RegionClass::Cell ? m.cells : m.guttae)[i] = 1;
    }
    return m;
}

}  // namespace fixture
