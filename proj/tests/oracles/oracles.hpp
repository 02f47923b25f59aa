#pragma once

// Independent reference computations used by the tests. Deliberately naive.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <set>
#include <random>
#include <vector>

#include "endo/grid.hpp"

namespace oracle {

/// O(N^2) squared distance to the nearest background pixel, with everything
/// outside the grid counted as background.
inline endo::Grid<std::int32_t> brute_edt_squared(const endo::BinaryGrid& m) {
    const int w = m.width(), h = m.height();
    endo::Grid<std::int32_t> out(w, h, 0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            if (!m(x, y)) continue;
            // nearest outside pixel
            std::int64_t best = std::min({x + 1, y + 1, w - x, h - y});
            best *= best;
            for (int yy = 0; yy < h; ++yy)
                for (int xx = 0; xx < w; ++xx)
                    if (!m(xx, yy)) {
                        const std::int64_t d = std::int64_t(xx - x) * (xx - x) + std::int64_t(yy - y) * (yy - y);
                        best = std::min(best, d);
                    }
            out(x, y) = static_cast<std::int32_t>(best);
        }
    return out;
}

inline endo::BinaryGrid random_mask(int w, int h, double p, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::bernoulli_distribution b(p);
    endo::BinaryGrid g(w, h);
    for (auto& v : g.values()) v = b(rng) ? 1 : 0;
    return g;
}

inline endo::BinaryGrid disk_mask(int w, int h, double cx, double cy, double r) {
    endo::BinaryGrid g(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) g(x, y) = (x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r;
    return g;
}

/// 4-connected component labeling by flood fill; returns label grid (0 bg) and count.
template <typename Pred>
inline int flood_components(int w, int h, Pred fg, endo::Grid<int>& labels) {
    labels = endo::Grid<int>(w, h, 0);
    int n = 0;
    std::vector<std::pair<int, int>> stack;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            if (!fg(x, y) || labels(x, y)) continue;
            ++n;
            stack.push_back({x, y});
            labels(x, y) = n;
            while (!stack.empty()) {
                auto [cx, cy] = stack.back();
                stack.pop_back();
                const int dx[] = {1, -1, 0, 0}, dy[] = {0, 0, 1, -1};
                for (int k = 0; k < 4; ++k) {
                    const int nx = cx + dx[k], ny = cy + dy[k];
                    if (nx < 0 || ny < 0 || nx >= w || ny >= h || labels(nx, ny) || !fg(nx, ny)) continue;
                    labels(nx, ny) = n;
                    stack.push_back({nx, ny});
                }
            }
        }
    return n;
}

/// Plain two-pass statistics over a vector.
inline double mean(const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}
inline double pop_sd(const std::vector<double>& v) {
    const double m = mean(v);
    double s = 0;
    for (double x : v) s += (x - m) * (x - m);
    return v.empty() ? 0.0 : std::sqrt(s / static_cast<double>(v.size()));
}

/// Nearest-site tessellation with 1-px lines. Ties go to the site with the
/// smallest (y, x), so the partition is translation-invariant on a periodic
/// lattice. Of two 4-adjacent pixels of different sites, the one of the later
/// site becomes a line. Labels are site index + 1.
inline endo::Grid<std::int32_t> tessellate(int w, int h, const std::vector<std::pair<int, int>>& sites) {
    endo::Grid<std::int32_t> near(w, h, 0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            std::int64_t best = std::numeric_limits<std::int64_t>::max();
            int by = 0, bx = 0;
            for (std::size_t i = 0; i < sites.size(); ++i) {
                const auto [sx, sy] = sites[i];
                const std::int64_t d = std::int64_t(sx - x) * (sx - x) + std::int64_t(sy - y) * (sy - y);
                if (d < best || (d == best && (sy < by || (sy == by && sx < bx)))) {
                    best = d;
                    by = sy;
                    bx = sx;
                    near(x, y) = static_cast<std::int32_t>(i + 1);
                }
            }
        }
    endo::Grid<std::int32_t> out = near;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const auto v = near(x, y);
            for (int k = 0; k < 4; ++k) {
                const int nx = x + (k == 0) - (k == 1), ny = y + (k == 2) - (k == 3);
                if (nx >= 0 && ny >= 0 && nx < w && ny < h && near(nx, ny) < v) out(x, y) = 0;
            }
        }
    return out;
}

/// Hexagonal lattice sites with horizontal pitch s (even) and row pitch r,
/// odd rows shifted by s / 2, covering a margin beyond the grid.
inline std::vector<std::pair<int, int>> hex_sites(int w, int h, int s, int r) {
    std::vector<std::pair<int, int>> out;
    for (int j = -1; j * r < h + r; ++j)
        for (int i = -1; i * s < w + s; ++i) out.push_back({i * s + ((j & 1) ? s / 2 : 0), j * r});
    return out;
}

inline std::vector<std::pair<int, int>> random_sites(int w, int h, int n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> ux(0, w - 1), uy(0, h - 1);
    std::vector<std::pair<int, int>> out;
    for (int i = 0; i < n; ++i) out.push_back({ux(rng), uy(rng)});
    return out;
}

/// Straightforward recount of the morphometric parameters over roi. gutta maps
/// a label to true for guttae. Neighbors: labels whose 5x5 (2-px) dilations,
/// clipped to the roi, share a pixel. Cells with a pixel on the roi edge are
/// ignored except for GAR.
struct NaiveReport {
    double cd = 0, mca = 0, hex = 0, cv = 0, gar = 0;
    long n_cells = 0, n_guttae = 0;
};

inline NaiveReport naive_report(const endo::Grid<std::int32_t>& lab, const std::map<std::int32_t, bool>& gutta,
                                int rx, int ry, int rw, int rh, double px_um2, bool cells_only_hex = false) {
    std::map<std::int32_t, long> area;
    std::map<std::int32_t, bool> border;
    std::map<std::int32_t, std::set<std::int32_t>> nb;
    std::map<std::pair<int, int>, std::set<std::int32_t>> covered;  // dilated pixel -> labels
    for (int y = ry; y < ry + rh; ++y)
        for (int x = rx; x < rx + rw; ++x) {
            const auto v = lab(x, y);
            if (!v) continue;
            ++area[v];
            if (x == rx || y == ry || x == rx + rw - 1 || y == ry + rh - 1) border[v] = true;
            for (int dy = -2; dy <= 2; ++dy)
                for (int dx = -2; dx <= 2; ++dx) {
                    const int nx = x + dx, ny = y + dy;
                    if (nx >= rx && ny >= ry && nx < rx + rw && ny < ry + rh) covered[{nx, ny}].insert(v);
                }
        }
    for (const auto& [px, labels] : covered)
        for (auto v : labels)
            for (auto u : labels)
                if (u != v && !(cells_only_hex && gutta.at(u))) nb[v].insert(u);
    NaiveReport r;
    const double roi_um2 = double(rw) * rh * px_um2;
    std::vector<double> areas;
    long hexa = 0;
    double g = 0;
    for (const auto& [l, a] : area) {
        if (gutta.at(l)) {
            ++r.n_guttae;
            g += a * px_um2;
            continue;
        }
        if (border[l]) continue;
        areas.push_back(a * px_um2);
        if (nb[l].size() == 6) ++hexa;
    }
    r.n_cells = static_cast<long>(areas.size());
    r.cd = r.n_cells / (roi_um2 * 1e-6);
    r.gar = 100.0 * g / roi_um2;
    if (!areas.empty()) {
        r.mca = mean(areas);
        r.cv = 100.0 * pop_sd(areas) / r.mca;
        r.hex = 100.0 * hexa / double(areas.size());
    }
    return r;
}

}  // namespace oracle
