#include "endo/postprocess.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <queue>
#include <sstream>
#include <tuple>

#include "json.hpp"

#include "endo/distance_codec.hpp"
#include "endo/png.hpp"
#include "endo/unet.hpp"

namespace endo {
namespace fs = std::filesystem;

const char* to_string(RegionClass c) { return c == RegionClass::Cell ? "cell" : "gutta"; }

RegionClass region_class_from_string(const std::string& s) {
    if (s == "cell") return RegionClass::Cell;
    if (s == "gutta") return RegionClass::Gutta;
    throw Error(ErrorKind::Invalid, "unknown region class '" + s + "'");
}

namespace {

constexpr int kDx[4] = {1, -1, 0, 0};
constexpr int kDy[4] = {0, 0, 1, -1};

// 4-connected components of fg, labelled from first_label upward in raster
// order. Returns the number of components.
int label_into(const BinaryGrid& fg, Grid<std::int32_t>& out, std::int32_t first_label) {
    const int w = fg.width(), h = fg.height();
    std::vector<std::size_t> stack;
    std::int32_t next = first_label;
    for (std::size_t i = 0; i < fg.size(); ++i) {
        if (!fg[i] || out[i]) continue;
        out[i] = next;
        stack.push_back(i);
        while (!stack.empty()) {
            const std::size_t p = stack.back();
            stack.pop_back();
            const int x = static_cast<int>(p % static_cast<std::size_t>(w)), y = static_cast<int>(p / static_cast<std::size_t>(w));
            for (int k = 0; k < 4; ++k) {
                const int nx = x + kDx[k], ny = y + kDy[k];
                if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
                const std::size_t q = fg.index(nx, ny);
                if (fg[q] && !out[q]) {
                    out[q] = next;
                    stack.push_back(q);
                }
            }
        }
        ++next;
    }
    return next - first_label;
}

}  // namespace

void LabelMap::validate() const {
    const int w = width(), h = height();
    std::map<std::int32_t, std::size_t> first;
    std::map<std::int32_t, std::size_t> count;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const auto l = labels[i];
        if (l < 0) throw Error(ErrorKind::Invariant, "label map: negative label");
        if (l == 0) continue;
        if (!classes.count(l)) throw Error(ErrorKind::Invariant, "label map: label " + std::to_string(l) + " has no class");
        first.emplace(l, i);
        ++count[l];
    }
    for (const auto& [l, c] : classes)
        if (!count.count(l)) throw Error(ErrorKind::Invariant, "label map: class entry for absent label " + std::to_string(l));
    // Connectivity: flood each label from its first pixel.
    Grid<std::uint8_t> seen(w, h, 0);
    std::vector<std::size_t> stack;
    for (const auto& [l, start] : first) {
        std::size_t reached = 0;
        stack.push_back(start);
        seen[start] = 1;
        while (!stack.empty()) {
            const std::size_t p = stack.back();
            stack.pop_back();
            ++reached;
            const int x = static_cast<int>(p % static_cast<std::size_t>(w)), y = static_cast<int>(p / static_cast<std::size_t>(w));
            for (int k = 0; k < 4; ++k) {
                const int nx = x + kDx[k], ny = y + kDy[k];
                if (!labels.contains(nx, ny)) continue;
                const std::size_t q = labels.index(nx, ny);
                if (labels[q] == l && !seen[q]) {
                    seen[q] = 1;
                    stack.push_back(q);
                }
            }
        }
        if (reached != count[l])
            throw Error(ErrorKind::Invariant, "label map: label " + std::to_string(l) + " is not 4-connected");
    }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const auto a = labels(x, y);
            if (!a) continue;
            const std::int32_t right = x + 1 < w ? labels(x + 1, y) : 0, down = y + 1 < h ? labels(x, y + 1) : 0;
            for (auto b : {right, down})
                if (b && b != a && classes.at(a) == classes.at(b))
                    throw Error(ErrorKind::Invariant, "label map: same-class regions " + std::to_string(a) + " and " +
                                                          std::to_string(b) + " touch without a line");
        }
}

BinaryGrid threshold_cells(const SignedDistMap& map, float threshold) {
    BinaryGrid out(map.width(), map.height(), 0);
    for (std::size_t i = 0; i < map.size(); ++i) out[i] = map[i] > threshold ? 1 : 0;
    return out;
}

BinaryGrid threshold_guttae(const SignedDistMap& map, float threshold) {
    BinaryGrid out(map.width(), map.height(), 0);
    for (std::size_t i = 0; i < map.size(); ++i) out[i] = map[i] < threshold ? 1 : 0;
    return out;
}

LabelMap watershed_decode(const SignedDistMap& map, const WatershedOptions& opt) {
    if (!(opt.cell_threshold > 0.0f)) throw Error(ErrorKind::Invalid, "watershed: cell_threshold must be > 0");
    if (!(opt.gutta_threshold <= 0.0f)) throw Error(ErrorKind::Invalid, "watershed: gutta_threshold must be <= 0");
    const int w = map.width(), h = map.height();
    LabelMap lm(w, h);
    auto& lab = lm.labels;
    const int n_cells = label_into(threshold_cells(map, opt.cell_threshold), lab, 1);
    const int n_guttae = label_into(threshold_guttae(map, opt.gutta_threshold), lab, n_cells + 1);
    std::vector<RegionClass> cls(static_cast<std::size_t>(n_cells + n_guttae + 1), RegionClass::Cell);
    for (int l = n_cells + 1; l <= n_cells + n_guttae; ++l) cls[static_cast<std::size_t>(l)] = RegionClass::Gutta;
    if (n_cells + n_guttae == 0) return lm;

    // Flood: min-heap on (elevation, raster index).
    constexpr std::int32_t kLine = -1;
    using Item = std::pair<float, std::size_t>;
    std::priority_queue<Item, std::vector<Item>, std::greater<Item>> heap;
    Grid<std::uint8_t> queued(w, h, 0);
    auto push_neighbors = [&](std::size_t p) {
        const int x = static_cast<int>(p % static_cast<std::size_t>(w)), y = static_cast<int>(p / static_cast<std::size_t>(w));
        for (int k = 0; k < 4; ++k) {
            const int nx = x + kDx[k], ny = y + kDy[k];
            if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
            const std::size_t q = lab.index(nx, ny);
            if (lab[q] == 0 && !queued[q]) {
                queued[q] = 1;
                heap.emplace(-std::abs(map[q]), q);
            }
        }
    };
    for (std::size_t p = 0; p < lab.size(); ++p)
        if (lab[p] > 0) push_neighbors(p);
    while (!heap.empty()) {
        const std::size_t p = heap.top().second;
        heap.pop();
        const int x = static_cast<int>(p % static_cast<std::size_t>(w)), y = static_cast<int>(p / static_cast<std::size_t>(w));
        std::int32_t found = 0;
        bool conflict = false;
        for (int k = 0; k < 4; ++k) {
            const int nx = x + kDx[k], ny = y + kDy[k];
            if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
            const std::int32_t l = lab(nx, ny);
            if (l <= 0) continue;
            if (found == 0)
                found = l;
            else if (l != found)
                conflict = true;
        }
        if (conflict || found == 0) {
            lab[p] = kLine;
            continue;
        }
        lab[p] = found;
        push_neighbors(p);
    }
    for (auto& v : lab.values())
        if (v == kLine) v = 0;

    // Dissolve small regions.
    std::vector<std::size_t> area(cls.size(), 0);
    for (auto v : lab.values()) ++area[static_cast<std::size_t>(v)];
    for (auto& v : lab.values())
        if (v > 0 && area[static_cast<std::size_t>(v)] < static_cast<std::size_t>(opt.min_region_pixels)) v = 0;
    for (std::size_t l = 1; l < cls.size(); ++l)
        if (area[l] >= static_cast<std::size_t>(opt.min_region_pixels)) lm.classes.emplace(static_cast<std::int32_t>(l), cls[l]);
    return relabel_sequential(lm);
}

LabelMap relabel_sequential(const LabelMap& lm) {
    LabelMap out(lm.width(), lm.height());
    std::map<std::int32_t, std::int32_t> remap;
    for (std::size_t i = 0; i < lm.labels.size(); ++i) {
        const auto l = lm.labels[i];
        if (!l) continue;
        auto it = remap.find(l);
        if (it == remap.end()) {
            it = remap.emplace(l, static_cast<std::int32_t>(remap.size() + 1)).first;
            out.classes.emplace(it->second, lm.classes.at(l));
        }
        out.labels[i] = it->second;
    }
    return out;
}

LabelMap label_components(const SegMasks& masks) {
    masks.validate();
    LabelMap lm(masks.width(), masks.height());
    const int nc = label_into(masks.cells, lm.labels, 1);
    const int ng = label_into(masks.guttae, lm.labels, nc + 1);
    for (int l = 1; l <= nc; ++l) lm.classes.emplace(l, RegionClass::Cell);
    for (int l = nc + 1; l <= nc + ng; ++l) lm.classes.emplace(l, RegionClass::Gutta);
    return lm;
}

LabelMap reference_labels(const SegMasks& masks) { return watershed_decode(encode(masks)); }

SegMasks to_masks(const LabelMap& lm) {
    SegMasks m(lm.width(), lm.height());
    for (std::size_t i = 0; i < lm.labels.size(); ++i) {
        const auto l = lm.labels[i];
        if (!l) continue;
        (lm.classes.at(l) == RegionClass::Cell ? m.cells : m.guttae)[i] = 1;
    }
    m.fit_roi();
    return m;
}

SignedDistMap class_map_to_distance(const Grid<std::uint8_t>& classes) {
    SegMasks m(classes.width(), classes.height());
    for (std::size_t i = 0; i < classes.size(); ++i) {
        m.cells[i] = classes[i] == static_cast<std::uint8_t>(PixelClass::Cell);
        m.guttae[i] = classes[i] == static_cast<std::uint8_t>(PixelClass::Gutta);
    }
    m.fit_roi();
    return encode(m);
}

std::string classes_json(const LabelMap& lm) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [l, c] : lm.classes) j[std::to_string(l)] = to_string(c);
    return j.dump(2);
}

namespace {

fs::path classes_path(const fs::path& png_path) {
    auto p = png_path;
    p.replace_extension(".classes.json");
    return p;
}

}  // namespace

void export_label_map(const fs::path& png_path, const LabelMap& lm) {
    if (lm.max_label() > 65535) throw Error(ErrorKind::Invalid, "label map: more than 65535 labels do not fit a 16-bit PNG");
    Grid<float> g(lm.width(), lm.height());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = static_cast<float>(lm.labels[i]);
    png::write_gray(png_path, g, 16);
    std::ofstream out(classes_path(png_path), std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + classes_path(png_path).string());
    out << classes_json(lm) << '\n';
}

LabelMap import_label_map(const fs::path& png_path) {
    const auto img = png::read(png_path);
    if (img.channels.size() != 1) throw Error(ErrorKind::Format, png_path.string() + ": expected a single-channel label PNG");
    const auto& g = img.channels.front();
    LabelMap lm(g.width(), g.height());
    for (std::size_t i = 0; i < g.size(); ++i) lm.labels[i] = static_cast<std::int32_t>(g[i]);
    std::ifstream in(classes_path(png_path));
    if (!in) throw Error(ErrorKind::Io, "missing " + classes_path(png_path).string());
    nlohmann::json j;
    try {
        in >> j;
        for (const auto& [k, v] : j.items()) lm.classes.emplace(std::stoi(k), region_class_from_string(v.get<std::string>()));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::Format, classes_path(png_path).string() + ": " + e.what());
    }
    lm.validate();
    return lm;
}

}  // namespace endo
