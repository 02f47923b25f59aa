#include "endo/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "json.hpp"

#include "endo/image_io.hpp"
#include "endo/morphometry.hpp"
#include "endo/postprocess.hpp"

namespace endo {
namespace fs = std::filesystem;
using json = nlohmann::json;

void SynthConfig::validate() const {
    if (width < 8 || height < 8) throw Error(ErrorKind::Invalid, "synth: image must be at least 8x8");
    if (n_cells < 1) throw Error(ErrorKind::Invalid, "synth: n_cells must be >= 1");
    if (!(guttae_fraction >= 0.0 && guttae_fraction <= 80.0)) throw Error(ErrorKind::Invalid, "synth: guttae_fraction must be in [0, 80]");
    if (!(intensity_noise >= 0.0)) throw Error(ErrorKind::Invalid, "synth: intensity_noise must be >= 0");
}

namespace {

constexpr int kMinCellPixels = 30;

struct Seed2 {
    double x, y;
};

Grid<std::int32_t> voronoi(int w, int h, const std::vector<Seed2>& seeds) {
    Grid<std::int32_t> v(w, h, 0);
#pragma omp parallel for schedule(static)
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double best = 1e300;
            std::int32_t arg = 0;
            for (std::size_t i = 0; i < seeds.size(); ++i) {
                const double dx = x + 0.5 - seeds[i].x, dy = y + 0.5 - seeds[i].y;
                const double d = dx * dx + dy * dy;
                if (d < best) {
                    best = d;
                    arg = static_cast<std::int32_t>(i);
                }
            }
            v(x, y) = arg;
        }
    return v;
}

void lloyd(int w, int h, std::vector<Seed2>& seeds, int iterations) {
    for (int it = 0; it < iterations; ++it) {
        const auto v = voronoi(w, h, seeds);
        std::vector<double> sx(seeds.size(), 0.0), sy(seeds.size(), 0.0), n(seeds.size(), 0.0);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const auto i = static_cast<std::size_t>(v(x, y));
                sx[i] += x + 0.5;
                sy[i] += y + 0.5;
                n[i] += 1.0;
            }
        for (std::size_t i = 0; i < seeds.size(); ++i)
            if (n[i] > 0) seeds[i] = {sx[i] / n[i], sy[i] / n[i]};
    }
}

// Keeps only the largest 4-connected component of each cell and drops cells
// below the size floor.
void clean_cells(BinaryGrid& cells) {
    SegMasks m(cells.width(), cells.height());
    m.cells = cells;
    const auto lm = label_components(m);
    std::vector<std::size_t> area(lm.classes.size() + 1, 0);
    for (auto l : lm.labels.values()) ++area[static_cast<std::size_t>(l)];
    for (std::size_t i = 0; i < cells.size(); ++i)
        cells[i] = lm.labels[i] && area[static_cast<std::size_t>(lm.labels[i])] >= static_cast<std::size_t>(kMinCellPixels);
}

}  // namespace

double mask_gar_pct(const SegMasks& masks) {
    if (masks.roi.empty()) return 0.0;
    std::int64_t g = 0;
    for (int y = masks.roi.y; y < masks.roi.y + masks.roi.h; ++y)
        for (int x = masks.roi.x; x < masks.roi.x + masks.roi.w; ++x) g += masks.guttae(x, y);
    return 100.0 * static_cast<double>(g) / static_cast<double>(masks.roi.area());
}

std::pair<GrayImage, SegMasks> generate(const SynthConfig& cfg) {
    cfg.validate();
    const int w = cfg.width, h = cfg.height;
    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> ux(0.0, w), uy(0.0, h), u01(0.0, 1.0);

    // Dart throwing with a minimum spacing that relaxes after repeated misses.
    std::vector<Seed2> seeds;
    seeds.reserve(static_cast<std::size_t>(cfg.n_cells));
    double min_d = 0.8 * std::sqrt(static_cast<double>(w) * h / cfg.n_cells);
    int misses = 0;
    while (static_cast<int>(seeds.size()) < cfg.n_cells) {
        const Seed2 c{ux(rng), uy(rng)};
        bool ok = true;
        for (const auto& s : seeds)
            if ((s.x - c.x) * (s.x - c.x) + (s.y - c.y) * (s.y - c.y) < min_d * min_d) {
                ok = false;
                break;
            }
        if (ok) {
            seeds.push_back(c);
            misses = 0;
        } else if (++misses > 200) {
            min_d *= 0.95;
            misses = 0;
        }
    }
    lloyd(w, h, seeds, 2);
    const auto vor = voronoi(w, h, seeds);

    // Dark boundary: a pixel with another site in its 3x3 neighbourhood,
    // giving 2 px lines. The cell masks are the interiors eroded by one pixel.
    auto uniform3x3 = [&](const auto& same, int x, int y) {
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx)
                if (vor.contains(x + dx, y + dy) && !same(x + dx, y + dy)) return false;
        return true;
    };
    BinaryGrid interior(w, h, 0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            interior(x, y) = uniform3x3([&](int nx, int ny) { return vor(nx, ny) == vor(x, y); }, x, y);
    SegMasks masks(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) masks.cells(x, y) = uniform3x3([&](int nx, int ny) { return interior(nx, ny) != 0; }, x, y);
    clean_cells(masks.cells);
    masks.fit_roi();
    const Rect roi = masks.roi.empty() ? Rect{0, 0, w, h} : masks.roi;

    // Guttae: union-of-disk blobs, each rejected if it overshoots the target.
    const double target = cfg.guttae_fraction;
    if (target > 0.0) {
        const double cell_r = std::sqrt(static_cast<double>(w) * h / cfg.n_cells / M_PI);
        const double roi_area = static_cast<double>(roi.area());
        std::int64_t gutta_px = 0;
        int failures = 0;
        while (100.0 * static_cast<double>(gutta_px) / roi_area < target - 2.0 + 0.5) {
            if (failures > 4000) throw Error(ErrorKind::Numeric, "synth: could not reach the requested guttae fraction");
            const double remaining = (target - 100.0 * static_cast<double>(gutta_px) / roi_area) / 100.0 * roi_area;
            // Blob scale shrinks as the target is approached.
            const double scale = std::clamp(std::sqrt(std::max(remaining, 1.0) / M_PI) / cell_r, 0.4, 2.5);
            const double cx = roi.x + u01(rng) * roi.w, cy = roi.y + u01(rng) * roi.h;
            const int disks = 2 + static_cast<int>(u01(rng) * 4);
            BinaryGrid blob(w, h, 0);
            for (int d = 0; d < disks; ++d) {
                const double r = cell_r * scale * (0.5 + 0.6 * u01(rng));
                const double ox = cx + (u01(rng) - 0.5) * cell_r * scale, oy = cy + (u01(rng) - 0.5) * cell_r * scale;
                const int x0 = std::max(roi.x, static_cast<int>(ox - r)), x1 = std::min(roi.x + roi.w - 1, static_cast<int>(ox + r) + 1);
                const int y0 = std::max(roi.y, static_cast<int>(oy - r)), y1 = std::min(roi.y + roi.h - 1, static_cast<int>(oy + r) + 1);
                for (int y = y0; y <= y1; ++y)
                    for (int x = x0; x <= x1; ++x)
                        if ((x + 0.5 - ox) * (x + 0.5 - ox) + (y + 0.5 - oy) * (y + 0.5 - oy) <= r * r) blob(x, y) = 1;
            }
            std::int64_t added = 0;
            for (std::size_t i = 0; i < blob.size(); ++i) added += blob[i] && !masks.guttae[i];
            if (added == 0 || 100.0 * static_cast<double>(gutta_px + added) / roi_area > target + 2.0 - 0.25) {
                ++failures;
                continue;
            }
            for (std::size_t i = 0; i < blob.size(); ++i)
                if (blob[i]) masks.guttae[i] = 1;
            gutta_px += added;
        }
        // Cells give way to guttae with a 1-px gap.
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                if (!masks.cells(x, y)) continue;
                bool near = masks.guttae(x, y);
                for (int k = 0; k < 4 && !near; ++k) {
                    const int nx = x + (k == 0) - (k == 1), ny = y + (k == 2) - (k == 3);
                    near = masks.guttae.contains(nx, ny) && masks.guttae(nx, ny);
                }
                if (near) masks.cells(x, y) = 0;
            }
        clean_cells(masks.cells);
    }
    // GAR was aimed at the tessellation's ROI; keep it.
    masks.roi = roi;
    const double gar = mask_gar_pct(masks);
    if (target > 0.0 && std::abs(gar - target) > 2.0)
        throw Error(ErrorKind::Numeric, "synth: guttae fraction " + std::to_string(gar) + "% misses the target");

    // Rendering. A cell is drawn bright over its interior, i.e. one pixel
    // beyond its mask.
    auto bright = [&](int x, int y) {
        if (!interior(x, y) || masks.guttae(x, y)) return false;
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx)
                if (masks.cells.contains(x + dx, y + dy) && masks.cells(x + dx, y + dy) && vor(x + dx, y + dy) == vor(x, y)) return true;
        return false;
    };
    std::vector<double> cell_level(seeds.size());
    for (auto& c : cell_level) c = 0.55 + 0.25 * u01(rng);
    std::normal_distribution<double> noise(0.0, 1.0);
    Grid<float> base(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double v;
            if (bright(x, y))
                v = cell_level[static_cast<std::size_t>(vor(x, y))] + 0.03 * (u01(rng) - 0.5);
            else if (masks.guttae(x, y))
                v = 0.05 + 0.2 * u01(rng);
            else
                v = 0.2 + 0.15 * u01(rng);
            base(x, y) = static_cast<float>(v);
        }
    // Mild 3x3 blur softens the synthetic edges.
    GrayImage img(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            int n = 0;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx)
                    if (base.contains(x + dx, y + dy)) {
                        s += (dx == 0 && dy == 0 ? 4.0 : 1.0) * base(x + dx, y + dy);
                        n += dx == 0 && dy == 0 ? 4 : 1;
                    }
            double v = s / n;
            v += cfg.illumination_gradient * ((x + 0.5) / w - 0.5);
            v += cfg.intensity_noise * noise(rng);
            img(x, y) = static_cast<float>(std::round(std::clamp(v, 0.0, 1.0) * 255.0));
        }
    masks.validate();
    return {std::move(img), std::move(masks)};
}

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t i) {
    // splitmix64 step over seed ^ index
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (i + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace

std::vector<SynthItem> generate_dataset(const SynthConfig& tmpl, int count, std::uint64_t seed, bool vary_guttae) {
    if (count < 0) throw Error(ErrorKind::Invalid, "synth: count must be >= 0");
    std::vector<SynthItem> items(static_cast<std::size_t>(count));
    std::vector<std::string> errors(items.size());
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < count; ++i) {
        auto& it = items[static_cast<std::size_t>(i)];
        SynthConfig c = tmpl;
        c.seed = mix_seed(seed, static_cast<std::uint64_t>(i));
        if (vary_guttae && tmpl.guttae_fraction > 0.0) {
            // Every fourth image healthy; the rest spread over (0, max].
            std::mt19937_64 r(c.seed ^ 0xA5A5A5A5ULL);
            c.guttae_fraction = i % 4 == 0 ? 0.0 : std::uniform_real_distribution<double>(0.1, 1.0)(r) * tmpl.guttae_fraction;
        }
        try {
            auto [img, masks] = generate(c);
            it.image = std::move(img);
            it.masks = std::move(masks);
            it.seed = c.seed;
            it.guttae_fraction = c.guttae_fraction;
        } catch (const std::exception& e) {
            errors[static_cast<std::size_t>(i)] = e.what();
        }
    }
    for (std::size_t i = 0; i < errors.size(); ++i)
        if (!errors[i].empty()) throw Error(ErrorKind::Numeric, "synth item " + std::to_string(i) + ": " + errors[i]);
    return items;
}

fs::path write_dataset(const fs::path& dir, const std::vector<SynthItem>& items, const SplitSizes& split) {
    if (static_cast<int>(items.size()) != split.total())
        throw Error(ErrorKind::Invalid, "synth: " + std::to_string(items.size()) + " items do not match split total " +
                                            std::to_string(split.total()));
    json manifest;
    manifest["items"] = json::array();
    for (std::size_t i = 0; i < items.size(); ++i) {
        const int k = static_cast<int>(i);
        const char* name = k < split.train ? "train" : k < split.train + split.validation ? "validation" : "test";
        fs::create_directories(dir / name);
        char file[32];
        std::snprintf(file, sizeof file, "img_%03d.tif", k);
        const fs::path rel = fs::path(name) / file;
        save_three_page_mask(dir / rel, items[i].image, items[i].masks);
        const auto gt = reference_labels(items[i].masks);
        json e;
        e["file"] = rel.generic_string();
        e["split"] = name;
        e["seed"] = items[i].seed;
        e["guttae_fraction"] = items[i].guttae_fraction;
        e["report"] = json::parse(report_json(measure(gt, items[i].image.scale, items[i].masks.roi)));
        manifest["items"].push_back(e);
    }
    const auto path = dir / "manifest.json";
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
    out << manifest.dump(2) << '\n';
    return path;
}

std::vector<DatasetEntry> read_manifest(const fs::path& manifest) {
    std::ifstream in(manifest);
    if (!in) throw Error(ErrorKind::Io, "cannot open " + manifest.string());
    std::vector<DatasetEntry> out;
    try {
        json j;
        in >> j;
        for (const auto& e : j.at("items")) {
            DatasetEntry d;
            d.path = manifest.parent_path() / e.at("file").get<std::string>();
            d.split = e.at("split").get<std::string>();
            d.seed = e.at("seed").get<std::uint64_t>();
            d.guttae_fraction = e.at("guttae_fraction").get<double>();
            out.push_back(std::move(d));
        }
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Format, manifest.string() + ": " + e.what());
    }
    return out;
}

}  // namespace endo
