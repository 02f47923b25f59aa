#include "endo/morphometry.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <sstream>

#include "json.hpp"

namespace endo {
using json = nlohmann::json;

std::vector<RegionStats> region_stats(const LabelMap& lm, const PixelScale& scale, Rect roi) {
    const int w = lm.width(), h = lm.height();
    if (roi.empty()) roi = Rect{0, 0, w, h};
    if (roi.x < 0 || roi.y < 0 || roi.x + roi.w > w || roi.y + roi.h > h)
        throw Error(ErrorKind::Invalid, "region_stats: roi outside the label map");
    std::map<std::int32_t, RegionStats> by_label;
    const auto& lab = lm.labels;
    for (int y = roi.y; y < roi.y + roi.h; ++y)
        for (int x = roi.x; x < roi.x + roi.w; ++x) {
            const auto l = lab(x, y);
            if (!l) continue;
            auto& s = by_label[l];
            if (s.label == 0) {
                s.label = l;
                s.cls = lm.classes.at(l);
            }
            ++s.area_px;
            if (roi.on_edge(x, y)) s.touches_border = true;
            const int y0 = std::max(roi.y, y - kNeighborRadius), y1 = std::min(roi.y + roi.h - 1, y + kNeighborRadius);
            const int x0 = std::max(roi.x, x - kNeighborRadius), x1 = std::min(roi.x + roi.w - 1, x + kNeighborRadius);
            for (int yy = y0; yy <= y1; ++yy)
                for (int xx = x0; xx <= x1; ++xx) {
                    const auto m = lab(xx, yy);
                    if (m && m != l) s.neighbor_labels.insert(m);
                }
        }
    std::vector<RegionStats> out;
    out.reserve(by_label.size());
    for (auto& [l, s] : by_label) {
        s.area_um2 = static_cast<double>(s.area_px) * scale.pixel_area_um2();
        out.push_back(std::move(s));
    }
    return out;
}

MorphoReport compute_report(const std::vector<RegionStats>& stats, double analyzed_area_mm2, HexNeighbors hex) {
    if (!(analyzed_area_mm2 > 0.0)) throw Error(ErrorKind::Invalid, "compute_report: analyzed area must be > 0");
    std::map<std::int32_t, RegionClass> cls;
    for (const auto& s : stats) cls.emplace(s.label, s.cls);
    MorphoReport r;
    r.analyzed_area_mm2 = analyzed_area_mm2;
    std::vector<double> areas;
    std::int64_t hexagonal = 0;
    std::vector<double> guttae;
    double gutta_um2 = 0.0;
    for (const auto& s : stats) {
        if (s.cls == RegionClass::Gutta) {
            ++r.n_guttae;
            guttae.push_back(s.area_um2);
            continue;
        }
        if (s.touches_border) continue;
        areas.push_back(s.area_um2);
        std::size_t sides = 0;
        for (auto n : s.neighbor_labels) {
            if (hex == HexNeighbors::AnyClass) {
                ++sides;
            } else {
                auto it = cls.find(n);
                if (it != cls.end() && it->second == RegionClass::Cell) ++sides;
            }
        }
        if (sides == 6) ++hexagonal;
    }
    r.n_cells = static_cast<std::int64_t>(areas.size());
    r.cd = static_cast<double>(r.n_cells) / analyzed_area_mm2;
    // Summation order must not depend on label numbering.
    std::sort(areas.begin(), areas.end());
    std::sort(guttae.begin(), guttae.end());
    for (double a : guttae) gutta_um2 += a;
    r.gar_pct = gutta_um2 / (analyzed_area_mm2 * 1e6) * 100.0;
    if (r.n_cells > 0) {
        const double n = static_cast<double>(r.n_cells);
        double sum = 0.0;
        for (double a : areas) sum += a;
        const double mean = sum / n;
        double ss = 0.0;
        for (double a : areas) ss += (a - mean) * (a - mean);
        r.mca = mean;
        r.cv_pct = std::sqrt(ss / n) / mean * 100.0;
        r.hex_pct = static_cast<double>(hexagonal) / n * 100.0;
    }
    return r;
}

double rect_area_mm2(const Rect& r, const PixelScale& scale) {
    return static_cast<double>(r.area()) * scale.pixel_area_um2() * 1e-6;
}

double bounding_box_area(const SegMasks& masks, const PixelScale& scale) {
    SegMasks m = masks;
    m.fit_roi();
    if (m.roi.empty()) throw Error(ErrorKind::Invalid, "bounding_box_area: masks are empty");
    return rect_area_mm2(m.roi, scale);
}

MorphoReport measure(const LabelMap& lm, const PixelScale& scale, const Rect& roi, HexNeighbors hex) {
    if (roi.empty()) return MorphoReport{};
    return compute_report(region_stats(lm, scale, roi), rect_area_mm2(roi, scale), hex);
}

ClassAreas class_areas(const std::vector<RegionStats>& stats) {
    ClassAreas out;
    for (const auto& s : stats) {
        auto& a = s.cls == RegionClass::Cell ? out.cells : out.guttae;
        if (a.count == 0) {
            a.min_um2 = a.max_um2 = s.area_um2;
        } else {
            a.min_um2 = std::min(a.min_um2, s.area_um2);
            a.max_um2 = std::max(a.max_um2, s.area_um2);
        }
        a.mean_um2 += s.area_um2;
        ++a.count;
    }
    for (auto* a : {&out.cells, &out.guttae})
        if (a->count) a->mean_um2 /= static_cast<double>(a->count);
    return out;
}

namespace {

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }
std::optional<double> opt_from(const json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<double>();
}
std::string csv_opt(const std::optional<double>& v) {
    if (!v) return "";
    std::ostringstream s;
    s << std::setprecision(10) << *v;
    return s.str();
}

}  // namespace

std::string report_json(const MorphoReport& r, int indent) {
    json j;
    j["cd"] = r.cd;
    j["mca"] = opt(r.mca);
    j["hex_pct"] = opt(r.hex_pct);
    j["cv_pct"] = opt(r.cv_pct);
    j["gar_pct"] = r.gar_pct;
    j["n_cells"] = r.n_cells;
    j["n_guttae"] = r.n_guttae;
    j["analyzed_area_mm2"] = r.analyzed_area_mm2;
    return j.dump(indent);
}

MorphoReport report_from_json(const std::string& text) {
    try {
        const auto j = json::parse(text);
        MorphoReport r;
        r.cd = j.at("cd").get<double>();
        r.mca = opt_from(j, "mca");
        r.hex_pct = opt_from(j, "hex_pct");
        r.cv_pct = opt_from(j, "cv_pct");
        r.gar_pct = j.at("gar_pct").get<double>();
        r.n_cells = j.at("n_cells").get<std::int64_t>();
        r.n_guttae = j.at("n_guttae").get<std::int64_t>();
        r.analyzed_area_mm2 = j.at("analyzed_area_mm2").get<double>();
        return r;
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Format, std::string("report json: ") + e.what());
    }
}

std::string report_csv_header() { return "cd,mca,hex_pct,cv_pct,gar_pct,n_cells,n_guttae,analyzed_area_mm2"; }

std::string report_csv_row(const MorphoReport& r) {
    std::ostringstream s;
    s << std::setprecision(10) << r.cd << ',' << csv_opt(r.mca) << ',' << csv_opt(r.hex_pct) << ',' << csv_opt(r.cv_pct) << ','
      << r.gar_pct << ',' << r.n_cells << ',' << r.n_guttae << ',' << r.analyzed_area_mm2;
    return s.str();
}

std::string report_pretty(const MorphoReport& r) {
    std::ostringstream s;
    auto o = [](const std::optional<double>& v, const char* unit) {
        std::ostringstream t;
        if (v)
            t << std::fixed << std::setprecision(1) << *v << unit;
        else
            t << "n/a";
        return t.str();
    };
    s << std::fixed << std::setprecision(1);
    s << "CD   " << r.cd << " cells/mm2\n";
    s << "MCA  " << o(r.mca, " um2") << "\n";
    s << "GAR  " << std::setprecision(2) << r.gar_pct << " %\n" << std::setprecision(1);
    s << "HEX  " << o(r.hex_pct, " %") << "\n";
    s << "CV   " << o(r.cv_pct, " %") << "\n";
    s << "cells " << r.n_cells << ", guttae " << r.n_guttae << ", area " << std::setprecision(4) << r.analyzed_area_mm2 << " mm2\n";
    return s.str();
}

}  // namespace endo
