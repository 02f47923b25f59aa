#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "endo/postprocess.hpp"

namespace endo {

struct RegionStats {
    std::int32_t label = 0;
    RegionClass cls = RegionClass::Cell;
    std::int64_t area_px = 0;  // pixels inside the ROI
    double area_um2 = 0.0;
    bool touches_border = false;
    std::set<std::int32_t> neighbor_labels;
};

/// HEX% convention: count every adjacent region as a side, or cells only.
enum class HexNeighbors : std::uint8_t { AnyClass, CellsOnly };

struct MorphoReport {
    double cd = 0.0;                 // cells / mm^2
    std::optional<double> mca;       // um^2
    std::optional<double> hex_pct;
    std::optional<double> cv_pct;
    double gar_pct = 0.0;
    std::int64_t n_cells = 0;
    std::int64_t n_guttae = 0;
    double analyzed_area_mm2 = 0.0;

    friend bool operator==(const MorphoReport&, const MorphoReport&) = default;
};

/// Two regions are neighbors when their 2-px dilations overlap, i.e. some
/// pixels lie within this Chebyshev distance. Reaches across a 3-px gap.
inline constexpr int kNeighborRadius = 4;

/// Per-region statistics over the pixels inside roi (whole grid if empty).
/// Regions with no pixel inside roi are omitted. touches_border: some pixel lies
/// on the ROI edge.
std::vector<RegionStats> region_stats(const LabelMap& lm, const PixelScale& scale, Rect roi = {});

/// Border-touching cells are left out of CD, MCA, HEX% and CV%; every gutta
/// counts toward GAR%. CV uses the population standard deviation.
MorphoReport compute_report(const std::vector<RegionStats>& stats, double analyzed_area_mm2,
                            HexNeighbors hex = HexNeighbors::AnyClass);

/// Tight bounding box of cells | guttae in mm^2. Throws Error(Invalid) when empty.
double bounding_box_area(const SegMasks& masks, const PixelScale& scale);
double rect_area_mm2(const Rect& r, const PixelScale& scale);

/// region_stats + compute_report over roi, analyzed area = roi area.
MorphoReport measure(const LabelMap& lm, const PixelScale& scale, const Rect& roi, HexNeighbors hex = HexNeighbors::AnyClass);

/// Minimum / maximum / mean area per class, for the annotation panels.
struct AreaSummary {
    std::int64_t count = 0;
    double min_um2 = 0.0, max_um2 = 0.0, mean_um2 = 0.0;
};
struct ClassAreas {
    AreaSummary cells, guttae;
};
ClassAreas class_areas(const std::vector<RegionStats>& stats);

std::string report_json(const MorphoReport& r, int indent = 2);
MorphoReport report_from_json(const std::string& text);
std::string report_csv_header();
std::string report_csv_row(const MorphoReport& r);
/// Multi-line summary: CD, MCA, GAR first, then the rest.
std::string report_pretty(const MorphoReport& r);

}  // namespace endo
