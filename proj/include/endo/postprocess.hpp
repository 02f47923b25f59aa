#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "endo/image.hpp"

namespace endo {

enum class RegionClass : std::uint8_t { Cell, Gutta };

const char* to_string(RegionClass c);
RegionClass region_class_from_string(const std::string& s);

/// Instance segmentation. Label 0 is a watershed line or unassigned pixel.
struct LabelMap {
    Grid<std::int32_t> labels;
    std::map<std::int32_t, RegionClass> classes;

    LabelMap() = default;
    LabelMap(int width, int height) : labels(width, height, 0) {}

    int width() const noexcept { return labels.width(); }
    int height() const noexcept { return labels.height(); }
    std::size_t region_count() const noexcept { return classes.size(); }
    std::int32_t max_label() const noexcept { return classes.empty() ? 0 : classes.rbegin()->first; }

    /// Every label present has a class and vice versa; each label is one
    /// 4-connected component; distinct same-class regions never 4-touch.
    /// Throws Error(Invariant) naming the first violation.
    void validate() const;

    friend bool operator==(const LabelMap&, const LabelMap&) = default;
};

inline constexpr float kCellThreshold = 0.2f;
inline constexpr float kGuttaThreshold = 0.0f;
inline constexpr int kMinRegionPixels = 10;

BinaryGrid threshold_cells(const SignedDistMap& map, float threshold = kCellThreshold);
BinaryGrid threshold_guttae(const SignedDistMap& map, float threshold = kGuttaThreshold);

struct WatershedOptions {
    float cell_threshold = kCellThreshold;
    float gutta_threshold = kGuttaThreshold;  // gutta markers are values below this
    int min_region_pixels = kMinRegionPixels;
};

/// Marker-controlled priority flood on elevation -|map|. Markers are the
/// 4-connected components of threshold_cells (class cell) and threshold_guttae
/// (class gutta). A pixel reached by two labels becomes a line (0). Regions
/// smaller than min_region_pixels are dissolved into lines. Output labels are
/// sequential in raster order.
LabelMap watershed_decode(const SignedDistMap& map, const WatershedOptions& opt = {});

/// Renumbers labels 1..N in order of first appearance in a raster scan.
LabelMap relabel_sequential(const LabelMap& lm);

/// 4-connected components of cells (class cell) and guttae (class gutta).
LabelMap label_components(const SegMasks& masks);
/// Instance labels of ground-truth masks as the pipeline would see them:
/// watershed_decode(encode(masks)), so watershed lines are 1 px as in predictions.
LabelMap reference_labels(const SegMasks& masks);
/// Class masks of a label map; roi is the tight bounding box.
SegMasks to_masks(const LabelMap& lm);

/// Pseudo distance map of a per-pixel class grid (PixelClass values): cells
/// positive, guttae negative, so watershed_decode can split the mask output.
SignedDistMap class_map_to_distance(const Grid<std::uint8_t>& classes);

/// 16-bit grayscale PNG of the labels plus <stem>.classes.json mapping label to
/// "cell" / "gutta". Throws Error(Invalid) for labels above 65535.
void export_label_map(const std::filesystem::path& png_path, const LabelMap& lm);
LabelMap import_label_map(const std::filesystem::path& png_path);
std::string classes_json(const LabelMap& lm);

}  // namespace endo
