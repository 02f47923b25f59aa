#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "endo/morphometry.hpp"
#include "endo/postprocess.hpp"

namespace endo {

struct BlandAltman {
    std::size_t n = 0;
    double mean_diff = 0.0;
    double sd = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    std::vector<std::pair<double, double>> pairs;  // (mean, diff)
};

enum class SdKind : std::uint8_t { Population, Sample };

/// diffs a - b, limits mean_diff +- 1.96 sd. Throws Error(Invalid) on length
/// mismatch or fewer than 2 pairs.
BlandAltman bland_altman(const std::vector<double>& a, const std::vector<double>& b, SdKind sd = SdKind::Population);

/// 3-class (cell / gutta / other) pixel agreement inside ref.roi, in percent.
double pixel_accuracy(const LabelMap& pred, const SegMasks& ref);
/// Per-image accuracies averaged over images.
double mean_pixel_accuracy(const std::vector<LabelMap>& preds, const std::vector<SegMasks>& refs);

struct EpochRow {
    int epoch = 0;
    double mae_mca = 0.0, mae_cv = 0.0, mae_cd = 0.0, mae_hex = 0.0;
};

/// Per-image absolute differences averaged over the test set. An absent
/// predicted or reference value counts as 0.
EpochRow morpho_mae(int epoch, const std::vector<MorphoReport>& pred, const std::vector<MorphoReport>& ref);

/// One row per checkpoint; predict maps a checkpoint index and test image index
/// to a report.
std::vector<EpochRow> epoch_mae_curves(const std::vector<int>& epochs, std::size_t test_count,
                                       const std::function<MorphoReport(std::size_t checkpoint, std::size_t image)>& predict,
                                       const std::vector<MorphoReport>& reference);

struct GarStratum {
    std::size_t n = 0;
    double mean = 0.0;
    double sd = 0.0;  // population
};

/// Per-stratum mean and sd of pred.gar_pct - ref.gar_pct.
std::map<std::string, GarStratum> gar_agreement(const std::vector<MorphoReport>& pred, const std::vector<MorphoReport>& ref,
                                                const std::vector<std::string>& strata);

/// Stratum of a ground-truth GAR%: "healthy" (0), "mild" (< 5), "moderate" (< 20), "severe".
std::string gar_stratum(double gar_pct);

std::string ba_csv(const BlandAltman& ba);
std::string epochs_csv(const std::vector<EpochRow>& rows);

struct Series {
    std::string name;
    std::vector<std::pair<double, double>> points;
};
/// Standalone line plot. The data points are repeated in a comment block.
std::string svg_line_plot(const std::string& title, const std::string& x_label, const std::string& y_label,
                          const std::vector<Series>& series);
/// Scatter of (mean, diff) with the mean and limit lines.
std::string svg_bland_altman(const std::string& title, const BlandAltman& ba);

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace endo
