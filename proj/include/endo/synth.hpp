#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "endo/image.hpp"

namespace endo {

struct SynthConfig {
    int width = 192;
    int height = 192;
    int n_cells = 100;
    double guttae_fraction = 0.0;  // target GAR%
    double intensity_noise = 0.03;
    double illumination_gradient = 0.15;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Lloyd-relaxed Voronoi tessellation rendered as a specular-microscopy-like
/// image, with guttae blobs replacing cells until the target GAR% is within 2%.
/// Throws Error(Numeric) when the target cannot be met.
std::pair<GrayImage, SegMasks> generate(const SynthConfig& config);

/// Measured GAR% of masks over their ROI.
double mask_gar_pct(const SegMasks& masks);

struct SynthItem {
    GrayImage image;
    SegMasks masks;
    std::uint64_t seed = 0;
    double guttae_fraction = 0.0;
};

/// Item i uses seed mix(seed, i). guttae_fraction of the template is the upper
/// end of a per-item draw when vary_guttae is set, giving a spread of severities.
std::vector<SynthItem> generate_dataset(const SynthConfig& tmpl, int count, std::uint64_t seed, bool vary_guttae = true);

/// Writes <dir>/<split>/img_NNN.tif three-page files plus manifest.json. Returns
/// the manifest path.
struct SplitSizes {
    int train = 57, validation = 10, test = 23;
    int total() const { return train + validation + test; }
};
std::filesystem::path write_dataset(const std::filesystem::path& dir, const std::vector<SynthItem>& items, const SplitSizes& split);

struct DatasetEntry {
    std::filesystem::path path;
    std::string split;
    std::uint64_t seed = 0;
    double guttae_fraction = 0.0;
};
std::vector<DatasetEntry> read_manifest(const std::filesystem::path& manifest);

}  // namespace endo
