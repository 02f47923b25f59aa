#pragma once

#include <filesystem>
#include <memory>

#include "endo/postprocess.hpp"
#include "endo/training.hpp"

namespace endo {

struct Prediction {
    SignedDistMap distance;  // regression output, or the class map's pseudo distances
    LabelMap labels;
};

/// Network output decoded to instances. Mask models go through
/// class_map_to_distance so both kinds share the watershed step.
Prediction predict_labels(const UNet<float>& model, const GrayImage& image, const WatershedOptions& opt = {});

/// run.json next to a weight file records the architecture it was trained with.
void save_run_info(const std::filesystem::path& run_dir, const UNetConfig& unet);
std::optional<UNetConfig> load_run_info(const std::filesystem::path& run_dir);

/// Loads weights, taking the architecture from run.json beside the file when
/// present and from fallback otherwise. Throws Error(NotFound) for a missing file.
std::shared_ptr<const UNet<float>> load_model(const std::filesystem::path& weights, const UNetConfig& fallback);

}  // namespace endo
