#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "endo/morphometry.hpp"
#include "endo/postprocess.hpp"
#include "endo/synth.hpp"
#include "endo/training.hpp"
#include "endo/unet.hpp"

namespace endo {

/// Everything the command-line tools read from the config file. Relative
/// paths are resolved against the config file's directory.
///
///   seed = 1
///   [paths]    data = "data"  weights = "runs/dm/weights.bin"  output = "out"
///              inputs = ["a.tif"]  runs = ["runs/dm", "runs/mask"]  web = "web"
///   [scale]    x_um = 0.78125  y_um = 0.5208
///   [unet]     levels  base_channels  leaky_slope  head = "dm" | "mask"  instance_norm
///   [train]    lr  epochs  batch_size  augment_target_count  refresh_prob
///              checkpoint_every  patch_stride
///   [synth]    width  height  n_cells  guttae_fraction  intensity_noise
///              illumination_gradient  train  validation  test
///   [postprocess] cell_threshold  gutta_threshold  min_region_pixels  hex_neighbors = "any" | "cells"
///   [service]  host  port  workers  max_sessions
struct PipelineConfig {
    struct Paths {
        std::filesystem::path data = "data";
        std::filesystem::path weights = "weights.bin";
        std::filesystem::path output = "out";
        std::vector<std::filesystem::path> inputs;
        std::vector<std::filesystem::path> runs;
        std::filesystem::path web = "web";
    };
    struct Service {
        std::string host = "127.0.0.1";
        int port = 8080;
        int workers = 1;
        int max_sessions = 64;
    };

    std::uint64_t seed = 0;
    Paths paths;
    std::optional<PixelScale> scale;
    UNetConfig unet;
    TrainConfig train;
    int patch_stride = 48;
    SynthConfig synth;
    SplitSizes split;
    WatershedOptions post;
    HexNeighbors hex = HexNeighbors::AnyClass;
    Service service;

    /// Throws Error(Invalid) naming the offending key.
    void validate() const;
    /// The seed is copied into the unet, train and synth sections.
    void set_seed(std::uint64_t s);
};

/// Parses TOML text. Unknown sections or keys are rejected so typos surface.
PipelineConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {});
PipelineConfig load_config(const std::filesystem::path& path);

const char* head_name(Head h);
Head head_from_name(const std::string& s);

}  // namespace endo
