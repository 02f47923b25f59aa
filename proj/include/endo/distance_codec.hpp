#pragma once

#include <cstdint>
#include <filesystem>

#include "endo/image.hpp"

namespace endo {

/// Exact squared Euclidean distance from each foreground pixel to the nearest
/// background pixel; 0 on background. Pixels outside the grid count as background.
/// Separable lower-envelope-of-parabolas transform, columns then rows, each pass
/// parallel over independent lines.
Grid<std::int32_t> edt_squared(const BinaryGrid& mask);
/// Serial build of the same transform, kept as a reference for the parallel one.
Grid<std::int32_t> edt_squared_serial(const BinaryGrid& mask);

/// sqrt of edt_squared.
Grid<float> edt(const BinaryGrid& mask);

/// D = edt(cells) - edt(guttae). Throws Error(Invariant) on overlapping masks.
SignedDistMap encode(const SegMasks& masks);

/// cells = (value > 0), guttae = (value < 0), roi = bounding box of both.
SegMasks sign_masks(const SignedDistMap& map);

/// Debug dump: 16-byte header {"SDM1", u32 width, u32 height, u32 reserved}
/// followed by little-endian float32 values in row-major order.
void save_distance_map(const std::filesystem::path& path, const SignedDistMap& map);
SignedDistMap load_distance_map(const std::filesystem::path& path);

}  // namespace endo
