#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "endo/grid.hpp"

namespace endo::png {

/// Decoded grayscale PNG. Gray+alpha files yield two channels.
struct Image {
    int bit_depth = 8;
    std::vector<Grid<float>> channels;
};

Image read(const std::filesystem::path& path);
Image decode(const std::vector<std::uint8_t>& bytes);

std::vector<std::uint8_t> encode_gray(const Grid<float>& g, int bit_depth);
void write_gray(const std::filesystem::path& path, const Grid<float>& g, int bit_depth);

/// 8-bit RGBA, rgba.size() == 4 * width * height.
std::vector<std::uint8_t> encode_rgba(int width, int height, const std::vector<std::uint8_t>& rgba);

}  // namespace endo::png
