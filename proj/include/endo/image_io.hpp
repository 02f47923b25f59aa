#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <utility>
#include <vector>

#include "endo/image.hpp"

namespace endo {

/// Page 1 is the image; page/channel 2, when present, is the microscope's initial
/// segmentation overlay (nonzero = cell). Accepts TIFF, or PNG (gray or gray+alpha).
std::pair<GrayImage, std::optional<SegMasks>> load_microscope_tiff(const std::filesystem::path& path);

/// Three pages: image, cells mask, guttae mask (foreground 255). ROI is the bounding
/// box of cells | guttae. For a ".png" path the three pages live in
/// <stem>.png, <stem>.cells.png and <stem>.guttae.png.
std::pair<GrayImage, SegMasks> load_three_page_mask(const std::filesystem::path& path);
void save_three_page_mask(const std::filesystem::path& path, const GrayImage& image, const SegMasks& masks);
std::vector<std::uint8_t> encode_three_page_mask(const GrayImage& image, const SegMasks& masks);

/// Optional scale/ROI metadata stored next to an image as <path>.json.
struct Sidecar {
    std::optional<PixelScale> scale;
    std::optional<Rect> roi;
};
std::optional<Sidecar> load_sidecar(const std::filesystem::path& image_path);
void save_sidecar(const std::filesystem::path& image_path, const Sidecar& sidecar);

/// tanh of the z-scored intensities; outputs lie strictly in (-1, 1).
GrayImage normalize(const GrayImage& image);

/// Sliding 96x96 windows fully inside masks.roi, each paired with the matching
/// crop of the whole image's signed distance map.
std::vector<Patch> extract_patches(const GrayImage& image, const SegMasks& masks, int stride);
/// Number of windows extract_patches produces for a w x h ROI.
std::size_t patch_count(int roi_w, int roi_h, int stride);

/// Element of the dihedral group of the square.
enum class D4 : std::uint8_t { Identity, FlipH, FlipV, Transpose, Rot90, Rot180, Rot270, FlipHRot90 };
inline constexpr int kD4Count = 8;

/// Rotations are clockwise; FlipHRot90 (h-flip followed by rot90) is the
/// anti-diagonal reflection.
template <typename T>
Grid<T> apply_d4(const Grid<T>& g, D4 t) {
    const int w = g.width(), h = g.height();
    const bool swap = t == D4::Transpose || t == D4::Rot90 || t == D4::Rot270 || t == D4::FlipHRot90;
    Grid<T> out(swap ? h : w, swap ? w : h);
    for (int y = 0; y < out.height(); ++y)
        for (int x = 0; x < out.width(); ++x) {
            int sx = x, sy = y;
            switch (t) {
                case D4::Identity: break;
                case D4::FlipH: sx = w - 1 - x; break;
                case D4::FlipV: sy = h - 1 - y; break;
                case D4::Transpose: sx = y; sy = x; break;
                case D4::Rot90: sx = y; sy = h - 1 - x; break;
                case D4::Rot180: sx = w - 1 - x; sy = h - 1 - y; break;
                case D4::Rot270: sx = w - 1 - y; sy = x; break;
                case D4::FlipHRot90: sx = w - 1 - y; sy = h - 1 - x; break;
            }
            out(x, y) = g(sx, sy);
        }
    return out;
}

Patch apply_d4(const Patch& p, D4 t);
/// Draws one D4 element from seed and applies it to image and target alike.
Patch augment(const Patch& patch, std::uint64_t seed);
D4 draw_d4(std::uint64_t seed);

}  // namespace endo
