#pragma once

#include <optional>

#include "endo/error.hpp"
#include "endo/grid.hpp"

namespace endo {

/// Grayscale image with physical pixel pitch.
struct GrayImage {
    Grid<float> pixels;
    PixelScale scale;

    GrayImage() = default;
    GrayImage(int width, int height, float fill = 0.0f, PixelScale s = {})
        : pixels(width, height, fill), scale(s) {}
    explicit GrayImage(Grid<float> p, PixelScale s = {}) : pixels(std::move(p)), scale(s) {}

    int width() const noexcept { return pixels.width(); }
    int height() const noexcept { return pixels.height(); }
    float& operator()(int x, int y) { return pixels(x, y); }
    float operator()(int x, int y) const { return pixels(x, y); }

    /// Throws Error(Invariant) when dimensions or scale are invalid.
    void validate() const;

    friend bool operator==(const GrayImage&, const GrayImage&) = default;
};

/// Annotation ground truth: disjoint cell and gutta masks over one ROI.
struct SegMasks {
    BinaryGrid cells;
    BinaryGrid guttae;
    Rect roi;

    SegMasks() = default;
    SegMasks(int width, int height) : cells(width, height, 0), guttae(width, height, 0), roi{0, 0, width, height} {}

    int width() const noexcept { return cells.width(); }
    int height() const noexcept { return cells.height(); }

    /// Same dimensions, disjoint foreground, foreground inside roi.
    void validate() const;
    /// Sets roi to the bounding box of cells | guttae (empty rect if none).
    void fit_roi();

    friend bool operator==(const SegMasks&, const SegMasks&) = default;
};

using SignedDistMap = Grid<float>;

inline constexpr int kPatchSize = 96;

struct Patch {
    GrayImage image;
    std::optional<SignedDistMap> target;
};

}  // namespace endo
