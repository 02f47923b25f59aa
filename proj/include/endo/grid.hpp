#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace endo {

/// Dense row-major 2-D grid. Index (x, y) maps to y * width + x.
template <typename T>
class Grid {
public:
    Grid() = default;
    Grid(int width, int height, T fill = T{})
        : width_(width), height_(height) {
        if (width < 0 || height < 0)
            throw std::invalid_argument("Grid: negative dimensions");
        data_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill);
    }

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    T& operator()(int x, int y) { return data_[index(x, y)]; }
    const T& operator()(int x, int y) const { return data_[index(x, y)]; }
    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    std::size_t index(int x, int y) const noexcept {
        return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
    }
    bool contains(int x, int y) const noexcept { return x >= 0 && y >= 0 && x < width_ && y < height_; }

    T* data() noexcept { return data_.data(); }
    const T* data() const noexcept { return data_.data(); }
    std::vector<T>& values() noexcept { return data_; }
    const std::vector<T>& values() const noexcept { return data_; }

    bool same_shape(const Grid& o) const noexcept { return width_ == o.width_ && height_ == o.height_; }
    template <typename U>
    bool same_shape(const Grid<U>& o) const noexcept { return width_ == o.width() && height_ == o.height(); }

    friend bool operator==(const Grid& a, const Grid& b) {
        return a.width_ == b.width_ && a.height_ == b.height_ && a.data_ == b.data_;
    }

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<T> data_;
};

using BinaryGrid = Grid<std::uint8_t>;

/// Axis-aligned pixel rectangle, half-open on the right and bottom.
struct Rect {
    int x = 0;
    int y = 0;
    int w = 0;
    int h = 0;

    bool empty() const noexcept { return w <= 0 || h <= 0; }
    long long area() const noexcept { return empty() ? 0 : static_cast<long long>(w) * h; }
    bool contains(int px, int py) const noexcept { return px >= x && py >= y && px < x + w && py < y + h; }
    bool on_edge(int px, int py) const noexcept {
        return contains(px, py) && (px == x || py == y || px == x + w - 1 || py == y + h - 1);
    }
    friend bool operator==(const Rect&, const Rect&) = default;
};

/// Physical pixel pitch in micrometres per pixel along each axis.
struct PixelScale {
    // 0.5 mm over 640 px and 0.25 mm over 480 px.
    double x_um = 0.78125;
    double y_um = 250.0 / 480.0;

    double pixel_area_um2() const noexcept { return x_um * y_um; }
    friend bool operator==(const PixelScale&, const PixelScale&) = default;
};

/// Tight bounding box of nonzero cells; empty Rect when there are none.
template <typename T>
Rect bounding_box(const Grid<T>& g) {
    int x0 = g.width(), y0 = g.height(), x1 = -1, y1 = -1;
    for (int y = 0; y < g.height(); ++y)
        for (int x = 0; x < g.width(); ++x)
            if (g(x, y) != T{}) {
                if (x < x0) x0 = x;
                if (x > x1) x1 = x;
                if (y < y0) y0 = y;
                if (y > y1) y1 = y;
            }
    if (x1 < 0) return {};
    return {x0, y0, x1 - x0 + 1, y1 - y0 + 1};
}

template <typename T>
Grid<T> crop(const Grid<T>& g, const Rect& r) {
    if (r.x < 0 || r.y < 0 || r.x + r.w > g.width() || r.y + r.h > g.height())
        throw std::out_of_range("crop: rectangle outside grid");
    Grid<T> out(r.w, r.h);
    for (int y = 0; y < r.h; ++y)
        for (int x = 0; x < r.w; ++x) out(x, y) = g(r.x + x, r.y + y);
    return out;
}

}  // namespace endo
