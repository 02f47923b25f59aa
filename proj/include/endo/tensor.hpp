#pragma once

#include <cstddef>
#include <vector>

#include "endo/error.hpp"

namespace endo {

/// NCHW tensor.
template <typename T>
struct Tensor4 {
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<T> data;

    Tensor4() = default;
    Tensor4(int n_, int c_, int h_, int w_, T fill = T{}) : n(n_), c(c_), h(h_), w(w_) {
        if (n < 1 || c < 1 || h < 1 || w < 1) throw Error(ErrorKind::Invalid, "Tensor4: all dimensions must be >= 1");
        data.assign(static_cast<std::size_t>(n) * c * h * w, fill);
    }

    std::size_t plane_size() const noexcept { return static_cast<std::size_t>(h) * w; }
    std::size_t size() const noexcept { return data.size(); }
    T* plane(int ni, int ci) noexcept { return data.data() + (static_cast<std::size_t>(ni) * c + ci) * plane_size(); }
    const T* plane(int ni, int ci) const noexcept {
        return data.data() + (static_cast<std::size_t>(ni) * c + ci) * plane_size();
    }
    T& at(int ni, int ci, int y, int x) noexcept { return plane(ni, ci)[static_cast<std::size_t>(y) * w + x]; }
    const T& at(int ni, int ci, int y, int x) const noexcept { return plane(ni, ci)[static_cast<std::size_t>(y) * w + x]; }
    bool same_shape(const Tensor4& o) const noexcept { return n == o.n && c == o.c && h == o.h && w == o.w; }
};

}  // namespace endo
