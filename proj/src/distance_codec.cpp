#include "endo/distance_codec.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <vector>

#include "endo/error.hpp"

namespace endo {
namespace {

using Dist = std::int64_t;
constexpr Dist kInf = std::numeric_limits<Dist>::max() / 4;

// One-dimensional squared-distance transform of the sampled function f over n
// points: out[q] = min_p (q - p)^2 + f[p]. Scratch buffers are caller-owned so
// the passes allocate once per thread.
void transform_line(const Dist* f, Dist* out, int n, int* v, double* z) {
    int k = 0;
    v[0] = 0;
    z[0] = -std::numeric_limits<double>::infinity();
    z[1] = std::numeric_limits<double>::infinity();
    // Skip leading infinite samples; they never participate in the envelope.
    int first = 0;
    while (first < n && f[first] >= kInf) ++first;
    if (first == n) {
        for (int q = 0; q < n; ++q) out[q] = kInf;
        return;
    }
    v[0] = first;
    for (int q = first + 1; q < n; ++q) {
        if (f[q] >= kInf) continue;
        double s;
        for (;;) {
            const int p = v[k];
            s = (static_cast<double>(f[q] + static_cast<Dist>(q) * q) - static_cast<double>(f[p] + static_cast<Dist>(p) * p)) /
                (2.0 * (q - p));
            if (s <= z[k] && k > 0)
                --k;
            else
                break;
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = std::numeric_limits<double>::infinity();
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (z[k + 1] < q) ++k;
        const Dist d = q - v[k];
        out[q] = d * d + f[v[k]];
    }
}

// Column pass seeds each foreground pixel with the squared vertical distance to
// the nearest background (or virtual border) pixel; the row pass then folds in
// the horizontal direction. The border is handled by padding each line with one
// background sample on both ends.
template <bool Parallel>
Grid<std::int32_t> edt_impl(const BinaryGrid& mask) {
    const int w = mask.width(), h = mask.height();
    std::vector<Dist> col(static_cast<std::size_t>(w) * h);

#pragma omp parallel for schedule(static) if (Parallel)
    for (int x = 0; x < w; ++x) {
        // Distance to nearest background along the column, including the
        // virtual background rows -1 and h.
        Dist run = 0;
        for (int y = 0; y < h; ++y) {
            run = mask(x, y) ? run + 1 : 0;
            col[static_cast<std::size_t>(y) * w + x] = run;
        }
        run = 0;
        for (int y = h - 1; y >= 0; --y) {
            run = mask(x, y) ? run + 1 : 0;
            Dist& c = col[static_cast<std::size_t>(y) * w + x];
            if (run < c) c = run;
            c = c * c;
        }
    }

    Grid<std::int32_t> out(w, h);
#pragma omp parallel if (Parallel)
    {
        const int n = w + 2;
        std::vector<Dist> f(static_cast<std::size_t>(n)), d(static_cast<std::size_t>(n));
        std::vector<int> v(static_cast<std::size_t>(n));
        std::vector<double> z(static_cast<std::size_t>(n) + 1);
#pragma omp for schedule(static)
        for (int y = 0; y < h; ++y) {
            f[0] = 0;
            f[static_cast<std::size_t>(n - 1)] = 0;
            for (int x = 0; x < w; ++x) f[static_cast<std::size_t>(x + 1)] = col[static_cast<std::size_t>(y) * w + x];
            transform_line(f.data(), d.data(), n, v.data(), z.data());
            for (int x = 0; x < w; ++x)
                out(x, y) = mask(x, y) ? static_cast<std::int32_t>(d[static_cast<std::size_t>(x + 1)]) : 0;
        }
    }
    return out;
}

}  // namespace

Grid<std::int32_t> edt_squared(const BinaryGrid& mask) { return edt_impl<true>(mask); }
Grid<std::int32_t> edt_squared_serial(const BinaryGrid& mask) { return edt_impl<false>(mask); }

Grid<float> edt(const BinaryGrid& mask) {
    const auto sq = edt_squared(mask);
    Grid<float> out(mask.width(), mask.height());
    for (std::size_t i = 0; i < sq.size(); ++i) out[i] = static_cast<float>(std::sqrt(static_cast<double>(sq[i])));
    return out;
}

SignedDistMap encode(const SegMasks& masks) {
    masks.validate();
    const auto dc = edt(masks.cells);
    const auto dg = edt(masks.guttae);
    SignedDistMap out(masks.width(), masks.height());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = dc[i] - dg[i];
    return out;
}

SegMasks sign_masks(const SignedDistMap& map) {
    SegMasks m(map.width(), map.height());
    for (std::size_t i = 0; i < map.size(); ++i) {
        m.cells[i] = map[i] > 0.0f ? 1 : 0;
        m.guttae[i] = map[i] < 0.0f ? 1 : 0;
    }
    m.fit_roi();
    return m;
}

void save_distance_map(const std::filesystem::path& path, const SignedDistMap& map) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
    auto put32 = [&](std::uint32_t v) {
        char b[4];
        for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
        out.write(b, 4);
    };
    out.write("SDM1", 4);
    put32(static_cast<std::uint32_t>(map.width()));
    put32(static_cast<std::uint32_t>(map.height()));
    put32(0);
    for (float v : map.values()) put32(std::bit_cast<std::uint32_t>(v));
    if (!out) throw Error(ErrorKind::Io, "short write to " + path.string());
}

SignedDistMap load_distance_map(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
    auto get32 = [&]() {
        unsigned char b[4];
        in.read(reinterpret_cast<char*>(b), 4);
        if (!in) throw Error(ErrorKind::Format, "distance map truncated: " + path.string());
        return static_cast<std::uint32_t>(b[0] | b[1] << 8 | b[2] << 16 | static_cast<std::uint32_t>(b[3]) << 24);
    };
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "SDM1", 4) != 0) throw Error(ErrorKind::Format, "bad distance map magic: " + path.string());
    const auto w = get32(), h = get32();
    get32();
    if (w == 0 || h == 0 || w > 1u << 16 || h > 1u << 16) throw Error(ErrorKind::Format, "bad distance map size");
    SignedDistMap map(static_cast<int>(w), static_cast<int>(h));
    for (auto& v : map.values()) v = std::bit_cast<float>(get32());
    return map;
}

}  // namespace endo
