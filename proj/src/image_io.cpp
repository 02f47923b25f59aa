#include "endo/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "json.hpp"

#include "endo/distance_codec.hpp"
#include "endo/png.hpp"
#include "endo/tiff.hpp"

namespace endo {
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

bool is_png(const fs::path& p) {
    auto ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return ext == ".png";
}

// Pages of a file as plain grids: every TIFF page and every channel of a
// multi-sample page, in order.
std::vector<Grid<float>> read_planes(const fs::path& path) {
    std::vector<Grid<float>> planes;
    if (is_png(path)) {
        auto img = png::read(path);
        for (auto& ch : img.channels) planes.push_back(std::move(ch));
        return planes;
    }
    for (auto& page : tiff::read(path))
        for (auto& ch : page.channels) planes.push_back(std::move(ch));
    return planes;
}

BinaryGrid binarize(const Grid<float>& g) {
    BinaryGrid out(g.width(), g.height(), 0);
    for (std::size_t i = 0; i < g.size(); ++i) out[i] = g[i] > 0.0f ? 1 : 0;
    return out;
}

Grid<float> mask_page(const BinaryGrid& m) {
    Grid<float> out(m.width(), m.height());
    for (std::size_t i = 0; i < m.size(); ++i) out[i] = m[i] ? 255.0f : 0.0f;
    return out;
}

fs::path png_page_path(const fs::path& base, const char* suffix) {
    auto p = base;
    p.replace_extension(std::string(suffix) + ".png");
    return p;
}

fs::path sidecar_path(const fs::path& image_path) {
    auto p = image_path;
    p.replace_extension(".json");
    return p;
}

void apply_sidecar(const fs::path& path, GrayImage& image, SegMasks* masks) {
    if (auto sc = load_sidecar(path)) {
        if (sc->scale) image.scale = *sc->scale;
        if (masks && sc->roi) masks->roi = *sc->roi;
    }
}

}  // namespace

std::pair<GrayImage, std::optional<SegMasks>> load_microscope_tiff(const fs::path& path) {
    auto planes = read_planes(path);
    if (planes.empty() || planes.size() > 2)
        throw Error(ErrorKind::Format, path.string() + ": expected 1 or 2 pages/channels, found " + std::to_string(planes.size()));
    GrayImage image(std::move(planes[0]));
    image.validate();
    std::optional<SegMasks> masks;
    if (planes.size() == 2) {
        if (!planes[1].same_shape(image.pixels))
            throw Error(ErrorKind::Format, path.string() + ": segmentation channel size differs from image");
        SegMasks m(image.width(), image.height());
        m.cells = binarize(planes[1]);
        m.fit_roi();
        masks = std::move(m);
    }
    apply_sidecar(path, image, masks ? &*masks : nullptr);
    return {std::move(image), std::move(masks)};
}

std::pair<GrayImage, SegMasks> load_three_page_mask(const fs::path& path) {
    std::vector<Grid<float>> planes;
    if (is_png(path)) {
        for (const auto& p : {path, png_page_path(path, ".cells"), png_page_path(path, ".guttae")}) {
            auto img = png::read(p);
            planes.push_back(std::move(img.channels.front()));
        }
    } else {
        planes = read_planes(path);
    }
    if (planes.size() != 3)
        throw Error(ErrorKind::Format, path.string() + ": expected 3 pages, found " + std::to_string(planes.size()));
    if (!planes[0].same_shape(planes[1]) || !planes[0].same_shape(planes[2]))
        throw Error(ErrorKind::Format, path.string() + ": page dimensions differ");
    GrayImage image(std::move(planes[0]));
    image.validate();
    SegMasks masks(image.width(), image.height());
    masks.cells = binarize(planes[1]);
    masks.guttae = binarize(planes[2]);
    masks.fit_roi();
    apply_sidecar(path, image, &masks);
    masks.validate();
    return {std::move(image), std::move(masks)};
}

std::vector<std::uint8_t> encode_three_page_mask(const GrayImage& image, const SegMasks& masks) {
    image.validate();
    masks.validate();
    if (!masks.cells.same_shape(image.pixels)) throw Error(ErrorKind::Invalid, "mask size differs from image");
    std::vector<tiff::Page> pages(3);
    pages[0].format = tiff::fitting_format(image.pixels);
    pages[0].channels = {image.pixels};
    pages[1].channels = {mask_page(masks.cells)};
    pages[2].channels = {mask_page(masks.guttae)};
    return tiff::encode(pages);
}

void save_three_page_mask(const fs::path& path, const GrayImage& image, const SegMasks& masks) {
    if (is_png(path)) {
        image.validate();
        masks.validate();
        if (tiff::fitting_format(image.pixels) == tiff::SampleFormat::F32)
            throw Error(ErrorKind::Invalid, "PNG pages need integer intensities in [0, 65535]");
        const int depth = tiff::fitting_format(image.pixels) == tiff::SampleFormat::U8 ? 8 : 16;
        png::write_gray(path, image.pixels, depth);
        png::write_gray(png_page_path(path, ".cells"), mask_page(masks.cells), 8);
        png::write_gray(png_page_path(path, ".guttae"), mask_page(masks.guttae), 8);
    } else {
        const auto bytes = encode_three_page_mask(image, masks);
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw Error(ErrorKind::Io, "short write to " + path.string());
    }
    // Pixel data cannot carry scale or a non-tight ROI; persist them alongside.
    SegMasks tight = masks;
    tight.fit_roi();
    const bool custom_roi = !(tight.roi == masks.roi);
    const bool custom_scale = !(image.scale == PixelScale{});
    if (custom_roi || custom_scale) {
        Sidecar sc;
        if (custom_scale) sc.scale = image.scale;
        if (custom_roi) sc.roi = masks.roi;
        save_sidecar(path, sc);
    } else if (fs::exists(sidecar_path(path))) {
        fs::remove(sidecar_path(path));
    }
}

std::optional<Sidecar> load_sidecar(const fs::path& image_path) {
    const auto p = sidecar_path(image_path);
    std::ifstream in(p);
    if (!in) return std::nullopt;
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Format, p.string() + ": " + e.what());
    }
    Sidecar sc;
    if (j.contains("scale_x_um") || j.contains("scale_y_um")) {
        PixelScale s;
        s.x_um = j.value("scale_x_um", s.x_um);
        s.y_um = j.value("scale_y_um", s.y_um);
        if (!(s.x_um > 0) || !(s.y_um > 0)) throw Error(ErrorKind::Format, p.string() + ": scale must be positive");
        sc.scale = s;
    }
    if (j.contains("roi")) {
        const auto& r = j.at("roi");
        if (!r.is_array() || r.size() != 4) throw Error(ErrorKind::Format, p.string() + ": roi must be [x,y,w,h]");
        sc.roi = Rect{r[0].get<int>(), r[1].get<int>(), r[2].get<int>(), r[3].get<int>()};
    }
    return sc;
}

void save_sidecar(const fs::path& image_path, const Sidecar& sc) {
    json j = json::object();
    if (sc.scale) {
        j["scale_x_um"] = sc.scale->x_um;
        j["scale_y_um"] = sc.scale->y_um;
    }
    if (sc.roi) j["roi"] = {sc.roi->x, sc.roi->y, sc.roi->w, sc.roi->h};
    std::ofstream out(sidecar_path(image_path), std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot write sidecar for " + image_path.string());
    out << j.dump(2) << '\n';
}

GrayImage normalize(const GrayImage& image) {
    if (image.pixels.empty()) throw Error(ErrorKind::Invalid, "normalize: empty image");
    const auto& px = image.pixels.values();
    const double n = static_cast<double>(px.size());
    double mean = 0.0;
    for (float v : px) mean += v;
    mean /= n;
    double var = 0.0;
    for (float v : px) var += (v - mean) * (v - mean);
    const double sd = std::max(std::sqrt(var / n), 1e-8);
    GrayImage out(image.width(), image.height(), 0.0f, image.scale);
    for (std::size_t i = 0; i < px.size(); ++i) out.pixels[i] = static_cast<float>(std::tanh((px[i] - mean) / sd));
    return out;
}

std::size_t patch_count(int roi_w, int roi_h, int stride) {
    if (roi_w < kPatchSize || roi_h < kPatchSize || stride < 1) return 0;
    return static_cast<std::size_t>((roi_w - kPatchSize) / stride + 1) * static_cast<std::size_t>((roi_h - kPatchSize) / stride + 1);
}

std::vector<Patch> extract_patches(const GrayImage& image, const SegMasks& masks, int stride) {
    if (stride < 1) throw Error(ErrorKind::Invalid, "extract_patches: stride must be >= 1");
    const Rect roi = masks.roi;
    if (roi.w < kPatchSize || roi.h < kPatchSize)
        throw Error(ErrorKind::Invalid, "extract_patches: roi smaller than " + std::to_string(kPatchSize) + " px");
    if (roi.x < 0 || roi.y < 0 || roi.x + roi.w > image.width() || roi.y + roi.h > image.height())
        throw Error(ErrorKind::Invalid, "extract_patches: roi outside image");
    // Distances come from the whole image so patch edges do not create
    // artificial background.
    const SignedDistMap full = encode(masks);
    const int nx = (roi.w - kPatchSize) / stride + 1;
    const int ny = (roi.h - kPatchSize) / stride + 1;
    std::vector<Patch> out(static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny));
#pragma omp parallel for schedule(static)
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            const Rect win{roi.x + i * stride, roi.y + j * stride, kPatchSize, kPatchSize};
            auto& p = out[static_cast<std::size_t>(j) * nx + i];
            p.image = GrayImage(crop(image.pixels, win), image.scale);
            p.target = crop(full, win);
        }
    return out;
}

D4 draw_d4(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> pick(0, kD4Count - 1);
    return static_cast<D4>(pick(rng));
}

Patch apply_d4(const Patch& p, D4 t) {
    Patch out;
    out.image = GrayImage(apply_d4(p.image.pixels, t), p.image.scale);
    if (p.target) out.target = apply_d4(*p.target, t);
    return out;
}

Patch augment(const Patch& patch, std::uint64_t seed) { return apply_d4(patch, draw_d4(seed)); }

}  // namespace endo
