#include "endo/png.hpp"

#include <png.h>

#include <algorithm>
#include <csetjmp>
#include <string>
#include <cmath>
#include <cstring>
#include <fstream>

#include "endo/error.hpp"

namespace endo::png {
namespace {

struct ReadState {
    const std::vector<std::uint8_t>* bytes;
    std::size_t pos = 0;
};

void read_fn(png_structp p, png_bytep out, png_size_t n) {
    auto* s = static_cast<ReadState*>(png_get_io_ptr(p));
    if (s->pos + n > s->bytes->size()) png_error(p, "truncated PNG");
    std::memcpy(out, s->bytes->data() + s->pos, n);
    s->pos += n;
}

void write_fn(png_structp p, png_bytep data, png_size_t n) {
    auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(p));
    out->insert(out->end(), data, data + n);
}

void flush_fn(png_structp) {}

thread_local std::string g_last_error;

[[noreturn]] void error_fn(png_structp p, png_const_charp msg) {
    g_last_error = msg;
    png_longjmp(p, 1);
}
void warning_fn(png_structp, png_const_charp) {}

// Writes rows with the given color type; row_bytes per row.
std::vector<std::uint8_t> encode_rows(int w, int h, int depth, int color, const std::vector<std::uint8_t>& pixels,
                                      std::size_t row_bytes) {
    std::vector<std::uint8_t> out;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, error_fn, warning_fn);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw Error(ErrorKind::Format, "png: " + g_last_error);
    }
    {
        png_set_write_fn(png, &out, write_fn, flush_fn);
        png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), depth, color,
                     PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
        png_write_info(png, info);
        for (int y = 0; y < h; ++y)
            png_write_row(png, const_cast<png_bytep>(pixels.data() + static_cast<std::size_t>(y) * row_bytes));
        png_write_end(png, nullptr);
    }
    png_destroy_write_struct(&png, &info);
    return out;
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw Error(ErrorKind::Io, "cannot write " + path.string());
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

Image decode(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) throw Error(ErrorKind::Format, "png: bad signature");
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, error_fn, warning_fn);
    png_infop info = png_create_info_struct(png);
    Image img;
    ReadState state{&bytes, 0};
    std::vector<std::uint8_t> buf;
    std::vector<png_bytep> rows;
    bool unsupported = false;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw Error(ErrorKind::Format, "png: " + g_last_error);
    }
    {
        png_set_read_fn(png, &state, read_fn);
        png_read_info(png, info);
        const int w = static_cast<int>(png_get_image_width(png, info));
        const int h = static_cast<int>(png_get_image_height(png, info));
        const int color = png_get_color_type(png, info);
        int depth = png_get_bit_depth(png, info);
        unsupported = color != PNG_COLOR_TYPE_GRAY && color != PNG_COLOR_TYPE_GRAY_ALPHA;
        if (unsupported) {
            png_destroy_read_struct(&png, &info, nullptr);
            throw Error(ErrorKind::Format, "png: only grayscale images are supported");
        }
        if (depth < 8) {
            png_set_expand_gray_1_2_4_to_8(png);
            depth = 8;
        }
        if (depth == 16) png_set_swap(png);  // little-endian host order
        png_read_update_info(png, info);
        const std::size_t nch = color == PNG_COLOR_TYPE_GRAY_ALPHA ? 2 : 1;
        const std::size_t row_bytes = png_get_rowbytes(png, info);
        buf.assign(row_bytes * static_cast<std::size_t>(h), 0);
        rows.assign(static_cast<std::size_t>(h), nullptr);
        for (int y = 0; y < h; ++y) rows[static_cast<std::size_t>(y)] = buf.data() + static_cast<std::size_t>(y) * row_bytes;
        png_read_image(png, rows.data());
        img.bit_depth = depth;
        img.channels.assign(nch, Grid<float>(w, h));
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                for (std::size_t c = 0; c < nch; ++c) {
                    const std::size_t i = static_cast<std::size_t>(x) * nch + c;
                    const std::uint8_t* row = rows[static_cast<std::size_t>(y)];
                    img.channels[c](x, y) =
                        depth == 16 ? static_cast<float>(row[2 * i] | row[2 * i + 1] << 8) : static_cast<float>(row[i]);
                }
    }
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

Image read(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode(bytes);
}

std::vector<std::uint8_t> encode_gray(const Grid<float>& g, int bit_depth) {
    if (bit_depth != 8 && bit_depth != 16) throw Error(ErrorKind::Invalid, "png: bit depth must be 8 or 16");
    const float maxv = bit_depth == 8 ? 255.0f : 65535.0f;
    const std::size_t bpp = static_cast<std::size_t>(bit_depth / 8);
    const std::size_t row_bytes = static_cast<std::size_t>(g.width()) * bpp;
    std::vector<std::uint8_t> px(row_bytes * static_cast<std::size_t>(g.height()));
    for (std::size_t i = 0; i < g.size(); ++i) {
        const auto q = static_cast<std::uint32_t>(std::clamp(std::round(g[i]), 0.0f, maxv));
        if (bpp == 1) {
            px[i] = static_cast<std::uint8_t>(q);
        } else {
            px[2 * i] = static_cast<std::uint8_t>(q >> 8);  // PNG is big-endian
            px[2 * i + 1] = static_cast<std::uint8_t>(q & 0xFF);
        }
    }
    return encode_rows(g.width(), g.height(), bit_depth, PNG_COLOR_TYPE_GRAY, px, row_bytes);
}

void write_gray(const std::filesystem::path& path, const Grid<float>& g, int bit_depth) {
    write_file(path, encode_gray(g, bit_depth));
}

std::vector<std::uint8_t> encode_rgba(int width, int height, const std::vector<std::uint8_t>& rgba) {
    if (rgba.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 4)
        throw Error(ErrorKind::Invalid, "png: rgba buffer size mismatch");
    return encode_rows(width, height, 8, PNG_COLOR_TYPE_RGBA, rgba, static_cast<std::size_t>(width) * 4);
}

}  // namespace endo::png
