#include "endo/tiff.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>

#include "endo/error.hpp"

namespace endo::tiff {
namespace {

enum Tag : std::uint16_t {
    kNewSubfileType = 254,
    kImageWidth = 256,
    kImageLength = 257,
    kBitsPerSample = 258,
    kCompression = 259,
    kPhotometric = 262,
    kStripOffsets = 273,
    kSamplesPerPixel = 277,
    kRowsPerStrip = 278,
    kStripByteCounts = 279,
    kPlanarConfig = 284,
    kPredictor = 317,
    kTileWidth = 322,
    kSampleFormat = 339,
};

[[noreturn]] void fail(const std::string& msg) { throw Error(ErrorKind::Format, "tiff: " + msg); }

class Reader {
public:
    explicit Reader(const std::vector<std::uint8_t>& b) : bytes_(b) {
        if (b.size() < 8) fail("file too short");
        if (b[0] == 'I' && b[1] == 'I')
            big_ = false;
        else if (b[0] == 'M' && b[1] == 'M')
            big_ = true;
        else
            fail("bad byte-order mark");
        if (u16(2) != 42) fail("not a classic TIFF (magic != 42)");
    }

    std::uint16_t u16(std::size_t off) const {
        need(off, 2);
        return big_ ? static_cast<std::uint16_t>(bytes_[off] << 8 | bytes_[off + 1])
                    : static_cast<std::uint16_t>(bytes_[off] | bytes_[off + 1] << 8);
    }
    std::uint32_t u32(std::size_t off) const {
        need(off, 4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            const std::uint32_t byte = bytes_[off + static_cast<std::size_t>(i)];
            v |= big_ ? byte << (8 * (3 - i)) : byte << (8 * i);
        }
        return v;
    }
    void need(std::size_t off, std::size_t n) const {
        if (off + n > bytes_.size()) fail("truncated file");
    }
    bool big_endian() const { return big_; }
    const std::vector<std::uint8_t>& bytes() const { return bytes_; }

    // All values of an IFD entry widened to 64 bits.
    std::vector<std::uint64_t> values(std::size_t entry) const {
        const std::uint16_t type = u16(entry + 2);
        const std::uint32_t count = u32(entry + 4);
        std::size_t size = 0;
        switch (type) {
            case 1: case 2: case 6: case 7: size = 1; break;
            case 3: case 8: size = 2; break;
            case 4: case 9: size = 4; break;
            default: fail("unsupported IFD entry type " + std::to_string(type));
        }
        const std::size_t total = size * count;
        const std::size_t base = total <= 4 ? entry + 8 : u32(entry + 8);
        need(base, total);
        std::vector<std::uint64_t> out(count);
        for (std::uint32_t i = 0; i < count; ++i) {
            const std::size_t off = base + i * size;
            out[i] = size == 1 ? bytes_[off] : size == 2 ? u16(off) : u32(off);
        }
        return out;
    }

private:
    const std::vector<std::uint8_t>& bytes_;
    bool big_ = false;
};

std::vector<std::uint8_t> inflate_strip(const std::uint8_t* src, std::size_t n, std::size_t expected) {
    std::vector<std::uint8_t> out(expected);
    uLongf len = static_cast<uLongf>(expected);
    const int rc = uncompress(out.data(), &len, src, static_cast<uLong>(n));
    if (rc != Z_OK && rc != Z_BUF_ERROR) fail("deflate stream corrupt");
    if (len != expected) fail("deflate strip has wrong decoded size");
    return out;
}

Page decode_page(const Reader& r, std::size_t ifd) {
    const std::uint16_t n_entries = r.u16(ifd);
    std::map<std::uint16_t, std::vector<std::uint64_t>> tags;
    for (std::uint16_t i = 0; i < n_entries; ++i) {
        const std::size_t e = ifd + 2 + 12u * i;
        tags[r.u16(e)] = r.values(e);
    }
    auto scalar = [&](std::uint16_t tag, std::uint64_t fallback) -> std::uint64_t {
        auto it = tags.find(tag);
        return it == tags.end() || it->second.empty() ? fallback : it->second.front();
    };
    if (tags.count(kTileWidth)) fail("tiled TIFF is not supported");
    const auto width = scalar(kImageWidth, 0);
    const auto height = scalar(kImageLength, 0);
    if (width == 0 || height == 0 || width > 1u << 16 || height > 1u << 16) fail("bad image dimensions");
    const auto spp = scalar(kSamplesPerPixel, 1);
    if (spp < 1 || spp > 4) fail("unsupported samples per pixel");
    const auto bps = scalar(kBitsPerSample, 1);
    if (auto it = tags.find(kBitsPerSample); it != tags.end())
        for (auto b : it->second)
            if (b != bps) fail("mixed bit depths across samples");
    const auto sample_fmt = scalar(kSampleFormat, 1);
    const auto compression = scalar(kCompression, 1);
    const auto predictor = scalar(kPredictor, 1);
    const auto planar = scalar(kPlanarConfig, 1);
    const auto photometric = scalar(kPhotometric, 1);
    const auto rows_per_strip = std::min<std::uint64_t>(scalar(kRowsPerStrip, height), height);

    Page page;
    if (bps == 8 && sample_fmt == 1)
        page.format = SampleFormat::U8;
    else if (bps == 16 && sample_fmt == 1)
        page.format = SampleFormat::U16;
    else if (bps == 32 && sample_fmt == 3)
        page.format = SampleFormat::F32;
    else
        fail("unsupported bit depth " + std::to_string(bps) + " (format " + std::to_string(sample_fmt) + ")");
    if (compression != 1 && compression != 8 && compression != 32946)
        fail("unsupported compression " + std::to_string(compression));
    if (predictor != 1 && !(predictor == 2 && page.format != SampleFormat::F32)) fail("unsupported predictor");
    if (photometric > 1) fail("only grayscale photometric interpretations are supported");

    const auto offsets = tags[kStripOffsets];
    const auto counts = tags[kStripByteCounts];
    if (offsets.empty() || offsets.size() != counts.size()) fail("missing strip tables");

    const std::size_t bytes_per_sample = bps / 8;
    const std::size_t planes = planar == 2 ? spp : 1;
    const std::size_t samples_per_row = planar == 2 ? width : width * spp;
    const std::size_t row_bytes = samples_per_row * bytes_per_sample;
    const std::size_t strips_per_plane = (height + rows_per_strip - 1) / rows_per_strip;
    if (offsets.size() != strips_per_plane * planes) fail("strip count does not match image geometry");

    std::vector<std::vector<std::uint8_t>> plane_data(planes);
    for (std::size_t p = 0; p < planes; ++p) {
        auto& dst = plane_data[p];
        dst.reserve(row_bytes * height);
        for (std::size_t s = 0; s < strips_per_plane; ++s) {
            const std::size_t k = p * strips_per_plane + s;
            const std::size_t rows = std::min<std::size_t>(rows_per_strip, height - s * rows_per_strip);
            const std::size_t expected = rows * row_bytes;
            r.need(offsets[k], counts[k]);
            const std::uint8_t* src = r.bytes().data() + offsets[k];
            if (compression == 1) {
                if (counts[k] < expected) fail("strip shorter than declared geometry");
                dst.insert(dst.end(), src, src + expected);
            } else {
                auto strip = inflate_strip(src, counts[k], expected);
                dst.insert(dst.end(), strip.begin(), strip.end());
            }
        }
    }

    auto sample = [&](const std::vector<std::uint8_t>& buf, std::size_t i) -> std::uint32_t {
        const std::size_t off = i * bytes_per_sample;
        if (bytes_per_sample == 1) return buf[off];
        if (bytes_per_sample == 2)
            return r.big_endian() ? static_cast<std::uint32_t>(buf[off] << 8 | buf[off + 1])
                                  : static_cast<std::uint32_t>(buf[off] | buf[off + 1] << 8);
        std::uint32_t v = 0;
        for (int b = 0; b < 4; ++b) {
            const std::uint32_t byte = buf[off + static_cast<std::size_t>(b)];
            v |= r.big_endian() ? byte << (8 * (3 - b)) : byte << (8 * b);
        }
        return v;
    };

    const int w = static_cast<int>(width), h = static_cast<int>(height);
    page.channels.assign(spp, Grid<float>(w, h));
    const std::uint32_t max_int = page.format == SampleFormat::U8 ? 0xFFu : 0xFFFFu;
    for (std::size_t c = 0; c < spp; ++c) {
        const auto& buf = plane_data[planar == 2 ? c : 0];
        for (int y = 0; y < h; ++y) {
            std::uint32_t prev = 0;
            for (int x = 0; x < w; ++x) {
                const std::size_t i = static_cast<std::size_t>(y) * samples_per_row +
                                      (planar == 2 ? static_cast<std::size_t>(x) : static_cast<std::size_t>(x) * spp + c);
                std::uint32_t raw = sample(buf, i);
                float v;
                if (page.format == SampleFormat::F32) {
                    v = std::bit_cast<float>(raw);
                } else {
                    if (predictor == 2) {
                        raw = (raw + prev) & max_int;
                        prev = raw;
                    }
                    v = static_cast<float>(photometric == 0 ? max_int - raw : raw);
                }
                page.channels[c](x, y) = v;
            }
        }
    }
    return page;
}

void put16(std::vector<std::uint8_t>& b, std::uint16_t v) {
    b.push_back(static_cast<std::uint8_t>(v & 0xFF));
    b.push_back(static_cast<std::uint8_t>(v >> 8));
}
void put32(std::vector<std::uint8_t>& b, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}
void patch32(std::vector<std::uint8_t>& b, std::size_t off, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) b[off + static_cast<std::size_t>(i)] = static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF);
}

}  // namespace

SampleFormat fitting_format(const Grid<float>& g) {
    bool u8 = true, u16 = true;
    for (float v : g.values()) {
        if (!(v >= 0.0f) || v != std::floor(v)) return SampleFormat::F32;
        if (v > 255.0f) u8 = false;
        if (v > 65535.0f) u16 = false;
    }
    return u8 ? SampleFormat::U8 : u16 ? SampleFormat::U16 : SampleFormat::F32;
}

std::vector<Page> decode(const std::vector<std::uint8_t>& bytes) {
    Reader r(bytes);
    std::vector<Page> pages;
    std::size_t ifd = r.u32(4);
    while (ifd != 0) {
        if (pages.size() > 4096) fail("IFD chain too long");
        pages.push_back(decode_page(r, ifd));
        const std::uint16_t n = r.u16(ifd);
        ifd = r.u32(ifd + 2 + 12u * n);
    }
    if (pages.empty()) fail("no pages");
    return pages;
}

std::vector<Page> read(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode(bytes);
}

std::vector<std::uint8_t> encode(const std::vector<Page>& pages, Compression c) {
    std::vector<std::uint8_t> out;
    out.push_back('I');
    out.push_back('I');
    put16(out, 42);
    std::size_t next_ifd_slot = out.size();
    put32(out, 0);

    for (const auto& page : pages) {
        const std::size_t spp = page.channels.size();
        if (spp < 1 || spp > 2) throw Error(ErrorKind::Invalid, "tiff: writer supports 1 or 2 samples per pixel");
        const int w = page.width(), h = page.height();
        for (const auto& ch : page.channels)
            if (ch.width() != w || ch.height() != h) throw Error(ErrorKind::Invalid, "tiff: channel shape mismatch");
        const std::uint16_t bps = page.format == SampleFormat::U8 ? 8 : page.format == SampleFormat::U16 ? 16 : 32;

        std::vector<std::uint8_t> raw;
        raw.reserve(static_cast<std::size_t>(w) * h * spp * (bps / 8));
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                for (std::size_t s = 0; s < spp; ++s) {
                    const float v = page.channels[s](x, y);
                    if (page.format == SampleFormat::F32) {
                        put32(raw, std::bit_cast<std::uint32_t>(v));
                    } else {
                        const float maxv = page.format == SampleFormat::U8 ? 255.0f : 65535.0f;
                        const auto q = static_cast<std::uint32_t>(std::clamp(std::round(v), 0.0f, maxv));
                        if (bps == 8)
                            raw.push_back(static_cast<std::uint8_t>(q));
                        else
                            put16(raw, static_cast<std::uint16_t>(q));
                    }
                }
        if (c == Compression::Deflate) {
            uLongf len = compressBound(static_cast<uLong>(raw.size()));
            std::vector<std::uint8_t> z(len);
            if (compress2(z.data(), &len, raw.data(), static_cast<uLong>(raw.size()), Z_DEFAULT_COMPRESSION) != Z_OK)
                throw Error(ErrorKind::Io, "tiff: deflate failed");
            z.resize(len);
            raw = std::move(z);
        }
        if (out.size() % 2) out.push_back(0);
        const auto data_off = static_cast<std::uint32_t>(out.size());
        out.insert(out.end(), raw.begin(), raw.end());
        if (out.size() % 2) out.push_back(0);

        patch32(out, next_ifd_slot, static_cast<std::uint32_t>(out.size()));
        struct Entry {
            std::uint16_t tag, type;
            std::uint32_t count, value;
        };
        // SHORT arrays of length <= 2 are packed into the value field.
        auto shorts = [](std::uint16_t a, std::uint16_t b) { return static_cast<std::uint32_t>(a) | static_cast<std::uint32_t>(b) << 16; };
        const auto nspp = static_cast<std::uint32_t>(spp);
        const std::uint16_t fmt = page.format == SampleFormat::F32 ? 3 : 1;
        const std::vector<Entry> entries = {
            {kNewSubfileType, 4, 1, pages.size() > 1 ? 2u : 0u},
            {kImageWidth, 4, 1, static_cast<std::uint32_t>(w)},
            {kImageLength, 4, 1, static_cast<std::uint32_t>(h)},
            {kBitsPerSample, 3, nspp, spp == 1 ? bps : shorts(bps, bps)},
            {kCompression, 3, 1, c == Compression::Deflate ? 8u : 1u},
            {kPhotometric, 3, 1, 1},
            {kStripOffsets, 4, 1, data_off},
            {kSamplesPerPixel, 3, 1, nspp},
            {kRowsPerStrip, 4, 1, static_cast<std::uint32_t>(h)},
            {kStripByteCounts, 4, 1, static_cast<std::uint32_t>(raw.size())},
            {kPlanarConfig, 3, 1, 1},
            {kSampleFormat, 3, nspp, spp == 1 ? fmt : shorts(fmt, fmt)},
        };
        put16(out, static_cast<std::uint16_t>(entries.size()));
        for (const auto& e : entries) {
            put16(out, e.tag);
            put16(out, e.type);
            put32(out, e.count);
            if (e.type == 3 && e.count == 1) {
                put16(out, static_cast<std::uint16_t>(e.value));
                put16(out, 0);
            } else {
                put32(out, e.value);
            }
        }
        next_ifd_slot = out.size();
        put32(out, 0);
    }
    return out;
}

void write(const std::filesystem::path& path, const std::vector<Page>& pages, Compression c) {
    const auto bytes = encode(pages, c);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorKind::Io, "short write to " + path.string());
}

}  // namespace endo::tiff
