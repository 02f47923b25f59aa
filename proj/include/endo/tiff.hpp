#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "endo/grid.hpp"

// Minimal baseline TIFF codec: grayscale, 8/16-bit unsigned or 32-bit float,
// uncompressed or deflate, one or more pages, one or more samples per pixel.
namespace endo::tiff {

enum class SampleFormat : std::uint8_t { U8, U16, F32 };
enum class Compression : std::uint8_t { None, Deflate };

struct Page {
    SampleFormat format = SampleFormat::U8;
    std::vector<Grid<float>> channels;  // one per sample, all same shape

    int width() const { return channels.empty() ? 0 : channels.front().width(); }
    int height() const { return channels.empty() ? 0 : channels.front().height(); }
};

std::vector<Page> read(const std::filesystem::path& path);
std::vector<Page> decode(const std::vector<std::uint8_t>& bytes);

std::vector<std::uint8_t> encode(const std::vector<Page>& pages, Compression c = Compression::None);
void write(const std::filesystem::path& path, const std::vector<Page>& pages, Compression c = Compression::None);

/// Smallest format that stores every value of g exactly.
SampleFormat fitting_format(const Grid<float>& g);

}  // namespace endo::tiff
