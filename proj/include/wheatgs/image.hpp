// Copyright Contributors to the wheatgs project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace wheatgs {

/// Row-major, channel-interleaved image.
template <typename T> struct Image {
    int width = 0;
    int height = 0;
    int channels = 1;
    std::vector<T> data;

    Image() = default;
    Image(int w, int h, int c = 1, T fill = T{})
        : width(w), height(h), channels(c),
          data(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * static_cast<std::size_t>(c),
               fill) {}

    [[nodiscard]] std::size_t pixel_count() const {
        return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
    }
    [[nodiscard]] std::size_t index(int x, int y, int c = 0) const {
        return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)) *
                   static_cast<std::size_t>(channels) +
               static_cast<std::size_t>(c);
    }
    T &operator()(int x, int y, int c = 0) { return data[index(x, y, c)]; }
    const T &operator()(int x, int y, int c = 0) const { return data[index(x, y, c)]; }
    [[nodiscard]] bool same_shape(const Image &o) const {
        return width == o.width && height == o.height && channels == o.channels;
    }
    bool operator==(const Image &) const = default;
};

/// Binary image with values 0 (background) and 1 (foreground).
using BinaryMask = Image<std::uint8_t>;
using ImageD = Image<double>;

struct PixelRect {
    int x0 = 0;
    int y0 = 0;
    int width = 0;
    int height = 0;
    bool operator==(const PixelRect &) const = default;
};

[[nodiscard]] std::size_t count_foreground(const BinaryMask &mask);
/// Tight bounding rectangle of the foreground; all-zero rect when empty.
[[nodiscard]] PixelRect foreground_bbox(const BinaryMask &mask);
[[nodiscard]] std::size_t intersection_count(const BinaryMask &a, const BinaryMask &b);

/// Square-structuring-element dilation (radius > 0) or erosion (radius < 0).
[[nodiscard]] BinaryMask morph(const BinaryMask &mask, int radius);

/// Reads an 8-bit grayscale PNG (other formats are converted to gray) and
/// thresholds at `threshold`.
[[nodiscard]] BinaryMask read_mask_png(const std::filesystem::path &path, std::uint8_t threshold = 128);
/// Writes a binary mask as 8-bit gray PNG with foreground 255.
void write_mask_png(const std::filesystem::path &path, const BinaryMask &mask);
/// Writes a 1- or 3-channel image in [0,1] as 8-bit PNG (values clamped, rounded).
void write_png(const std::filesystem::path &path, const ImageD &image);
/// Writes a 1- or 3-channel float image as little-endian PFM.
void write_pfm(const std::filesystem::path &path, const ImageD &image);

} // namespace wheatgs
