// Copyright Contributors to the wheatgs project
// SPDX-License-Identifier: Apache-2.0

#include "wheatgs/image.hpp"

#include "wheatgs/error.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

namespace wheatgs {

std::size_t count_foreground(const BinaryMask &mask) {
    return static_cast<std::size_t>(std::count_if(mask.data.begin(), mask.data.end(),
                                                  [](std::uint8_t v) { return v != 0; }));
}

PixelRect foreground_bbox(const BinaryMask &mask) {
    int x0 = std::numeric_limits<int>::max();
    int y0 = std::numeric_limits<int>::max();
    int x1 = -1;
    int y1 = -1;
    for (int y = 0; y < mask.height; ++y) {
        for (int x = 0; x < mask.width; ++x) {
            if (mask(x, y) != 0) {
                x0 = std::min(x0, x);
                y0 = std::min(y0, y);
                x1 = std::max(x1, x);
                y1 = std::max(y1, y);
            }
        }
    }
    if (x1 < 0) {
        return {};
    }
    return {x0, y0, x1 - x0 + 1, y1 - y0 + 1};
}

std::size_t intersection_count(const BinaryMask &a, const BinaryMask &b) {
    std::size_t n = 0;
    const std::size_t len = std::min(a.data.size(), b.data.size());
    for (std::size_t i = 0; i < len; ++i) {
        n += (a.data[i] != 0 && b.data[i] != 0) ? 1U : 0U;
    }
    return n;
}

BinaryMask morph(const BinaryMask &mask, int radius) {
    if (radius == 0) {
        return mask;
    }
    const bool dilate = radius > 0;
    const int r = std::abs(radius);
    // Separable square element: horizontal pass then vertical pass.
    auto pass = [&](const BinaryMask &src, bool horizontal) {
        BinaryMask dst(src.width, src.height);
        for (int y = 0; y < src.height; ++y) {
            for (int x = 0; x < src.width; ++x) {
                bool any = false;
                bool all = true;
                for (int o = -r; o <= r; ++o) {
                    const int xx = horizontal ? x + o : x;
                    const int yy = horizontal ? y : y + o;
                    const bool inside = xx >= 0 && yy >= 0 && xx < src.width && yy < src.height;
                    const bool v = inside && src(xx, yy) != 0;
                    any = any || v;
                    all = all && v;
                }
                dst(x, y) = static_cast<std::uint8_t>(dilate ? any : all);
            }
        }
        return dst;
    };
    return pass(pass(mask, true), false);
}

BinaryMask read_mask_png(const std::filesystem::path &path, std::uint8_t threshold) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (png_image_begin_read_from_file(&image, path.string().c_str()) == 0) {
        throw IoError("cannot read PNG '" + path.string() + "': " + image.message);
    }
    image.format = PNG_FORMAT_GRAY;
    std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(image));
    if (png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr) == 0) {
        std::string msg = image.message;
        png_image_free(&image);
        throw FormatError("cannot decode PNG '" + path.string() + "': " + msg);
    }
    BinaryMask mask(static_cast<int>(image.width), static_cast<int>(image.height));
    for (std::size_t i = 0; i < mask.data.size(); ++i) {
        mask.data[i] = buffer[i] >= threshold ? 1 : 0;
    }
    return mask;
}

namespace {

void write_png_bytes(const std::filesystem::path &path, int width, int height, int channels,
                     const std::vector<std::uint8_t> &bytes) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(width);
    image.height = static_cast<png_uint_32>(height);
    image.format = channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    if (png_image_write_to_file(&image, path.string().c_str(), 0, bytes.data(), 0, nullptr) == 0) {
        throw IoError("cannot write PNG '" + path.string() + "': " + image.message);
    }
}

} // namespace

void write_mask_png(const std::filesystem::path &path, const BinaryMask &mask) {
    std::vector<std::uint8_t> bytes(mask.data.size());
    std::transform(mask.data.begin(), mask.data.end(), bytes.begin(),
                   [](std::uint8_t v) { return static_cast<std::uint8_t>(v != 0 ? 255 : 0); });
    write_png_bytes(path, mask.width, mask.height, 1, bytes);
}

void write_png(const std::filesystem::path &path, const ImageD &image) {
    if (image.channels != 1 && image.channels != 3) {
        throw InputError("write_png: only 1 or 3 channels supported");
    }
    std::vector<std::uint8_t> bytes(image.data.size());
    std::transform(image.data.begin(), image.data.end(), bytes.begin(), [](double v) {
        return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
    });
    write_png_bytes(path, image.width, image.height, image.channels, bytes);
}

void write_pfm(const std::filesystem::path &path, const ImageD &image) {
    if (image.channels != 1 && image.channels != 3) {
        throw InputError("write_pfm: only 1 or 3 channels supported");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot open '" + path.string() + "' for writing");
    }
    out << (image.channels == 3 ? "PF" : "Pf") << "\n" << image.width << " " << image.height << "\n-1.0\n";
    // PFM stores rows bottom to top.
    for (int y = image.height - 1; y >= 0; --y) {
        for (int x = 0; x < image.width; ++x) {
            for (int c = 0; c < image.channels; ++c) {
                const auto v = static_cast<float>(image(x, y, c));
                out.write(reinterpret_cast<const char *>(&v), sizeof(float));
            }
        }
    }
    if (!out) {
        throw IoError("failed writing '" + path.string() + "'");
    }
}

} // namespace wheatgs
