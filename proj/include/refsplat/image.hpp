#pragma once

#include <array>
#include <cstddef>
#include <vector>

namespace refsplat {

using Rgb = std::array<double, 3>;

/// Dense interleaved (row-major, channel-fastest) image of doubles.
struct Image {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<double> data;

    Image() = default;
    Image(int w, int h, int c, double fill = 0.0)
        : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {}

    bool empty() const noexcept { return data.empty(); }
    std::size_t pixel_count() const noexcept { return static_cast<std::size_t>(width) * height; }
    std::size_t index(int x, int y, int c = 0) const noexcept {
        return (static_cast<std::size_t>(y) * width + x) * channels + c;
    }
    double& at(int x, int y, int c = 0) noexcept { return data[index(x, y, c)]; }
    double at(int x, int y, int c = 0) const noexcept { return data[index(x, y, c)]; }

    bool same_shape(const Image& o) const noexcept {
        return width == o.width && height == o.height && channels == o.channels;
    }
    bool same_extent(const Image& o) const noexcept { return width == o.width && height == o.height; }
};

}  // namespace refsplat
