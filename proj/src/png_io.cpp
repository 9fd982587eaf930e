#include <png.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "refsplat/error.hpp"
#include "refsplat/scene_io.hpp"

namespace refsplat {

std::uint8_t quantize8(double v) {
    if (!(v > 0.0)) return 0;
    if (v >= 1.0) return 255;
    return static_cast<std::uint8_t>(std::lround(v * 255.0));
}

Image quantize_image(const Image& img) {
    Image out = img;
    for (double& v : out.data) v = quantize8(v) / 255.0;
    return out;
}

Image read_png(const fs::path& path, const Rgb* background) {
    png_image png;
    std::memset(&png, 0, sizeof png);
    png.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&png, path.string().c_str()))
        throw LoadError("cannot decode PNG '" + path.string() + "': " + png.message);

    const bool color = png.format & PNG_FORMAT_FLAG_COLOR;
    const bool alpha = png.format & PNG_FORMAT_FLAG_ALPHA;
    png.format = alpha ? PNG_FORMAT_RGBA : (color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY);
    std::vector<png_byte> buffer(PNG_IMAGE_SIZE(png));
    if (!png_image_finish_read(&png, nullptr, buffer.data(), 0, nullptr)) {
        std::string msg = png.message;
        png_image_free(&png);
        throw LoadError("cannot decode PNG '" + path.string() + "': " + msg);
    }

    const int w = static_cast<int>(png.width), h = static_cast<int>(png.height);
    if (!alpha) {
        const int ch = color ? 3 : 1;
        Image out(w, h, ch);
        for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = buffer[i] / 255.0;
        return out;
    }
    const bool gray_source = !color;
    Image out(w, h, gray_source && !background ? 1 : 3);
    for (std::size_t p = 0; p < out.pixel_count(); ++p) {
        const double a = buffer[4 * p + 3] / 255.0;
        for (int c = 0; c < out.channels; ++c) {
            const double v = buffer[4 * p + c] / 255.0;
            out.data[p * out.channels + c] = background ? v * a + (*background)[c] * (1.0 - a) : v;
        }
    }
    return out;
}

void write_png(const fs::path& path, const Image& img) {
    if (img.channels != 1 && img.channels != 3) throw ConfigError("write_png: expected 1 or 3 channels");
    std::vector<png_byte> buffer(img.data.size());
    for (std::size_t i = 0; i < buffer.size(); ++i) buffer[i] = quantize8(img.data[i]);
    png_image png;
    std::memset(&png, 0, sizeof png);
    png.version = PNG_IMAGE_VERSION;
    png.width = static_cast<png_uint_32>(img.width);
    png.height = static_cast<png_uint_32>(img.height);
    png.format = img.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    if (!png_image_write_to_file(&png, path.string().c_str(), 0, buffer.data(), 0, nullptr))
        throw LoadError("cannot write PNG '" + path.string() + "': " + png.message);
}

Image resize_nearest(const Image& img, int width, int height) {
    Image out(width, height, img.channels);
    for (int y = 0; y < height; ++y) {
        const int sy = std::min(img.height - 1, static_cast<int>((y + 0.5) * img.height / height));
        for (int x = 0; x < width; ++x) {
            const int sx = std::min(img.width - 1, static_cast<int>((x + 0.5) * img.width / width));
            for (int c = 0; c < img.channels; ++c) out.at(x, y, c) = img.at(sx, sy, c);
        }
    }
    return out;
}

Image load_mask(const fs::path& path, int width, int height, bool* resized) {
    Image raw = read_png(path);
    Image mask(raw.width, raw.height, 1);
    // Color masks use their first channel.
    for (std::size_t p = 0; p < mask.pixel_count(); ++p) mask.data[p] = raw.data[p * raw.channels];
    const bool differs = mask.width != width || mask.height != height;
    if (resized) *resized = differs;
    return differs ? resize_nearest(mask, width, height) : mask;
}

}  // namespace refsplat
