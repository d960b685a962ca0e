#pragma once

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace qdart {

/// Row-major grayscale image; 1.0 is white, 0.0 is black.
class GrayImage {
public:
    GrayImage() = default;
    GrayImage(int width, int height, double fill = 1.0)
        : width_(width), height_(height), pixels_(checked_size(width, height), fill)
    {
    }

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    bool empty() const noexcept { return pixels_.empty(); }
    std::size_t size() const noexcept { return pixels_.size(); }

    double& at(int x, int y) { return pixels_[static_cast<std::size_t>(y) * width_ + x]; }
    double at(int x, int y) const { return pixels_[static_cast<std::size_t>(y) * width_ + x]; }

    std::vector<double>& pixels() noexcept { return pixels_; }
    const std::vector<double>& pixels() const noexcept { return pixels_; }

    friend bool operator==(const GrayImage&, const GrayImage&) = default;

private:
    static std::size_t checked_size(int w, int h)
    {
        if (w < 0 || h < 0)
            throw std::invalid_argument("GrayImage: negative dimensions");
        return static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
    }

    int width_ = 0;
    int height_ = 0;
    std::vector<double> pixels_;
};

inline std::uint8_t to_byte(double v)
{
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

inline std::vector<std::uint8_t> to_bytes(const GrayImage& img)
{
    std::vector<std::uint8_t> out(img.size());
    std::transform(img.pixels().begin(), img.pixels().end(), out.begin(), to_byte);
    return out;
}

/// Encodes as an 8-bit grayscale PNG. Output bytes depend only on pixels.
inline std::vector<std::uint8_t> encode_png(const GrayImage& img)
{
    if (img.empty())
        throw std::invalid_argument("encode_png: empty image");
    const auto bytes = to_bytes(img);
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(img.width());
    image.height = static_cast<png_uint_32>(img.height());
    image.format = PNG_FORMAT_GRAY;
    png_alloc_size_t size = 0;
    if (!png_image_write_to_memory(&image, nullptr, &size, 0, bytes.data(), 0, nullptr))
        throw std::runtime_error(std::string("encode_png: ") + image.message);
    std::vector<std::uint8_t> out(size);
    if (!png_image_write_to_memory(&image, out.data(), &size, 0, bytes.data(), 0, nullptr))
        throw std::runtime_error(std::string("encode_png: ") + image.message);
    out.resize(size);
    return out;
}

inline void write_png(const std::filesystem::path& path, const GrayImage& img)
{
    const auto data = encode_png(img);
    std::FILE* f = std::fopen(path.string().c_str(), "wb");
    if (!f)
        throw std::runtime_error("write_png: cannot open " + path.string());
    const std::size_t n = std::fwrite(data.data(), 1, data.size(), f);
    const bool ok = std::fclose(f) == 0 && n == data.size();
    if (!ok)
        throw std::runtime_error("write_png: write failed for " + path.string());
}

/// Decodes any PNG to grayscale (color is converted by libpng).
inline GrayImage read_png(const std::filesystem::path& path)
{
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.string().c_str()))
        throw std::runtime_error("read_png: " + path.string() + ": " + image.message);
    image.format = PNG_FORMAT_GRAY;
    std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
        png_image_free(&image);
        throw std::runtime_error("read_png: " + path.string() + ": " + image.message);
    }
    GrayImage img(static_cast<int>(image.width), static_cast<int>(image.height));
    std::transform(buffer.begin(), buffer.end(), img.pixels().begin(), [](std::uint8_t b) { return b / 255.0; });
    return img;
}

/// Area-average downsample to (w, h). Each output pixel averages the source
/// pixels in [floor(i*W/w), floor((i+1)*W/w)).
inline GrayImage box_downsample(const GrayImage& src, int w, int h)
{
    if (w <= 0 || h <= 0 || w > src.width() || h > src.height())
        throw std::invalid_argument("box_downsample: bad target size");
    GrayImage out(w, h);
    for (int j = 0; j < h; ++j) {
        const int y0 = static_cast<int>(static_cast<long long>(j) * src.height() / h);
        const int y1 = static_cast<int>(static_cast<long long>(j + 1) * src.height() / h);
        for (int i = 0; i < w; ++i) {
            const int x0 = static_cast<int>(static_cast<long long>(i) * src.width() / w);
            const int x1 = static_cast<int>(static_cast<long long>(i + 1) * src.width() / w);
            double sum = 0.0;
            for (int y = y0; y < y1; ++y)
                for (int x = x0; x < x1; ++x)
                    sum += src.at(x, y);
            out.at(i, j) = sum / static_cast<double>((y1 - y0) * (x1 - x0));
        }
    }
    return out;
}

} // namespace qdart
