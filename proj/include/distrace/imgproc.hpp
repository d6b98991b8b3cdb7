#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace distrace {

/// Row-major 8-bit grayscale raster.
class GrayImage {
public:
    GrayImage(std::uint32_t width, std::uint32_t height, std::uint8_t fill = 0);
    GrayImage(std::uint32_t width, std::uint32_t height, std::vector<std::uint8_t> data);

    std::uint32_t width() const noexcept { return width_; }
    std::uint32_t height() const noexcept { return height_; }
    std::span<const std::uint8_t> data() const noexcept { return data_; }
    std::span<std::uint8_t> data() noexcept { return data_; }

    std::uint8_t at(std::uint32_t x, std::uint32_t y) const { return data_[std::size_t(y) * width_ + x]; }
    std::uint8_t& at(std::uint32_t x, std::uint32_t y) { return data_[std::size_t(y) * width_ + x]; }

    bool operator==(const GrayImage&) const = default;

private:
    std::uint32_t width_;
    std::uint32_t height_;
    std::vector<std::uint8_t> data_;
};

/// Row-major foreground flags, one byte per pixel (0 or 1).
class BinaryMask {
public:
    BinaryMask(std::uint32_t width, std::uint32_t height, bool fill = false);
    BinaryMask(std::uint32_t width, std::uint32_t height, std::vector<std::uint8_t> bits);

    std::uint32_t width() const noexcept { return width_; }
    std::uint32_t height() const noexcept { return height_; }
    std::span<const std::uint8_t> bits() const noexcept { return bits_; }

    bool at(std::uint32_t x, std::uint32_t y) const { return bits_[std::size_t(y) * width_ + x] != 0; }
    void set(std::uint32_t x, std::uint32_t y, bool value = true) { bits_[std::size_t(y) * width_ + x] = value ? 1 : 0; }

    /// Foreground test that treats coordinates outside the raster as background.
    bool at_or_background(std::int64_t x, std::int64_t y) const
    {
        return x >= 0 && y >= 0 && x < width_ && y < height_ && at(std::uint32_t(x), std::uint32_t(y));
    }

    std::size_t count() const noexcept;
    BinaryMask complement() const;

    bool operator==(const BinaryMask&) const = default;

private:
    std::uint32_t width_;
    std::uint32_t height_;
    std::vector<std::uint8_t> bits_;
};

/// Odd-sized boolean neighbourhood anchored at its centre pixel.
class StructuringElement {
public:
    StructuringElement(std::uint32_t width, std::uint32_t height, std::vector<std::uint8_t> bits);

    static StructuringElement box(std::uint32_t size);
    static StructuringElement cross(std::uint32_t size);

    std::uint32_t width() const noexcept { return width_; }
    std::uint32_t height() const noexcept { return height_; }
    std::int32_t anchor_x() const noexcept { return std::int32_t(width_ / 2); }
    std::int32_t anchor_y() const noexcept { return std::int32_t(height_ / 2); }
    bool member(std::uint32_t x, std::uint32_t y) const { return bits_[std::size_t(y) * width_ + x] != 0; }

    /// Point reflection through the anchor.
    StructuringElement reflected() const;

    struct Offset {
        std::int32_t dx;
        std::int32_t dy;
    };
    /// Member positions relative to the anchor.
    std::vector<Offset> offsets() const;

private:
    std::uint32_t width_;
    std::uint32_t height_;
    std::vector<std::uint8_t> bits_;
};

GrayImage load_pgm(std::span<const std::uint8_t> bytes);
GrayImage load_pgm_file(const std::string& path);
std::vector<std::uint8_t> encode_pgm(const GrayImage& img);
void save_pgm_file(const GrayImage& img, const std::string& path);

/// Separable Gaussian, radius ceil(3*sigma), reflect-101 border.
GrayImage gaussian_blur(const GrayImage& img, double sigma);

struct CannyParams {
    double low = 50.0;
    double high = 150.0;
    double sigma = 1.4;
};

/// Blur, 3x3 Sobel, non-maximum suppression over 4 direction bins, and
/// 8-connected hysteresis from strong pixels through weak ones.
BinaryMask canny(const GrayImage& img, double low, double high, double sigma);
inline BinaryMask canny(const GrayImage& img, const CannyParams& p) { return canny(img, p.low, p.high, p.sigma); }

/// Squared L2 Sobel gradient magnitude, reflect-101 border.
std::vector<std::int64_t> sobel_magnitude_sq(const GrayImage& img);

// Morphology treats pixels outside the raster as background.
BinaryMask dilate(const BinaryMask& mask, const StructuringElement& se);
BinaryMask erode(const BinaryMask& mask, const StructuringElement& se);
/// `iterations` dilations followed by as many erosions.
BinaryMask close_gaps(const BinaryMask& mask, const StructuringElement& se, unsigned iterations);

/// Foreground = pixel value > threshold; rendered back as 0/255.
BinaryMask threshold(const GrayImage& img, std::uint8_t threshold);
GrayImage to_gray(const BinaryMask& mask);

}  // namespace distrace
