#include "distrace/imgproc.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <deque>
#include <fstream>
#include <iterator>
#include <optional>
#include <string_view>

#include "distrace/error.hpp"

namespace distrace {

namespace {

void check_dims(std::uint32_t width, std::uint32_t height, std::size_t len, const char* what)
{
    if (width == 0 || height == 0) {
        throw Error(ErrorCode::InvalidArgument, std::string(what) + " dimensions must be positive");
    }
    if (len != std::size_t(width) * height) {
        throw Error(ErrorCode::DimensionMismatch, std::string(what) + " buffer length does not match width*height");
    }
}

// Reflect-101: -1 -> 1, n -> n-2.
std::int64_t reflect(std::int64_t i, std::int64_t n)
{
    if (n == 1) {
        return 0;
    }
    while (i < 0 || i >= n) {
        if (i < 0) {
            i = -i;
        }
        if (i >= n) {
            i = 2 * (n - 1) - i;
        }
    }
    return i;
}

struct Gradient {
    std::vector<std::int64_t> gx;
    std::vector<std::int64_t> gy;
    std::vector<std::int64_t> mag;  // gx^2 + gy^2
};

Gradient sobel(const GrayImage& img)
{
    const std::int64_t w = img.width();
    const std::int64_t h = img.height();
    const std::size_t n = std::size_t(w * h);
    Gradient g{std::vector<std::int64_t>(n), std::vector<std::int64_t>(n), std::vector<std::int64_t>(n)};
    for (std::int64_t y = 0; y < h; ++y) {
        const auto y0 = std::uint32_t(reflect(y - 1, h));
        const auto y2 = std::uint32_t(reflect(y + 1, h));
        const auto yc = std::uint32_t(y);
        for (std::int64_t x = 0; x < w; ++x) {
            const auto x0 = std::uint32_t(reflect(x - 1, w));
            const auto x2 = std::uint32_t(reflect(x + 1, w));
            const auto xc = std::uint32_t(x);
            const std::size_t i = std::size_t(y * w + x);
            g.gx[i] = (img.at(x2, y0) + 2 * img.at(x2, yc) + img.at(x2, y2)) -
                      (img.at(x0, y0) + 2 * img.at(x0, yc) + img.at(x0, y2));
            g.gy[i] = (img.at(x0, y2) + 2 * img.at(xc, y2) + img.at(x2, y2)) -
                      (img.at(x0, y0) + 2 * img.at(xc, y0) + img.at(x2, y0));
            g.mag[i] = g.gx[i] * g.gx[i] + g.gy[i] * g.gy[i];
        }
    }
    return g;
}

class PgmTokenizer {
public:
    explicit PgmTokenizer(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    std::optional<std::string_view> next()
    {
        skip_space_and_comments();
        const std::size_t start = pos_;
        while (pos_ < bytes_.size() && !std::isspace(bytes_[pos_]) && bytes_[pos_] != '#') {
            ++pos_;
        }
        if (start == pos_) {
            return std::nullopt;
        }
        return std::string_view(reinterpret_cast<const char*>(bytes_.data()) + start, pos_ - start);
    }

    std::size_t position() const noexcept { return pos_; }
    void advance(std::size_t n) noexcept { pos_ += n; }
    bool at_space() const noexcept { return pos_ < bytes_.size() && std::isspace(bytes_[pos_]); }

private:
    void skip_space_and_comments()
    {
        while (pos_ < bytes_.size()) {
            if (std::isspace(bytes_[pos_])) {
                ++pos_;
            } else if (bytes_[pos_] == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n') {
                    ++pos_;
                }
            } else {
                break;
            }
        }
    }

    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

std::optional<std::uint64_t> parse_uint(std::string_view token)
{
    if (token.empty() || token.size() > 12) {
        return std::nullopt;
    }
    std::uint64_t value = 0;
    for (char c : token) {
        if (c < '0' || c > '9') {
            return std::nullopt;
        }
        value = value * 10 + std::uint64_t(c - '0');
    }
    return value;
}

std::uint32_t header_field(PgmTokenizer& tok, const char* name)
{
    const auto token = tok.next();
    if (!token) {
        throw Error(ErrorCode::MalformedHeader, std::string("missing ") + name);
    }
    const auto value = parse_uint(*token);
    if (!value || *value > 0xFFFFFFFFull) {
        throw Error(ErrorCode::MalformedHeader, std::string("bad ") + name + " '" + std::string(*token) + "'");
    }
    return std::uint32_t(*value);
}

}  // namespace

GrayImage::GrayImage(std::uint32_t width, std::uint32_t height, std::uint8_t fill)
    : GrayImage(width, height, std::vector<std::uint8_t>(std::size_t(width) * height, fill))
{
}

GrayImage::GrayImage(std::uint32_t width, std::uint32_t height, std::vector<std::uint8_t> data)
    : width_(width), height_(height), data_(std::move(data))
{
    check_dims(width_, height_, data_.size(), "image");
}

BinaryMask::BinaryMask(std::uint32_t width, std::uint32_t height, bool fill)
    : BinaryMask(width, height, std::vector<std::uint8_t>(std::size_t(width) * height, fill ? 1 : 0))
{
}

BinaryMask::BinaryMask(std::uint32_t width, std::uint32_t height, std::vector<std::uint8_t> bits)
    : width_(width), height_(height), bits_(std::move(bits))
{
    check_dims(width_, height_, bits_.size(), "mask");
    for (auto& b : bits_) {
        b = b != 0 ? 1 : 0;
    }
}

std::size_t BinaryMask::count() const noexcept
{
    return std::size_t(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

BinaryMask BinaryMask::complement() const
{
    BinaryMask out = *this;
    for (auto& b : out.bits_) {
        b ^= 1;
    }
    return out;
}

StructuringElement::StructuringElement(std::uint32_t width, std::uint32_t height, std::vector<std::uint8_t> bits)
    : width_(width), height_(height), bits_(std::move(bits))
{
    if (width_ % 2 == 0 || height_ % 2 == 0) {
        throw Error(ErrorCode::InvalidArgument, "structuring element sides must be odd");
    }
    if (bits_.size() != std::size_t(width_) * height_) {
        throw Error(ErrorCode::DimensionMismatch, "structuring element bits do not match width*height");
    }
    if (!member(std::uint32_t(anchor_x()), std::uint32_t(anchor_y()))) {
        throw Error(ErrorCode::InvalidArgument, "structuring element anchor must be a member");
    }
}

StructuringElement StructuringElement::box(std::uint32_t size)
{
    return StructuringElement(size, size, std::vector<std::uint8_t>(std::size_t(size) * size, 1));
}

StructuringElement StructuringElement::cross(std::uint32_t size)
{
    std::vector<std::uint8_t> bits(std::size_t(size) * size, 0);
    for (std::uint32_t i = 0; i < size; ++i) {
        bits[std::size_t(size / 2) * size + i] = 1;
        bits[std::size_t(i) * size + size / 2] = 1;
    }
    return StructuringElement(size, size, std::move(bits));
}

StructuringElement StructuringElement::reflected() const
{
    std::vector<std::uint8_t> bits(bits_.size());
    for (std::uint32_t y = 0; y < height_; ++y) {
        for (std::uint32_t x = 0; x < width_; ++x) {
            bits[std::size_t(height_ - 1 - y) * width_ + (width_ - 1 - x)] = bits_[std::size_t(y) * width_ + x];
        }
    }
    return StructuringElement(width_, height_, std::move(bits));
}

std::vector<StructuringElement::Offset> StructuringElement::offsets() const
{
    std::vector<Offset> out;
    for (std::uint32_t y = 0; y < height_; ++y) {
        for (std::uint32_t x = 0; x < width_; ++x) {
            if (member(x, y)) {
                out.push_back({std::int32_t(x) - anchor_x(), std::int32_t(y) - anchor_y()});
            }
        }
    }
    return out;
}

// Pixel values are kept as stored (no rescaling by maxval) so label maps
// round-trip their class ids.
GrayImage load_pgm(std::span<const std::uint8_t> bytes)
{
    if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '2' && bytes[1] != '5')) {
        throw Error(ErrorCode::MalformedHeader, "expected magic P2 or P5");
    }
    const bool binary = bytes[1] == '5';
    PgmTokenizer tok(bytes);
    tok.advance(2);
    if (!tok.at_space() && tok.position() < bytes.size() && bytes[tok.position()] != '#') {
        throw Error(ErrorCode::MalformedHeader, "magic must be followed by whitespace");
    }
    const std::uint32_t width = header_field(tok, "width");
    const std::uint32_t height = header_field(tok, "height");
    const std::uint32_t maxval = header_field(tok, "maxval");
    if (width == 0 || height == 0) {
        throw Error(ErrorCode::MalformedHeader, "zero image dimension");
    }
    if (maxval == 0) {
        throw Error(ErrorCode::MalformedHeader, "maxval must be positive");
    }
    if (maxval > 255) {
        throw Error(ErrorCode::UnsupportedMaxval, "maxval " + std::to_string(maxval) + " exceeds 255");
    }

    const std::size_t n = std::size_t(width) * height;
    std::vector<std::uint8_t> data(n);
    if (binary) {
        // Exactly one whitespace byte separates the header from the raster.
        if (!tok.at_space()) {
            throw Error(ErrorCode::TruncatedData, "missing raster");
        }
        const std::size_t start = tok.position() + 1;
        if (bytes.size() < start || bytes.size() - start < n) {
            throw Error(ErrorCode::TruncatedData,
                        "expected " + std::to_string(n) + " raster bytes, found " +
                            std::to_string(bytes.size() < start ? 0 : bytes.size() - start));
        }
        std::copy_n(bytes.begin() + std::ptrdiff_t(start), n, data.begin());
        for (auto v : data) {
            if (v > maxval) {
                throw Error(ErrorCode::MalformedHeader, "pixel value exceeds maxval");
            }
        }
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            const auto token = tok.next();
            if (!token) {
                throw Error(ErrorCode::TruncatedData,
                            "expected " + std::to_string(n) + " pixels, found " + std::to_string(i));
            }
            const auto value = parse_uint(*token);
            if (!value || *value > maxval) {
                throw Error(ErrorCode::MalformedHeader, "bad pixel value '" + std::string(*token) + "'");
            }
            data[i] = std::uint8_t(*value);
        }
    }
    return GrayImage(width, height, std::move(data));
}

GrayImage load_pgm_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::IoFailure, "cannot open " + path);
    }
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return load_pgm(bytes);
}

std::vector<std::uint8_t> encode_pgm(const GrayImage& img)
{
    const std::string header =
        "P5\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.insert(out.end(), img.data().begin(), img.data().end());
    return out;
}

void save_pgm_file(const GrayImage& img, const std::string& path)
{
    const auto bytes = encode_pgm(img);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    if (!out) {
        throw Error(ErrorCode::IoFailure, "cannot write " + path);
    }
}

GrayImage gaussian_blur(const GrayImage& img, double sigma)
{
    if (!(sigma > 0.0) || !std::isfinite(sigma)) {
        throw Error(ErrorCode::NonPositiveSigma, "sigma must be positive");
    }
    const auto radius = std::int64_t(std::ceil(3.0 * sigma));
    std::vector<double> kernel(std::size_t(2 * radius + 1));
    double sum = 0.0;
    for (std::int64_t k = -radius; k <= radius; ++k) {
        const double w = std::exp(-double(k * k) / (2.0 * sigma * sigma));
        kernel[std::size_t(k + radius)] = w;
        sum += w;
    }
    for (auto& w : kernel) {
        w /= sum;
    }

    const std::int64_t w = img.width();
    const std::int64_t h = img.height();
    std::vector<double> horiz(std::size_t(w * h));
    for (std::int64_t y = 0; y < h; ++y) {
        for (std::int64_t x = 0; x < w; ++x) {
            double acc = 0.0;
            for (std::int64_t k = -radius; k <= radius; ++k) {
                acc += kernel[std::size_t(k + radius)] * img.at(std::uint32_t(reflect(x + k, w)), std::uint32_t(y));
            }
            horiz[std::size_t(y * w + x)] = acc;
        }
    }
    GrayImage out(img.width(), img.height());
    for (std::int64_t y = 0; y < h; ++y) {
        for (std::int64_t x = 0; x < w; ++x) {
            double acc = 0.0;
            for (std::int64_t k = -radius; k <= radius; ++k) {
                acc += kernel[std::size_t(k + radius)] * horiz[std::size_t(reflect(y + k, h) * w + x)];
            }
            out.at(std::uint32_t(x), std::uint32_t(y)) = std::uint8_t(std::clamp<long>(std::lround(acc), 0, 255));
        }
    }
    return out;
}

std::vector<std::int64_t> sobel_magnitude_sq(const GrayImage& img)
{
    return sobel(img).mag;
}

BinaryMask canny(const GrayImage& img, double low, double high, double sigma)
{
    if (!(low >= 0.0) || !std::isfinite(high)) {
        throw Error(ErrorCode::InvalidArgument, "canny thresholds must be finite and non-negative");
    }
    if (low >= high) {
        throw Error(ErrorCode::ThresholdOrder, "low threshold must be below high threshold");
    }
    const GrayImage smooth = gaussian_blur(img, sigma);
    const std::int64_t w = img.width();
    const std::int64_t h = img.height();

    const auto [gx, gy, mag] = sobel(smooth);

    auto mag_at = [&](std::int64_t x, std::int64_t y) -> std::int64_t {
        if (x < 0 || y < 0 || x >= w || y >= h) {
            return 0;
        }
        return mag[std::size_t(y * w + x)];
    };

    constexpr double tan22 = 0.41421356237309503;  // tan(22.5 deg)
    constexpr double tan67 = 2.4142135623730949;   // tan(67.5 deg)
    const double low_sq = low * low;
    const double high_sq = high * high;

    // 0 = suppressed, 1 = weak, 2 = strong
    std::vector<std::uint8_t> level(std::size_t(w * h), 0);
    std::deque<std::size_t> frontier;
    for (std::int64_t y = 0; y < h; ++y) {
        for (std::int64_t x = 0; x < w; ++x) {
            const std::size_t i = std::size_t(y * w + x);
            const std::int64_t m = mag[i];
            if (m == 0 || double(m) < low_sq) {
                continue;
            }
            const double ax = std::abs(double(gx[i]));
            const double ay = std::abs(double(gy[i]));
            std::int64_t dx = 0;
            std::int64_t dy = 0;
            if (ay <= ax * tan22) {
                dx = 1;
            } else if (ay >= ax * tan67) {
                dy = 1;
            } else if ((gx[i] > 0) == (gy[i] > 0)) {
                dx = 1;
                dy = 1;
            } else {
                dx = -1;
                dy = 1;
            }
            // Ties keep both pixels so symmetric steps stay centred on the boundary.
            if (m < mag_at(x + dx, y + dy) || m < mag_at(x - dx, y - dy)) {
                continue;
            }
            if (double(m) >= high_sq) {
                level[i] = 2;
                frontier.push_back(i);
            } else {
                level[i] = 1;
            }
        }
    }

    BinaryMask edges(img.width(), img.height());
    for (std::size_t i : frontier) {
        edges.set(std::uint32_t(std::int64_t(i) % w), std::uint32_t(std::int64_t(i) / w));
    }
    while (!frontier.empty()) {
        const std::size_t i = frontier.front();
        frontier.pop_front();
        const std::int64_t x = std::int64_t(i) % w;
        const std::int64_t y = std::int64_t(i) / w;
        for (std::int64_t ny = y - 1; ny <= y + 1; ++ny) {
            for (std::int64_t nx = x - 1; nx <= x + 1; ++nx) {
                if (nx < 0 || ny < 0 || nx >= w || ny >= h) {
                    continue;
                }
                const std::size_t j = std::size_t(ny * w + nx);
                if (level[j] == 1) {
                    level[j] = 2;
                    edges.set(std::uint32_t(nx), std::uint32_t(ny));
                    frontier.push_back(j);
                }
            }
        }
    }
    return edges;
}

BinaryMask dilate(const BinaryMask& mask, const StructuringElement& se)
{
    const auto offsets = se.offsets();
    BinaryMask out(mask.width(), mask.height());
    for (std::uint32_t y = 0; y < mask.height(); ++y) {
        for (std::uint32_t x = 0; x < mask.width(); ++x) {
            for (const auto& o : offsets) {
                if (mask.at_or_background(std::int64_t(x) - o.dx, std::int64_t(y) - o.dy)) {
                    out.set(x, y);
                    break;
                }
            }
        }
    }
    return out;
}

BinaryMask erode(const BinaryMask& mask, const StructuringElement& se)
{
    const auto offsets = se.offsets();
    BinaryMask out(mask.width(), mask.height());
    for (std::uint32_t y = 0; y < mask.height(); ++y) {
        for (std::uint32_t x = 0; x < mask.width(); ++x) {
            bool all = true;
            for (const auto& o : offsets) {
                if (!mask.at_or_background(std::int64_t(x) + o.dx, std::int64_t(y) + o.dy)) {
                    all = false;
                    break;
                }
            }
            if (all) {
                out.set(x, y);
            }
        }
    }
    return out;
}

BinaryMask close_gaps(const BinaryMask& mask, const StructuringElement& se, unsigned iterations)
{
    if (iterations == 0) {
        throw Error(ErrorCode::ZeroIterations, "closing needs at least one iteration");
    }
    BinaryMask out = mask;
    for (unsigned i = 0; i < iterations; ++i) {
        out = dilate(out, se);
    }
    for (unsigned i = 0; i < iterations; ++i) {
        out = erode(out, se);
    }
    return out;
}

BinaryMask threshold(const GrayImage& img, std::uint8_t threshold)
{
    std::vector<std::uint8_t> bits(img.data().size());
    std::transform(img.data().begin(), img.data().end(), bits.begin(),
                   [threshold](std::uint8_t v) { return std::uint8_t(v > threshold ? 1 : 0); });
    return BinaryMask(img.width(), img.height(), std::move(bits));
}

GrayImage to_gray(const BinaryMask& mask)
{
    std::vector<std::uint8_t> data(mask.bits().size());
    std::transform(mask.bits().begin(), mask.bits().end(), data.begin(),
                   [](std::uint8_t b) { return std::uint8_t(b ? 255 : 0); });
    return GrayImage(mask.width(), mask.height(), std::move(data));
}

}  // namespace distrace
