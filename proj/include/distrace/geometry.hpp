#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "distrace/imgproc.hpp"

namespace distrace {

/// Image coordinates: origin top-left, y grows downward.
struct Point {
    double x = 0.0;
    double y = 0.0;

    bool operator==(const Point&) const = default;
};

struct PixelPoint {
    std::int32_t x = 0;
    std::int32_t y = 0;

    bool operator==(const PixelPoint&) const = default;
    auto operator<=>(const PixelPoint&) const = default;
};

/// Border of one 8-connected foreground component.
///
/// `points` is the outer border as traced by Moore-neighbour following:
/// consecutive points are 8-adjacent and the walk is closed. A pixel may
/// appear more than once where the component is one pixel thick. Borders of
/// enclosed background regions are traced separately into `holes`; they do
/// not influence any of the box geometry downstream.
struct Contour {
    std::vector<PixelPoint> points;
    std::vector<std::vector<PixelPoint>> holes;
    std::size_t area = 0;  // pixel count of the component

    /// Distinct pixels over the outer border and every hole border, sorted.
    std::vector<PixelPoint> boundary_pixels() const;
};

/// Minimum-area rectangle. Canonical form: width >= height, angle is the
/// direction of the width side in [0, pi); squares use [0, pi/2).
struct RotatedBox {
    Point center;
    double width = 0.0;
    double height = 0.0;
    double angle = 0.0;

    double area() const noexcept { return width * height; }
    /// Vertices in no particular order.
    std::vector<Point> vertices() const;
};

struct OrderedCorners {
    Point tl;
    Point tr;
    Point br;
    Point bl;
};

inline constexpr double kDefaultMinArea = 25.0;

/// One contour per 8-connected component holding at least `min_area` pixels,
/// ordered by the component's leftmost column, then the topmost pixel in it.
std::vector<Contour> find_contours(const BinaryMask& mask, double min_area = kDefaultMinArea);

/// Counter-clockwise (in a y-up frame) hull without collinear vertices.
std::vector<Point> convex_hull(std::span<const Point> points);

RotatedBox min_area_rect(std::span<const Point> points);
RotatedBox min_area_rect(const Contour& contour);

/// Clockwise on screen from the vertex with minimal x+y (ties: smaller y, then smaller x).
OrderedCorners order_corners(const RotatedBox& box);

Point box_center(const OrderedCorners& corners);
Point midpoint(const Point& p, const Point& q);
double euclidean(const Point& p, const Point& q);

}  // namespace distrace
