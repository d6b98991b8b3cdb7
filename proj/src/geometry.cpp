#include "distrace/geometry.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>

#include "distrace/error.hpp"

namespace distrace {

namespace {

// Moore neighbourhood, clockwise on screen starting east.
constexpr std::array<PixelPoint, 8> kRing = {{
    {1, 0}, {1, 1}, {0, 1}, {-1, 1}, {-1, 0}, {-1, -1}, {0, -1}, {1, -1},
}};

int ring_index(PixelPoint from, PixelPoint to)
{
    const PixelPoint d{to.x - from.x, to.y - from.y};
    for (int i = 0; i < 8; ++i) {
        if (kRing[std::size_t(i)] == d) {
            return i;
        }
    }
    return -1;
}

class Labels {
public:
    Labels(std::int32_t width, std::int32_t height)
        : width_(width), height_(height), labels_(std::size_t(width) * std::size_t(height), 0)
    {
    }

    bool inside(std::int32_t x, std::int32_t y) const { return x >= 0 && y >= 0 && x < width_ && y < height_; }
    std::int32_t get(std::int32_t x, std::int32_t y) const
    {
        return inside(x, y) ? labels_[std::size_t(y) * std::size_t(width_) + std::size_t(x)] : 0;
    }
    void put(std::int32_t x, std::int32_t y, std::int32_t label)
    {
        labels_[std::size_t(y) * std::size_t(width_) + std::size_t(x)] = label;
    }

private:
    std::int32_t width_;
    std::int32_t height_;
    std::vector<std::int32_t> labels_;
};

struct Component {
    std::int32_t label = 0;
    PixelPoint raster_first;  // minimal y, then minimal x
    PixelPoint leftmost;      // minimal x, then minimal y
    std::int32_t min_x = 0, min_y = 0, max_x = 0, max_y = 0;
    std::size_t area = 0;
};

// Moore-neighbour border following. `start` belongs to the component and
// `backtrack` is a background neighbour of it; the walk keeps the 4-connected
// background region containing `backtrack` on its outside and stops when it
// is about to repeat its first move.
std::vector<PixelPoint> trace_border(const Labels& labels, std::int32_t label, PixelPoint start, PixelPoint backtrack,
                                     std::size_t max_steps)
{
    auto step = [&](PixelPoint cur, PixelPoint back, PixelPoint& next, PixelPoint& next_back) {
        const int d = ring_index(cur, back);
        for (int k = 1; k <= 8; ++k) {
            const auto& o = kRing[std::size_t((d + k) % 8)];
            const PixelPoint q{cur.x + o.x, cur.y + o.y};
            if (labels.get(q.x, q.y) == label) {
                const auto& b = kRing[std::size_t((d + k - 1) % 8)];
                next = q;
                next_back = {cur.x + b.x, cur.y + b.y};
                return true;
            }
        }
        return false;
    };

    std::vector<PixelPoint> points{start};
    PixelPoint first_next;
    PixelPoint back;
    if (!step(start, backtrack, first_next, back)) {
        return points;  // isolated pixel
    }
    PixelPoint cur = first_next;
    for (std::size_t guard = 0; guard < max_steps; ++guard) {
        PixelPoint next;
        PixelPoint next_back;
        step(cur, back, next, next_back);
        if (cur == start && next == first_next) {
            break;
        }
        points.push_back(cur);
        cur = next;
        back = next_back;
    }
    return points;
}

std::vector<std::vector<PixelPoint>> trace_holes(const Labels& labels, const Component& c)
{
    // Local grid over the bounding box plus a one-pixel frame of background.
    const std::int32_t gw = c.max_x - c.min_x + 3;
    const std::int32_t gh = c.max_y - c.min_y + 3;
    auto owned = [&](std::int32_t gx, std::int32_t gy) {
        return labels.get(gx + c.min_x - 1, gy + c.min_y - 1) == c.label;
    };
    // 0 = unvisited background, 1 = component, 2 = outside background, 3+ = hole id
    std::vector<std::int32_t> grid(std::size_t(gw) * std::size_t(gh), 0);
    auto cell = [&](std::int32_t gx, std::int32_t gy) -> std::int32_t& {
        return grid[std::size_t(gy) * std::size_t(gw) + std::size_t(gx)];
    };
    for (std::int32_t gy = 0; gy < gh; ++gy) {
        for (std::int32_t gx = 0; gx < gw; ++gx) {
            if (owned(gx, gy)) {
                cell(gx, gy) = 1;
            }
        }
    }

    std::vector<PixelPoint> stack;
    auto flood = [&](PixelPoint seed, std::int32_t mark) {
        stack.assign(1, seed);
        cell(seed.x, seed.y) = mark;
        while (!stack.empty()) {
            const PixelPoint p = stack.back();
            stack.pop_back();
            constexpr std::array<PixelPoint, 4> four = {{{1, 0}, {-1, 0}, {0, 1}, {0, -1}}};
            for (const auto& o : four) {
                const PixelPoint q{p.x + o.x, p.y + o.y};
                if (q.x >= 0 && q.y >= 0 && q.x < gw && q.y < gh && cell(q.x, q.y) == 0) {
                    cell(q.x, q.y) = mark;
                    stack.push_back(q);
                }
            }
        }
    };
    flood({0, 0}, 2);

    std::vector<std::vector<PixelPoint>> holes;
    std::int32_t next_mark = 3;
    for (std::int32_t gy = 0; gy < gh; ++gy) {
        for (std::int32_t gx = 0; gx < gw; ++gx) {
            if (cell(gx, gy) != 0) {
                continue;
            }
            // Raster-first pixel of a new hole: its left neighbour is on the component.
            flood({gx, gy}, next_mark++);
            const PixelPoint hole{gx + c.min_x - 1, gy + c.min_y - 1};
            const PixelPoint start{hole.x - 1, hole.y};
            holes.push_back(trace_border(labels, c.label, start, hole, 4 * c.area + 8));
        }
    }
    return holes;
}

double cross(const Point& o, const Point& a, const Point& b)
{
    return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

double dot(const Point& a, const Point& b)
{
    return a.x * b.x + a.y * b.y;
}

RotatedBox canonical(Point center, double width, double height, double angle)
{
    constexpr double pi = std::numbers::pi;
    if (height > width) {
        std::swap(width, height);
        angle += pi / 2.0;
    }
    const bool square = width - height <= 1e-12 * std::max(width, 1.0);
    const double period = square ? pi / 2.0 : pi;
    angle = std::fmod(angle, period);
    if (angle < 0.0) {
        angle += period;
    }
    if (angle >= period || period - angle < 1e-15) {
        angle = 0.0;
    }
    return RotatedBox{center, width, height, angle};
}

}  // namespace

std::vector<PixelPoint> Contour::boundary_pixels() const
{
    std::vector<PixelPoint> out = points;
    for (const auto& hole : holes) {
        out.insert(out.end(), hole.begin(), hole.end());
    }
    std::sort(out.begin(), out.end(), [](const PixelPoint& a, const PixelPoint& b) {
        return a.y != b.y ? a.y < b.y : a.x < b.x;
    });
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

std::vector<Point> RotatedBox::vertices() const
{
    const Point u{std::cos(angle) * width / 2.0, std::sin(angle) * width / 2.0};
    const Point v{-std::sin(angle) * height / 2.0, std::cos(angle) * height / 2.0};
    return {
        {center.x - u.x - v.x, center.y - u.y - v.y},
        {center.x + u.x - v.x, center.y + u.y - v.y},
        {center.x + u.x + v.x, center.y + u.y + v.y},
        {center.x - u.x + v.x, center.y - u.y + v.y},
    };
}

std::vector<Contour> find_contours(const BinaryMask& mask, double min_area)
{
    if (!(min_area >= 0.0)) {
        throw Error(ErrorCode::InvalidArgument, "min_area must be non-negative");
    }
    const auto w = std::int32_t(mask.width());
    const auto h = std::int32_t(mask.height());
    Labels labels(w, h);
    std::vector<Component> components;
    std::vector<PixelPoint> stack;

    for (std::int32_t y = 0; y < h; ++y) {
        for (std::int32_t x = 0; x < w; ++x) {
            if (!mask.at(std::uint32_t(x), std::uint32_t(y)) || labels.get(x, y) != 0) {
                continue;
            }
            Component c;
            c.label = std::int32_t(components.size()) + 1;
            c.raster_first = {x, y};
            c.leftmost = {x, y};
            c.min_x = c.max_x = x;
            c.min_y = c.max_y = y;
            labels.put(x, y, c.label);
            stack.assign(1, {x, y});
            while (!stack.empty()) {
                const PixelPoint p = stack.back();
                stack.pop_back();
                ++c.area;
                c.min_x = std::min(c.min_x, p.x);
                c.max_x = std::max(c.max_x, p.x);
                c.min_y = std::min(c.min_y, p.y);
                c.max_y = std::max(c.max_y, p.y);
                if (p.x < c.leftmost.x || (p.x == c.leftmost.x && p.y < c.leftmost.y)) {
                    c.leftmost = p;
                }
                for (const auto& o : kRing) {
                    const PixelPoint q{p.x + o.x, p.y + o.y};
                    if (labels.inside(q.x, q.y) && labels.get(q.x, q.y) == 0 &&
                        mask.at(std::uint32_t(q.x), std::uint32_t(q.y))) {
                        labels.put(q.x, q.y, c.label);
                        stack.push_back(q);
                    }
                }
            }
            components.push_back(c);
        }
    }

    std::erase_if(components, [min_area](const Component& c) { return double(c.area) < min_area; });
    std::stable_sort(components.begin(), components.end(), [](const Component& a, const Component& b) {
        return a.leftmost.x != b.leftmost.x ? a.leftmost.x < b.leftmost.x : a.leftmost.y < b.leftmost.y;
    });

    std::vector<Contour> contours;
    contours.reserve(components.size());
    for (const auto& c : components) {
        Contour contour;
        contour.area = c.area;
        const PixelPoint start = c.raster_first;
        contour.points = trace_border(labels, c.label, start, {start.x - 1, start.y}, 4 * c.area + 8);
        contour.holes = trace_holes(labels, c);
        contours.push_back(std::move(contour));
    }
    return contours;
}

std::vector<Point> convex_hull(std::span<const Point> points)
{
    if (points.empty()) {
        throw Error(ErrorCode::EmptyInput, "convex hull of an empty point set");
    }
    std::vector<Point> pts(points.begin(), points.end());
    std::sort(pts.begin(), pts.end(), [](const Point& a, const Point& b) {
        return a.x != b.x ? a.x < b.x : a.y < b.y;
    });
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    if (pts.size() < 3) {
        return pts;
    }
    // Andrew's monotone chain; popping on cross <= 0 drops collinear vertices.
    std::vector<Point> hull(2 * pts.size());
    std::size_t k = 0;
    for (const auto& p : pts) {
        while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0.0) {
            --k;
        }
        hull[k++] = p;
    }
    const std::size_t lower = k + 1;
    for (auto it = pts.rbegin() + 1; it != pts.rend(); ++it) {
        while (k >= lower && cross(hull[k - 2], hull[k - 1], *it) <= 0.0) {
            --k;
        }
        hull[k++] = *it;
    }
    hull.resize(k - 1);
    return hull;
}

RotatedBox min_area_rect(std::span<const Point> points)
{
    if (points.empty()) {
        throw Error(ErrorCode::EmptyInput, "bounding box of an empty point set");
    }
    for (const auto& p : points) {
        if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
            throw Error(ErrorCode::InvalidArgument, "non-finite point");
        }
    }
    const auto hull = convex_hull(points);
    const std::size_t m = hull.size();
    if (m == 1) {
        return RotatedBox{hull[0], 0.0, 0.0, 0.0};
    }
    if (m == 2) {
        const double dx = hull[1].x - hull[0].x;
        const double dy = hull[1].y - hull[0].y;
        return canonical(midpoint(hull[0], hull[1]), std::hypot(dx, dy), 0.0, std::atan2(dy, dx));
    }

    auto edge_dir = [&](std::size_t i) {
        const Point& a = hull[i];
        const Point& b = hull[(i + 1) % m];
        const double len = std::hypot(b.x - a.x, b.y - a.y);
        return Point{(b.x - a.x) / len, (b.y - a.y) / len};
    };
    // Projections along a rotating axis are unimodal over a convex polygon,
    // so each extreme vertex only ever moves forward.
    auto advance = [&](std::size_t& idx, const Point& axis, bool maximise) {
        for (std::size_t guard = 0; guard < m; ++guard) {
            const double here = dot(axis, hull[idx]);
            const double there = dot(axis, hull[(idx + 1) % m]);
            if (maximise ? there < here : there > here) {
                break;
            }
            idx = (idx + 1) % m;
        }
    };

    // Rotating calipers: for each hull edge track the vertices extreme along
    // the edge direction (both ends) and along its inward normal.
    std::size_t far_e = 0;
    std::size_t near_e = 0;
    std::size_t far_n = 0;
    {
        const Point e = edge_dir(0);
        const Point n{-e.y, e.x};
        for (std::size_t j = 1; j < m; ++j) {
            if (dot(e, hull[j]) > dot(e, hull[far_e])) {
                far_e = j;
            }
            if (dot(e, hull[j]) < dot(e, hull[near_e])) {
                near_e = j;
            }
            if (dot(n, hull[j]) > dot(n, hull[far_n])) {
                far_n = j;
            }
        }
    }

    double best_area = std::numeric_limits<double>::infinity();
    RotatedBox best;
    for (std::size_t i = 0; i < m; ++i) {
        const Point e = edge_dir(i);
        const Point n{-e.y, e.x};
        advance(far_e, e, true);
        advance(near_e, e, false);
        advance(far_n, n, true);
        const double e_hi = dot(e, hull[far_e]);
        const double e_lo = dot(e, hull[near_e]);
        const double n_lo = dot(n, hull[i]);
        const double n_hi = dot(n, hull[far_n]);
        const double width = e_hi - e_lo;
        const double height = n_hi - n_lo;
        const double area = width * height;
        if (area < best_area) {
            best_area = area;
            const double ce = (e_hi + e_lo) / 2.0;
            const double cn = (n_hi + n_lo) / 2.0;
            best = RotatedBox{{e.x * ce + n.x * cn, e.y * ce + n.y * cn}, width, height, std::atan2(e.y, e.x)};
        }
    }
    return canonical(best.center, best.width, best.height, best.angle);
}

RotatedBox min_area_rect(const Contour& contour)
{
    std::vector<Point> pts;
    pts.reserve(contour.points.size());
    for (const auto& p : contour.points) {
        pts.push_back({double(p.x), double(p.y)});
    }
    return min_area_rect(pts);
}

OrderedCorners order_corners(const RotatedBox& box)
{
    auto v = box.vertices();
    const Point c = box.center;
    // Ascending atan2 in a y-down frame walks clockwise on screen.
    std::sort(v.begin(), v.end(), [&](const Point& a, const Point& b) {
        return std::atan2(a.y - c.y, a.x - c.x) < std::atan2(b.y - c.y, b.x - c.x);
    });
    double scale = 1.0;
    for (const auto& p : v) {
        scale = std::max({scale, std::abs(p.x), std::abs(p.y)});
    }
    const double tie = 1e-9 * scale;
    std::size_t tl = 0;
    for (std::size_t i = 1; i < 4; ++i) {
        const double si = v[i].x + v[i].y;
        const double st = v[tl].x + v[tl].y;
        if (si < st - tie) {
            tl = i;
        } else if (std::abs(si - st) <= tie) {
            if (v[i].y < v[tl].y - tie || (std::abs(v[i].y - v[tl].y) <= tie && v[i].x < v[tl].x)) {
                tl = i;
            }
        }
    }
    return OrderedCorners{v[tl], v[(tl + 1) % 4], v[(tl + 2) % 4], v[(tl + 3) % 4]};
}

Point box_center(const OrderedCorners& corners)
{
    return {(corners.tl.x + corners.tr.x + corners.br.x + corners.bl.x) / 4.0,
            (corners.tl.y + corners.tr.y + corners.br.y + corners.bl.y) / 4.0};
}

Point midpoint(const Point& p, const Point& q)
{
    return {(p.x + q.x) / 2.0, (p.y + q.y) / 2.0};
}

double euclidean(const Point& p, const Point& q)
{
    return std::hypot(p.x - q.x, p.y - q.y);
}

}  // namespace distrace
