#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "gvg/common.hpp"

namespace gvg {

struct Point {
    double x = 0.0;
    double y = 0.0;
};

enum class PredictionMode { Point, BBox };

inline std::string to_string(PredictionMode m) {
    return m == PredictionMode::Point ? "point" : "bbox";
}

// Axis-aligned box in continuous pixel coordinates. Valid boxes have
// x1 < x2 and y1 < y2; parsers may construct unvalidated instances, so
// validity is checked explicitly where it matters.
struct BBox {
    double x1 = 0.0;
    double y1 = 0.0;
    double x2 = 0.0;
    double y2 = 0.0;

    bool valid() const {
        return std::isfinite(x1) && std::isfinite(y1) && std::isfinite(x2) &&
               std::isfinite(y2) && x1 < x2 && y1 < y2;
    }

    void require_valid(const char* what = "bbox") const {
        check(valid(), std::string(what) + " is not a valid box (needs finite x1<x2, y1<y2)");
    }

    double width() const { return x2 - x1; }
    double height() const { return y2 - y1; }
    double area() const { return width() * height(); }
    Point center() const { return {(x1 + x2) / 2.0, (y1 + y2) / 2.0}; }

    // Boundary inclusive on all four edges.
    bool contains(Point p) const {
        return p.x >= x1 && p.x <= x2 && p.y >= y1 && p.y <= y2;
    }

    bool operator==(const BBox&) const = default;
};

// Intersection-over-union. Boxes that are disjoint or touch only along an
// edge score 0.
inline double iou(const BBox& a, const BBox& b) {
    a.require_valid("first box");
    b.require_valid("second box");
    const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
    const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
    if (iw <= 0.0 || ih <= 0.0) return 0.0;
    const double inter = iw * ih;
    return inter / (a.area() + b.area() - inter);
}

inline double euclidean_distance(Point a, Point b) {
    const double dx = a.x - b.x;
    const double dy = a.y - b.y;
    return std::sqrt(dx * dx + dy * dy);
}

} // namespace gvg
