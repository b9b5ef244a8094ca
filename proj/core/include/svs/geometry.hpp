#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>

namespace svs {

// Synthetic scenes live on a fixed 720p plane.
inline constexpr double kFrameWidth = 1280.0;
inline constexpr double kFrameHeight = 720.0;
inline constexpr std::size_t kKeypointCount = 17;

struct BBox {
    double x = 0;  // top-left
    double y = 0;
    double w = 0;
    double h = 0;

    double area() const { return (w > 0 && h > 0) ? w * h : 0.0; }
    double cx() const { return x + w / 2; }
    double cy() const { return y + h / 2; }

    bool operator==(const BBox&) const = default;
};

struct Keypoint {
    double x = 0;
    double y = 0;
    double confidence = 0;

    bool operator==(const Keypoint&) const = default;
};

using KeypointSet = std::array<Keypoint, kKeypointCount>;

inline double iou(const BBox& a, const BBox& b) {
    const double ix = std::max(0.0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
    const double iy = std::max(0.0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
    const double inter = ix * iy;
    const double uni = a.area() + b.area() - inter;
    if (uni <= 0.0) return 0.0;  // zero-area boxes overlap nothing
    return inter / uni;
}

inline BBox clamp_to_frame(BBox b) {
    b.x = std::clamp(b.x, 0.0, kFrameWidth - 1.0);
    b.y = std::clamp(b.y, 0.0, kFrameHeight - 1.0);
    b.w = std::clamp(b.w, 0.0, kFrameWidth - b.x);
    b.h = std::clamp(b.h, 0.0, kFrameHeight - b.y);
    return b;
}

// Mean Euclidean displacement between two keypoint sets (same skeleton).
inline double mean_keypoint_displacement(const KeypointSet& a, const KeypointSet& b) {
    double sum = 0;
    for (std::size_t i = 0; i < kKeypointCount; ++i) {
        const double dx = a[i].x - b[i].x;
        const double dy = a[i].y - b[i].y;
        sum += std::sqrt(dx * dx + dy * dy);
    }
    return sum / static_cast<double>(kKeypointCount);
}

}  // namespace svs
