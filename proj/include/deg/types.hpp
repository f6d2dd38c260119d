#pragma once

#include <cstdint>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "deg/geometry.hpp"

namespace deg {

constexpr double kMinScale = 1e-6;
constexpr double kMaxScale = 1e3;

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// One splat. Attributes are stored in unconstrained form (log-scales,
/// opacity logit, unit quaternion) so an optimizer can update them freely.
struct GaussianPrimitive {
    Vec3 center;
    Vec3 log_scale;            // per-axis log standard deviation, world units
    Vec4 rotation{1, 0, 0, 0}; // unit quaternion (w, x, y, z)
    double opacity_logit = 0.0;
    Vec3 color;                // RGB in [0,1]

    double opacity() const { return logistic(opacity_logit); }

    // World-space standard deviation per axis, clamped to [kMinScale, kMaxScale].
    Vec3 scale() const {
        auto clamp = [](double v) { return std::min(kMaxScale, std::max(kMinScale, v)); };
        return {clamp(std::exp(log_scale.x)), clamp(std::exp(log_scale.y)), clamp(std::exp(log_scale.z))};
    }

    void normalize_rotation() { rotation = normalized(rotation); }
};

struct Camera {
    Vec3 position;
    Mat3 rotation = Mat3::identity(); // world-to-camera, orthonormal
    double focal = 100.0;             // pixels
    int width = 64;
    int height = 64;
    double near = 0.1;                // world units

    void validate() const {
        if (focal <= 0.0) throw std::invalid_argument("Camera: focal must be positive");
        if (near <= 0.0) throw std::invalid_argument("Camera: near must be positive");
        if (width <= 0 || height <= 0) throw std::invalid_argument("Camera: degenerate image size");
        if (rotation.orthonormality_error() > 1e-9)
            throw std::invalid_argument("Camera: rotation is not orthonormal");
    }

    // Camera-frame coordinates of a world point; z is the depth.
    Vec3 to_camera(const Vec3& p) const { return rotation.apply(p - position); }
};

struct Scene {
    std::vector<GaussianPrimitive> primitives;
    Vec3 background;
    // Optional grouping of primitives by source anchor, primitive index -> anchor index.
    std::unordered_map<std::size_t, std::size_t> anchor_of;

    std::size_t size() const { return primitives.size(); }
};

struct Image {
    int width = 0;
    int height = 0;
    std::vector<double> pixels; // H*W*3, row-major, RGB

    Image() = default;
    Image(int w, int h) : width(w), height(h), pixels(static_cast<size_t>(w) * h * 3, 0.0) {}
    Image(int w, int h, const Vec3& fill) : Image(w, h) {
        for (int i = 0; i < w * h; ++i) {
            pixels[static_cast<size_t>(i) * 3 + 0] = fill.x;
            pixels[static_cast<size_t>(i) * 3 + 1] = fill.y;
            pixels[static_cast<size_t>(i) * 3 + 2] = fill.z;
        }
    }

    double& at(int x, int y, int c) { return pixels[(static_cast<size_t>(y) * width + x) * 3 + c]; }
    double at(int x, int y, int c) const { return pixels[(static_cast<size_t>(y) * width + x) * 3 + c]; }
    std::size_t value_count() const { return pixels.size(); }

    bool all_finite() const {
        for (double v : pixels)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

/// A primitive projected into one camera: 2D mean in pixel coordinates,
/// regularized 2D covariance, camera-frame depth.
struct Splat2D {
    Vec2 mean2d;
    Mat2Sym cov2d;
    double depth = 0.0;
    Vec3 color;
    double opacity = 0.0;
};

}  // namespace deg
