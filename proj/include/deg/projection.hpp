#pragma once

#include <optional>

#include "deg/types.hpp"

namespace deg {

// 2D covariance regularizer; added to the diagonal after projection (px^2).
constexpr double kCovDilation = 0.3;

/// EWA projection of one primitive. Returns nullopt when the center depth is
/// at or behind the near plane (the primitive is culled, not an error).
std::optional<Splat2D> project_gaussian(const GaussianPrimitive& g, const Camera& cam);

/// Blending weight of a projected splat at a pixel position, clamped to
/// [0, 0.999]. Values below 1/255 are the caller's responsibility to drop.
double alpha_at(const Splat2D& splat, const Vec2& pixel);

/// Gradient of project_gaussian: pulls (d_mean2d, d_cov2d, d_depth-free)
/// screen-space gradients back to the primitive's center/log_scale/rotation.
struct ProjectionGrads {
    Vec3 d_center;
    Vec3 d_log_scale;
    Vec4 d_rotation;
};

ProjectionGrads project_gaussian_backward(const GaussianPrimitive& g, const Camera& cam,
                                          const Vec2& d_mean2d, const Mat2Sym& d_cov2d);

}  // namespace deg
