#include "deg/projection.hpp"

namespace deg {

namespace {

// World-space covariance factor A = R * diag(s), so that Sigma = A A^T.
Mat3 covariance_factor(const GaussianPrimitive& g) {
    const Mat3 r = quat_to_rotation(g.rotation);
    const Vec3 s = g.scale();
    Mat3 a = r;
    for (int i = 0; i < 3; ++i) {
        a(i, 0) *= s.x;
        a(i, 1) *= s.y;
        a(i, 2) *= s.z;
    }
    return a;
}

// Perspective Jacobian at a camera-frame point t (2x3, rows u and v).
void projection_jacobian(double focal, const Vec3& t, double j[2][3]) {
    const double iz = 1.0 / t.z;
    const double iz2 = iz * iz;
    j[0][0] = focal * iz;
    j[0][1] = 0.0;
    j[0][2] = -focal * t.x * iz2;
    j[1][0] = 0.0;
    j[1][1] = focal * iz;
    j[1][2] = -focal * t.y * iz2;
}

}  // namespace

std::optional<Splat2D> project_gaussian(const GaussianPrimitive& g, const Camera& cam) {
    const Vec3 t = cam.to_camera(g.center);
    if (t.z <= cam.near) return std::nullopt;

    Splat2D s;
    s.depth = t.z;
    s.mean2d = {cam.focal * t.x / t.z + 0.5 * cam.width,
                cam.focal * t.y / t.z + 0.5 * cam.height};

    const Mat3 a = covariance_factor(g);
    const Mat3 sigma = a * a.transposed();
    const Mat3 m = cam.rotation * sigma * cam.rotation.transposed();

    double j[2][3];
    projection_jacobian(cam.focal, t, j);

    // cov2d = J M J^T + dilation * I
    double jm[2][3];
    for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 3; ++c)
            jm[r][c] = j[r][0] * m(0, c) + j[r][1] * m(1, c) + j[r][2] * m(2, c);
    s.cov2d.xx = jm[0][0] * j[0][0] + jm[0][1] * j[0][1] + jm[0][2] * j[0][2] + kCovDilation;
    s.cov2d.xy = jm[0][0] * j[1][0] + jm[0][1] * j[1][1] + jm[0][2] * j[1][2];
    s.cov2d.yy = jm[1][0] * j[1][0] + jm[1][1] * j[1][1] + jm[1][2] * j[1][2] + kCovDilation;

    s.color = g.color;
    s.opacity = g.opacity();
    return s;
}

double alpha_at(const Splat2D& splat, const Vec2& pixel) {
    const Vec2 d = pixel - splat.mean2d;
    const Vec2 cd = splat.cov2d.inverse().apply(d);
    const double power = -0.5 * d.dot(cd);
    if (power > 0.0) return 0.0;  // numerical guard; power is <= 0 for SPD cov
    return std::min(0.999, splat.opacity * std::exp(power));
}

ProjectionGrads project_gaussian_backward(const GaussianPrimitive& g, const Camera& cam,
                                          const Vec2& d_mean2d, const Mat2Sym& d_cov2d) {
    ProjectionGrads out;
    const Vec3 t = cam.to_camera(g.center);
    if (t.z <= cam.near) return out;

    const Mat3 a = covariance_factor(g);
    const Mat3 sigma = a * a.transposed();
    const Mat3 m = cam.rotation * sigma * cam.rotation.transposed();

    double j[2][3];
    projection_jacobian(cam.focal, t, j);

    // d_mean2d -> d_t through the perspective projection.
    Vec3 d_t{j[0][0] * d_mean2d.x + j[1][0] * d_mean2d.y,
             j[0][1] * d_mean2d.x + j[1][1] * d_mean2d.y,
             j[0][2] * d_mean2d.x + j[1][2] * d_mean2d.y};

    // cov2d = J M J^T: d_J = (G + G^T) J M with G the 2x2 upstream gradient,
    // d_M = J^T G J. d_cov2d is symmetric, so G + G^T = 2 G off the diagonal
    // is already folded into the Mat2Sym storage; expand explicitly.
    const double gfull[2][2] = {{d_cov2d.xx, d_cov2d.xy}, {d_cov2d.xy, d_cov2d.yy}};

    double jm[2][3];
    for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 3; ++c)
            jm[r][c] = j[r][0] * m(0, c) + j[r][1] * m(1, c) + j[r][2] * m(2, c);

    double d_j[2][3];
    for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 3; ++c)
            d_j[r][c] = 2.0 * (gfull[r][0] * jm[0][c] + gfull[r][1] * jm[1][c]);

    // J depends on t; contract d_J against dJ/dt.
    const double f = cam.focal;
    const double iz = 1.0 / t.z, iz2 = iz * iz, iz3 = iz2 * iz;
    d_t.x += d_j[0][2] * (-f * iz2);
    d_t.y += d_j[1][2] * (-f * iz2);
    d_t.z += d_j[0][0] * (-f * iz2) + d_j[1][1] * (-f * iz2) +
             d_j[0][2] * (2.0 * f * t.x * iz3) + d_j[1][2] * (2.0 * f * t.y * iz3);

    out.d_center = cam.rotation.apply_transposed(d_t);

    // d_M = J^T G J (3x3 symmetric).
    Mat3 d_m;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c)
            d_m(r, c) = j[0][r] * (gfull[0][0] * j[0][c] + gfull[0][1] * j[1][c]) +
                        j[1][r] * (gfull[1][0] * j[0][c] + gfull[1][1] * j[1][c]);

    // M = W Sigma W^T -> d_Sigma = W^T d_M W.
    const Mat3 d_sigma = cam.rotation.transposed() * d_m * cam.rotation;

    // Sigma = A A^T -> d_A = (d_Sigma + d_Sigma^T) A = 2 d_Sigma A (symmetric).
    const Mat3 d_a = (d_sigma + d_sigma.transposed()) * a;

    // A = R diag(s): column j of A is s_j * column j of R.
    const Mat3 r = quat_to_rotation(g.rotation);
    const Vec3 s = g.scale();
    Mat3 d_r;
    Vec3 d_s;
    for (int i = 0; i < 3; ++i) {
        d_r(i, 0) = d_a(i, 0) * s.x;
        d_r(i, 1) = d_a(i, 1) * s.y;
        d_r(i, 2) = d_a(i, 2) * s.z;
        d_s.x += d_a(i, 0) * r(i, 0);
        d_s.y += d_a(i, 1) * r(i, 1);
        d_s.z += d_a(i, 2) * r(i, 2);
    }

    // s = clamp(exp(log_scale)); gradient is zero where the clamp is active.
    auto scale_grad = [](double s_val, double d) {
        return (s_val <= kMinScale || s_val >= kMaxScale) ? 0.0 : d * s_val;
    };
    out.d_log_scale = {scale_grad(s.x, d_s.x), scale_grad(s.y, d_s.y), scale_grad(s.z, d_s.z)};
    out.d_rotation = quat_rotation_backward(g.rotation, d_r);
    return out;
}

}  // namespace deg
