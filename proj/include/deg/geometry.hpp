#pragma once

#include <array>
#include <cmath>
#include <cstddef>

// Minimal fixed-size vector/matrix math. The rasterizer backward pass is
// hand-derived, so every operation here is kept explicit and branch-free.

namespace deg {

struct Vec2 {
    double x = 0.0, y = 0.0;

    Vec2() = default;
    Vec2(double x_, double y_) : x(x_), y(y_) {}

    Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    Vec2& operator+=(const Vec2& o) { x += o.x; y += o.y; return *this; }
    double dot(const Vec2& o) const { return x * o.x + y * o.y; }
};

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;

    Vec3() = default;
    Vec3(double x_, double y_, double z_) : x(x_), y(y_), z(z_) {}

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }
    Vec3& operator*=(double s) { x *= s; y *= s; z *= s; return *this; }
    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    double norm() const { return std::sqrt(x * x + y * y + z * z); }
    double squared_norm() const { return x * x + y * y + z * z; }
    double& operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }
    double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
};

inline Vec3 operator*(double s, const Vec3& v) { return v * s; }

struct Vec4 {
    double w = 0.0, x = 0.0, y = 0.0, z = 0.0;

    Vec4() = default;
    Vec4(double w_, double x_, double y_, double z_) : w(w_), x(x_), y(y_), z(z_) {}

    Vec4 operator+(const Vec4& o) const { return {w + o.w, x + o.x, y + o.y, z + o.z}; }
    Vec4 operator-(const Vec4& o) const { return {w - o.w, x - o.x, y - o.y, z - o.z}; }
    Vec4 operator*(double s) const { return {w * s, x * s, y * s, z * s}; }
    Vec4& operator+=(const Vec4& o) { w += o.w; x += o.x; y += o.y; z += o.z; return *this; }
    double dot(const Vec4& o) const { return w * o.w + x * o.x + y * o.y + z * o.z; }
    double norm() const { return std::sqrt(dot(*this)); }
    double& operator[](int i) { return i == 0 ? w : (i == 1 ? x : (i == 2 ? y : z)); }
    double operator[](int i) const { return i == 0 ? w : (i == 1 ? x : (i == 2 ? y : z)); }
};

// Symmetric 2x2 matrix stored as (xx, xy, yy).
struct Mat2Sym {
    double xx = 0.0, xy = 0.0, yy = 0.0;

    Mat2Sym() = default;
    Mat2Sym(double xx_, double xy_, double yy_) : xx(xx_), xy(xy_), yy(yy_) {}

    Mat2Sym operator+(const Mat2Sym& o) const { return {xx + o.xx, xy + o.xy, yy + o.yy}; }
    Mat2Sym operator*(double s) const { return {xx * s, xy * s, yy * s}; }
    Mat2Sym& operator+=(const Mat2Sym& o) { xx += o.xx; xy += o.xy; yy += o.yy; return *this; }

    double det() const { return xx * yy - xy * xy; }

    Mat2Sym inverse() const {
        const double d = det();
        return {yy / d, -xy / d, xx / d};
    }

    Vec2 apply(const Vec2& v) const { return {xx * v.x + xy * v.y, xy * v.x + yy * v.y}; }

    // Largest eigenvalue; used for conservative screen-space bounding radii.
    double max_eigenvalue() const {
        const double mid = 0.5 * (xx + yy);
        const double disc = std::sqrt(std::max(0.0, mid * mid - det()));
        return mid + disc;
    }
};

struct Mat3 {
    // Row-major.
    std::array<double, 9> m{};

    static Mat3 identity() {
        Mat3 r;
        r.m = {1, 0, 0, 0, 1, 0, 0, 0, 1};
        return r;
    }

    double& operator()(int r, int c) { return m[static_cast<size_t>(r) * 3 + c]; }
    double operator()(int r, int c) const { return m[static_cast<size_t>(r) * 3 + c]; }

    Vec3 apply(const Vec3& v) const {
        return {m[0] * v.x + m[1] * v.y + m[2] * v.z,
                m[3] * v.x + m[4] * v.y + m[5] * v.z,
                m[6] * v.x + m[7] * v.y + m[8] * v.z};
    }

    Vec3 apply_transposed(const Vec3& v) const {
        return {m[0] * v.x + m[3] * v.y + m[6] * v.z,
                m[1] * v.x + m[4] * v.y + m[7] * v.z,
                m[2] * v.x + m[5] * v.y + m[8] * v.z};
    }

    Mat3 operator*(const Mat3& o) const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                double s = 0.0;
                for (int k = 0; k < 3; ++k) s += (*this)(i, k) * o(k, j);
                r(i, j) = s;
            }
        return r;
    }

    Mat3 transposed() const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) r(i, j) = (*this)(j, i);
        return r;
    }

    Mat3 operator+(const Mat3& o) const {
        Mat3 r;
        for (int i = 0; i < 9; ++i) r.m[i] = m[i] + o.m[i];
        return r;
    }

    Mat3 operator*(double s) const {
        Mat3 r;
        for (int i = 0; i < 9; ++i) r.m[i] = m[i] * s;
        return r;
    }

    // max_ij |(A^T A - I)_ij|; 0 for orthonormal matrices.
    double orthonormality_error() const {
        const Mat3 g = transposed() * (*this);
        double e = 0.0;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                e = std::max(e, std::abs(g(i, j) - (i == j ? 1.0 : 0.0)));
        return e;
    }
};

inline Vec4 normalized(const Vec4& q) {
    const double n = q.norm();
    return q * (1.0 / n);
}

// Rotation matrix of a unit quaternion (w, x, y, z).
inline Mat3 quat_to_rotation(const Vec4& q) {
    const Vec4 u = normalized(q);
    const double w = u.w, x = u.x, y = u.y, z = u.z;
    Mat3 r;
    r.m = {1 - 2 * (y * y + z * z), 2 * (x * y - w * z),     2 * (x * z + w * y),
           2 * (x * y + w * z),     1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
           2 * (x * z - w * y),     2 * (y * z + w * x),     1 - 2 * (x * x + y * y)};
    return r;
}

// Pulls a gradient w.r.t. R(normalize(q)) back to the raw quaternion. The
// normalization projects the gradient onto the tangent space of the sphere.
inline Vec4 quat_rotation_backward(const Vec4& q, const Mat3& d_rot) {
    const double n = q.norm();
    const Vec4 u = q * (1.0 / n);
    const double w = u.w, x = u.x, y = u.y, z = u.z;

    // dR/d(unit quaternion component), contracted against d_rot.
    auto c = [&](int r, int cidx) { return d_rot(r, cidx); };
    Vec4 g;
    g.w = 2.0 * (-z * c(0, 1) + y * c(0, 2) + z * c(1, 0) - x * c(1, 2) - y * c(2, 0) + x * c(2, 1));
    g.x = 2.0 * (y * c(0, 1) + z * c(0, 2) + y * c(1, 0) - 2 * x * c(1, 1) - w * c(1, 2) + z * c(2, 0) + w * c(2, 1) - 2 * x * c(2, 2));
    g.y = 2.0 * (-2 * y * c(0, 0) + x * c(0, 1) + w * c(0, 2) + x * c(1, 0) + z * c(1, 2) - w * c(2, 0) + z * c(2, 1) - 2 * y * c(2, 2));
    g.z = 2.0 * (-2 * z * c(0, 0) - w * c(0, 1) + x * c(0, 2) + w * c(1, 0) - 2 * z * c(1, 1) + y * c(1, 2) + x * c(2, 0) + y * c(2, 1));

    const double gu = g.dot(u);
    return (g - u * gu) * (1.0 / n);
}

struct Aabb {
    Vec3 min{-1.0, -1.0, -1.0};
    Vec3 max{1.0, 1.0, 1.0};

    Vec3 extent() const { return max - min; }
    Vec3 center() const { return (min + max) * 0.5; }
    bool contains(const Vec3& p) const {
        return p.x >= min.x && p.x <= max.x && p.y >= min.y && p.y <= max.y && p.z >= min.z && p.z <= max.z;
    }
};

}  // namespace deg
