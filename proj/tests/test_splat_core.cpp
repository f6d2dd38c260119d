#include <doctest.h>

#include <array>
#include <cmath>

#include "deg/projection.hpp"
#include "deg/rng.hpp"
#include "test_helpers.hpp"

using namespace deg;

namespace {

// Dense-matrix oracle for the projected covariance: plain array math and its
// own quaternion conversion, no shared code with the library path.
std::array<std::array<double, 2>, 2> cov2d_oracle(const GaussianPrimitive& g, const Camera& cam) {
    const Vec4 q = normalized(g.rotation);
    const double w = q.w, x = q.x, y = q.y, z = q.z;
    double rot[3][3] = {{1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)},
                        {2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)},
                        {2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)}};
    const Vec3 s = g.scale();
    const double sd[3] = {s.x, s.y, s.z};
    double sigma[3][3];
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            sigma[i][j] = 0.0;
            for (int k = 0; k < 3; ++k) sigma[i][j] += rot[i][k] * sd[k] * sd[k] * rot[j][k];
        }
    double m[3][3];
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            m[i][j] = 0.0;
            for (int a = 0; a < 3; ++a)
                for (int b = 0; b < 3; ++b) m[i][j] += cam.rotation(i, a) * sigma[a][b] * cam.rotation(j, b);
        }
    const Vec3 t = cam.to_camera(g.center);
    const double f = cam.focal;
    double jac[2][3] = {{f / t.z, 0, -f * t.x / (t.z * t.z)}, {0, f / t.z, -f * t.y / (t.z * t.z)}};
    std::array<std::array<double, 2>, 2> cov{};
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j)
            for (int a = 0; a < 3; ++a)
                for (int b = 0; b < 3; ++b) cov[i][j] += jac[i][a] * m[a][b] * jac[j][b];
    cov[0][0] += kCovDilation;
    cov[1][1] += kCovDilation;
    return cov;
}

Camera random_camera(Rng& rng, int size) {
    Camera cam = test::test_camera(size);
    cam.position = {rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), rng.uniform(-0.5, 0.5)};
    // Random small rotation from a quaternion keeps the scene in frame.
    const Vec4 q = normalized(Vec4{1.0, 0.15 * rng.normal(), 0.15 * rng.normal(), 0.15 * rng.normal()});
    cam.rotation = quat_to_rotation(q);
    return cam;
}

}  // namespace

TEST_CASE("projection: on-axis isotropic splat lands at the image center") {
    GaussianPrimitive g;
    const double sigma = 0.2;
    g.center = {0, 0, 2};
    g.log_scale = {std::log(sigma), std::log(sigma), std::log(sigma)};
    const Camera cam = test::test_camera(32);

    const auto splat = project_gaussian(g, cam);
    REQUIRE(splat.has_value());
    CHECK(splat->mean2d.x == doctest::Approx(16.0).epsilon(1e-12));
    CHECK(splat->mean2d.y == doctest::Approx(16.0).epsilon(1e-12));
    CHECK(splat->depth == doctest::Approx(2.0));
    const double expected = std::pow(cam.focal * sigma / 2.0, 2);
    CHECK(splat->cov2d.xx == doctest::Approx(expected + kCovDilation).epsilon(1e-12));
    CHECK(splat->cov2d.yy == doctest::Approx(expected + kCovDilation).epsilon(1e-12));
    CHECK(splat->cov2d.xy == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("projection: primitives behind the camera are culled") {
    GaussianPrimitive g;
    g.center = {0, 0, -1};
    CHECK_FALSE(project_gaussian(g, test::test_camera()).has_value());
    g.center = {0, 0, 0.05};  // in front but inside the near plane
    CHECK_FALSE(project_gaussian(g, test::test_camera()).has_value());
}

TEST_CASE("projection: cov2d matches the dense-matrix oracle") {
    Rng rng(41);
    for (int trial = 0; trial < 50; ++trial) {
        const Camera cam = random_camera(rng, 32);
        Scene scene = test::random_scene(rng, 1);
        const GaussianPrimitive& g = scene.primitives[0];
        const auto splat = project_gaussian(g, cam);
        if (!splat) continue;
        const auto oracle = cov2d_oracle(g, cam);
        CHECK(splat->cov2d.xx == doctest::Approx(oracle[0][0]).epsilon(1e-9));
        CHECK(splat->cov2d.xy == doctest::Approx(oracle[0][1]).epsilon(1e-9));
        CHECK(splat->cov2d.yy == doctest::Approx(oracle[1][1]).epsilon(1e-9));
    }
}

TEST_CASE("alpha_at: zero Mahalanobis distance returns the opacity") {
    Splat2D s;
    s.mean2d = {7.5, 9.0};
    s.cov2d = {4.0, 0.3, 2.0};
    s.opacity = 0.8;
    CHECK(alpha_at(s, s.mean2d) == doctest::Approx(0.8).epsilon(1e-12));

    s.opacity = 0.0;
    CHECK(alpha_at(s, s.mean2d) == 0.0);
    CHECK(alpha_at(s, {0.0, 0.0}) == 0.0);
}

TEST_CASE("alpha_at: clamped at 0.999 for extreme opacity") {
    GaussianPrimitive g;
    g.center = {0, 0, 2};
    g.log_scale = {std::log(0.2), std::log(0.2), std::log(0.2)};
    g.opacity_logit = 20.0;
    const auto splat = project_gaussian(g, test::test_camera());
    REQUIRE(splat.has_value());
    CHECK(alpha_at(*splat, splat->mean2d) == doctest::Approx(0.999));
    CHECK(alpha_at(*splat, splat->mean2d) <= 0.999);
}

TEST_CASE("alpha_at: maximized at the projected mean") {
    Rng rng(17);
    for (int trial = 0; trial < 20; ++trial) {
        Scene scene = test::random_scene(rng, 1);
        const auto splat = project_gaussian(scene.primitives[0], test::test_camera());
        REQUIRE(splat.has_value());
        const double peak = alpha_at(*splat, splat->mean2d);
        for (int gx = -4; gx <= 4; ++gx)
            for (int gy = -4; gy <= 4; ++gy) {
                const Vec2 p{splat->mean2d.x + 0.7 * gx, splat->mean2d.y + 0.7 * gy};
                CHECK(alpha_at(*splat, p) <= peak + 1e-15);
            }
    }
}

TEST_CASE("quaternion rotations are orthonormal") {
    Rng rng(3);
    for (int i = 0; i < 1000; ++i) {
        const Vec4 q = normalized(Vec4{rng.normal(), rng.normal(), rng.normal(), rng.normal()});
        CHECK(quat_to_rotation(q).orthonormality_error() < 1e-9);
    }
}

TEST_CASE("depth ordering is invariant under color changes") {
    Rng rng(23);
    Scene scene = test::random_scene(rng, 12);
    const Camera cam = test::test_camera();
    const RenderOutput a = render(scene, cam);
    for (auto& g : scene.primitives) g.color = {rng.uniform(), rng.uniform(), rng.uniform()};
    const RenderOutput b = render(scene, cam);
    CHECK(a.sorted_order == b.sorted_order);
}

TEST_CASE("quaternion gradient matches finite differences") {
    Rng rng(99);
    for (int trial = 0; trial < 10; ++trial) {
        Vec4 q{rng.normal(), rng.normal(), rng.normal(), rng.normal()};
        if (q.norm() < 0.1) continue;
        Mat3 upstream;
        for (int i = 0; i < 9; ++i) upstream.m[static_cast<size_t>(i)] = rng.normal();
        const Vec4 analytic = quat_rotation_backward(q, upstream);
        for (int c = 0; c < 4; ++c) {
            auto f = [&]() {
                const Mat3 r = quat_to_rotation(q);
                double s = 0.0;
                for (int i = 0; i < 9; ++i) s += r.m[static_cast<size_t>(i)] * upstream.m[static_cast<size_t>(i)];
                return s;
            };
            const double fd = test::central_diff(f, q[c], 1e-6);
            CHECK(analytic[c] == doctest::Approx(fd).epsilon(1e-6));
        }
    }
}
