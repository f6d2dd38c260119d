#include <doctest.h>

#include <cmath>

#include "deg/rasterizer.hpp"
#include "deg/rng.hpp"
#include "test_helpers.hpp"

using namespace deg;

TEST_CASE("render: empty scene is the background with full transmittance") {
    Scene scene;
    scene.background = {0.2, 0.5, 0.9};
    const Camera cam = test::test_camera(16);
    const RenderOutput out = render(scene, cam);
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x) {
            CHECK(out.image.at(x, y, 0) == 0.2);
            CHECK(out.image.at(x, y, 1) == 0.5);
            CHECK(out.image.at(x, y, 2) == 0.9);
        }
    for (double t : out.final_transmittance) CHECK(t == 1.0);
}

TEST_CASE("render: one opaque full-cover splat composites against the background") {
    Scene scene;
    scene.background = {1.0, 0.0, 0.5};
    GaussianPrimitive g;
    g.center = {0, 0, 2};
    g.log_scale = {std::log(3.0), std::log(3.0), std::log(3.0)};  // covers the frame
    g.opacity_logit = 30.0;                                       // alpha clamps at 0.999
    g.color = {0.1, 0.9, 0.4};
    scene.primitives.push_back(g);

    const Camera cam = test::test_camera(16);
    const RenderOutput out = render(scene, cam);
    const int cx = 8, cy = 8;
    for (int c = 0; c < 3; ++c) {
        const double expected = 0.999 * g.color[c] + 0.001 * scene.background[c];
        CHECK(out.image.at(cx, cy, c) == doctest::Approx(expected).epsilon(1e-9));
    }
}

TEST_CASE("render: matches the naive reference compositor") {
    Rng rng(202);
    RenderSettings settings;
    settings.early_stop = false;  // the reference walks every hit
    for (int trial = 0; trial < 8; ++trial) {
        const Scene scene = test::random_scene(rng, 10);
        const Camera cam = test::test_camera(32);
        const RenderOutput out = render(scene, cam, settings);
        const Image ref = test::reference_render(scene, cam, settings.alpha_cutoff);
        double max_dev = 0.0;
        for (std::size_t i = 0; i < ref.pixels.size(); ++i)
            max_dev = std::max(max_dev, std::abs(ref.pixels[i] - out.image.pixels[i]));
        CHECK(max_dev < 1e-12);
    }
}

TEST_CASE("render: recomposition from per-pixel hits is bit-exact") {
    Rng rng(7);
    const Scene scene = test::random_scene(rng, 15);
    const Camera cam = test::test_camera(32);
    const RenderOutput out = render(scene, cam);  // default settings, early stop on
    for (int y = 0; y < cam.height; ++y) {
        for (int x = 0; x < cam.width; ++x) {
            double t = 1.0;
            double rgb[3] = {0, 0, 0};
            for (const PixelHit& hit : out.hits_at(x, y)) {
                const Vec3& c = scene.primitives[hit.primitive].color;
                rgb[0] += t * hit.alpha * c.x;
                rgb[1] += t * hit.alpha * c.y;
                rgb[2] += t * hit.alpha * c.z;
                t *= 1.0 - hit.alpha;
            }
            for (int c = 0; c < 3; ++c) {
                const double v = rgb[c] + t * scene.background[c];
                CHECK(out.image.at(x, y, c) == v);  // exact: same operations in the same order
            }
            CHECK(out.final_transmittance[static_cast<size_t>(y) * cam.width + x] == t);
        }
    }
}

TEST_CASE("render: early stop changes the image by less than 1e-3") {
    Rng rng(55);
    // Stack opaque splats so the transmittance threshold actually triggers.
    Scene scene = test::random_scene(rng, 20);
    for (auto& g : scene.primitives) g.opacity_logit = 3.5;
    const Camera cam = test::test_camera(32);
    RenderSettings with_stop;
    RenderSettings no_stop;
    no_stop.early_stop = false;
    const RenderOutput a = render(scene, cam, with_stop);
    const RenderOutput b = render(scene, cam, no_stop);
    double max_dev = 0.0;
    for (std::size_t i = 0; i < a.image.pixels.size(); ++i)
        max_dev = std::max(max_dev, std::abs(a.image.pixels[i] - b.image.pixels[i]));
    CHECK(max_dev < 1e-3);
    CHECK(max_dev > 0.0);  // the fixture must actually exercise the stop
}

TEST_CASE("render: low-precision mode stays within loose tolerance of f64") {
    Rng rng(56);
    const Scene scene = test::random_scene(rng, 12);
    const Camera cam = test::test_camera(32);
    RenderSettings low;
    low.precision = Precision::kLow;
    const RenderOutput a = render(scene, cam);
    const RenderOutput b = render(scene, cam, low);
    double max_dev = 0.0;
    for (std::size_t i = 0; i < a.image.pixels.size(); ++i)
        max_dev = std::max(max_dev, std::abs(a.image.pixels[i] - b.image.pixels[i]));
    CHECK(max_dev < 1e-5);
}

TEST_CASE("backward: zero image gradient gives zero parameter gradients") {
    Rng rng(31);
    const Scene scene = test::random_scene(rng, 6);
    const Camera cam = test::test_camera(16);
    const RenderOutput out = render(scene, cam);
    const Image zero(cam.width, cam.height);
    const ParamGrads grads = backward(scene, cam, out, zero);
    for (std::size_t i = 0; i < scene.size(); ++i) {
        CHECK(grads.d_center[i].norm() == 0.0);
        CHECK(grads.d_log_scale[i].norm() == 0.0);
        CHECK(grads.d_rotation[i].norm() == 0.0);
        CHECK(grads.d_opacity_logit[i] == 0.0);
        CHECK(grads.d_color[i].norm() == 0.0);
    }
}

TEST_CASE("backward: color gradient of a single splat is the accumulated T*alpha") {
    Rng rng(32);
    Scene scene = test::random_scene(rng, 1);
    const Camera cam = test::test_camera(16);
    const RenderSettings settings = test::smooth_settings();
    const RenderOutput out = render(scene, cam, settings);

    Image grad_image(cam.width, cam.height);
    for (int y = 0; y < cam.height; ++y)
        for (int x = 0; x < cam.width; ++x) grad_image.at(x, y, 1) = 1.0;  // green channel only

    const ParamGrads grads = backward(scene, cam, out, grad_image, settings);
    double expected = 0.0;
    for (const auto& hits : out.per_pixel_hits)
        for (const PixelHit& h : hits) expected += h.alpha;  // single splat: T = 1 at every hit
    CHECK(grads.d_color[0].y == doctest::Approx(expected).epsilon(1e-12));
    CHECK(grads.d_color[0].x == 0.0);
    CHECK(grads.d_color[0].z == 0.0);
}

TEST_CASE("backward: every attribute gradient matches central finite differences") {
    Rng rng(700);
    const RenderSettings settings = test::smooth_settings();
    for (int trial = 0; trial < 5; ++trial) {
        const Scene scene = test::random_scene(rng, 10);
        const Camera cam = test::test_camera(24);
        const Image grad_image = test::random_image(rng, cam.width, cam.height);
        const test::FdCheck check = test::fd_sweep(scene, cam, grad_image, settings);
        INFO("worst analytic=", check.worst_analytic, " numeric=", check.worst_numeric);
        CHECK(check.max_rel_err < 1e-4);
    }
}

TEST_CASE("backward: rejects mismatched buffers") {
    Rng rng(44);
    const Scene scene = test::random_scene(rng, 3);
    const Camera cam = test::test_camera(16);
    const RenderOutput out = render(scene, cam);
    Camera other = test::test_camera(24);
    const Image grad_image(24, 24);
    CHECK_THROWS_AS(backward(scene, other, out, grad_image), std::invalid_argument);
}

TEST_CASE("contribution: primitives that hit no pixel contribute zero") {
    Rng rng(61);
    Scene scene = test::random_scene(rng, 4);
    scene.primitives[2].opacity_logit = -40.0;  // alpha below the cutoff everywhere
    const Camera cam = test::test_camera(16);
    const RenderOutput out = render(scene, cam);
    const Image target = test::random_image(rng, 16, 16);
    const ContributionBuffer contrib = contribution_pass(scene, cam, out, target);
    CHECK(contrib.delta_l1[2] == 0.0);
}

TEST_CASE("contribution: a splat matching the target over a wrong background helps") {
    Scene scene;
    scene.background = {1.0, 1.0, 1.0};
    GaussianPrimitive g;
    g.center = {0, 0, 2};
    g.log_scale = {std::log(0.6), std::log(0.6), std::log(0.6)};
    g.opacity_logit = 4.0;
    g.color = {0.2, 0.3, 0.4};
    scene.primitives.push_back(g);
    const Camera cam = test::test_camera(16);
    const RenderOutput out = render(scene, cam);
    const Image target(16, 16, {0.2, 0.3, 0.4});
    const ContributionBuffer contrib = contribution_pass(scene, cam, out, target);
    CHECK(contrib.delta_l1[0] < 0.0);
}

TEST_CASE("contribution: fused pass equals the leave-one-out oracle exactly") {
    Rng rng(900);
    const RenderSettings strict = RenderSettings::strict();
    double max_dev = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
        const int n = 3 + static_cast<int>(rng.uniform_int(0, 17));
        const Scene scene = test::random_scene(rng, n);
        const Camera cam = test::test_camera(32);
        const Image target = test::random_image(rng, 32, 32);
        const RenderOutput out = render(scene, cam, strict);
        const ContributionBuffer contrib = contribution_pass(scene, cam, out, target, strict);
        for (std::size_t i = 0; i < scene.size(); ++i) {
            const double oracle = leave_one_out_oracle(scene, cam, target, i, strict);
            max_dev = std::max(max_dev, std::abs(contrib.delta_l1[i] - oracle));
        }
    }
    CHECK(max_dev < 1e-6);
}

TEST_CASE("contribution: low-precision forward still matches the oracle loosely") {
    Rng rng(901);
    RenderSettings low;
    low.precision = Precision::kLow;
    low.early_stop = true;
    double max_dev = 0.0;
    for (int trial = 0; trial < 5; ++trial) {
        const Scene scene = test::random_scene(rng, 12);
        const Camera cam = test::test_camera(32);
        const Image target = test::random_image(rng, 32, 32);
        const RenderOutput out = render(scene, cam, low);
        const ContributionBuffer contrib = contribution_pass(scene, cam, out, target, low);
        for (std::size_t i = 0; i < scene.size(); ++i) {
            const double oracle = leave_one_out_oracle(scene, cam, target, i, low);
            max_dev = std::max(max_dev, std::abs(contrib.delta_l1[i] - oracle));
        }
    }
    CHECK(max_dev < 1e-3);
}

TEST_CASE("leave-one-out: removing a fully occluded primitive changes nothing") {
    Scene scene;
    scene.background = {0, 0, 0};
    GaussianPrimitive front;
    front.center = {0, 0, 2};
    front.log_scale = {std::log(2.0), std::log(2.0), std::log(2.0)};
    front.opacity_logit = 30.0;  // alpha 0.999 everywhere over the frame
    front.color = {0.8, 0.1, 0.2};
    GaussianPrimitive hidden = front;
    hidden.center = {0, 0, 4};
    hidden.color = {0.0, 1.0, 0.0};
    hidden.log_scale = {std::log(0.1), std::log(0.1), std::log(0.1)};
    hidden.opacity_logit = -4.0;  // low alpha behind a nearly opaque wall
    scene.primitives.push_back(front);
    scene.primitives.push_back(hidden);

    const Camera cam = test::test_camera(16);
    const Image target = Image(16, 16, {0.5, 0.5, 0.5});
    // The occluder is not perfectly opaque (0.999), so demand near-zero.
    CHECK(std::abs(leave_one_out_oracle(scene, cam, target, 1, RenderSettings::strict())) < 2e-5);
}

TEST_CASE("leave-one-out: removing the only primitive leaves the background") {
    Rng rng(66);
    const Scene scene = test::random_scene(rng, 1);
    const Camera cam = test::test_camera(16);
    const Image target = test::random_image(rng, 16, 16);
    const RenderOutput out = render(scene, cam);
    const Image bg(16, 16, scene.background);
    const double expected = l1_mean(out.image, target) - l1_mean(bg, target);
    CHECK(leave_one_out_oracle(scene, cam, target, 0) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("leave-one-out: index out of range throws") {
    Rng rng(67);
    const Scene scene = test::random_scene(rng, 2);
    const Image target(16, 16);
    CHECK_THROWS_AS(leave_one_out_oracle(scene, test::test_camera(16), target, 2), std::out_of_range);
}
