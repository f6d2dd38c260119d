#include <cmath>
#include <stdexcept>

#include "deg/rng.hpp"
#include "deg/trainer.hpp"

namespace deg {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Look-at camera on a ring around the y axis; image y grows downward.
Camera ring_camera(int index, int count, double radius, double elevation_deg, int image_size) {
    const double theta = 2.0 * kPi * index / count;
    const double elev = elevation_deg * kPi / 180.0;
    Camera cam;
    cam.position = {radius * std::cos(elev) * std::cos(theta), radius * std::sin(elev),
                    radius * std::cos(elev) * std::sin(theta)};
    const Vec3 forward = cam.position * (-1.0 / cam.position.norm());
    Vec3 right{-std::sin(theta), 0.0, std::cos(theta)};  // cross(world_up, forward), normalized
    right = right * (1.0 / right.norm());
    const Vec3 down{right.y * forward.z - right.z * forward.y, right.z * forward.x - right.x * forward.z,
                    right.x * forward.y - right.y * forward.x};
    cam.rotation.m = {right.x, right.y, right.z, down.x, down.y, down.z, forward.x, forward.y, forward.z};
    cam.width = image_size;
    cam.height = image_size;
    cam.focal = static_cast<double>(image_size);
    cam.near = 0.1;
    return cam;
}

// Quaternion rotating the z axis onto a unit direction.
Vec4 quat_from_z_to(const Vec3& n) {
    const Vec3 z{0, 0, 1};
    const double d = z.dot(n);
    if (d > 1.0 - 1e-12) return {1, 0, 0, 0};
    if (d < -1.0 + 1e-12) return {0, 1, 0, 0};  // 180 degrees about x
    const Vec3 axis{z.y * n.z - z.z * n.y, z.z * n.x - z.x * n.z, z.x * n.y - z.y * n.x};
    const double w = 1.0 + d;
    return normalized(Vec4{w, axis.x, axis.y, axis.z});
}

struct RodSpec {
    double x, z;
    Vec3 color;
};

Scene thinboard_scene(std::uint64_t seed) {
    (void)seed;  // the reference geometry is fixed; only point sampling is random
    Scene scene;
    scene.background = {0.06, 0.07, 0.09};

    // Flat board: smooth low-frequency color, easy to cover with few splats.
    const int grid = 20;
    const double half = 0.75;
    const double board_y = -0.35;
    for (int i = 0; i < grid; ++i) {
        for (int j = 0; j < grid; ++j) {
            GaussianPrimitive g;
            const double x = -half + (i + 0.5) * (2.0 * half / grid);
            const double z = -half + (j + 0.5) * (2.0 * half / grid);
            g.center = {x, board_y, z};
            g.log_scale = {std::log(0.055), std::log(0.01), std::log(0.055)};
            g.opacity_logit = 4.0;
            g.color = {0.45 + 0.2 * std::sin(1.8 * x), 0.5 + 0.15 * std::cos(1.3 * (x + z)),
                       0.45 + 0.2 * std::cos(1.8 * z)};
            scene.primitives.push_back(g);
        }
    }

    // Thin bright rods; hard to cover without dense small primitives.
    const RodSpec rods[3] = {{-0.35, 0.10, {0.95, 0.15, 0.10}},
                             {0.20, -0.30, {0.10, 0.90, 0.20}},
                             {0.45, 0.35, {0.95, 0.85, 0.10}}};
    const int per_rod = 64;
    const double y0 = board_y, y1 = 0.55;
    for (const RodSpec& rod : rods) {
        for (int k = 0; k < per_rod; ++k) {
            GaussianPrimitive g;
            const double y = y0 + (k + 0.5) * (y1 - y0) / per_rod;
            g.center = {rod.x, y, rod.z};
            g.log_scale = {std::log(0.012), std::log(0.016), std::log(0.012)};
            g.opacity_logit = 4.0;
            g.color = rod.color;
            scene.primitives.push_back(g);
        }
    }
    return scene;
}

void thinboard_points(std::uint64_t seed, int count, std::vector<Vec3>& points) {
    Rng rng(hash_mix(seed, 0x90a7d));
    const double half = 0.75;
    const double board_y = -0.35;
    const double board_area = (2 * half) * (2 * half);
    const double rod_r = 0.014, rod_h = 0.9;
    const double rod_area = 2.0 * kPi * rod_r * rod_h;
    const RodSpec rods[3] = {{-0.35, 0.10, {}}, {0.20, -0.30, {}}, {0.45, 0.35, {}}};
    const double total = board_area + 3.0 * rod_area;
    for (int i = 0; i < count; ++i) {
        const double pick = rng.uniform() * total;
        if (pick < board_area) {
            points.push_back({rng.uniform(-half, half), board_y, rng.uniform(-half, half)});
        } else {
            const int r = std::min(2, static_cast<int>((pick - board_area) / rod_area));
            const double angle = rng.uniform() * 2.0 * kPi;
            points.push_back({rods[r].x + rod_r * std::cos(angle), board_y + rng.uniform() * rod_h,
                              rods[r].z + rod_r * std::sin(angle)});
        }
    }
}

Scene checkersphere_scene(std::uint64_t seed) {
    (void)seed;
    Scene scene;
    scene.background = {0.07, 0.07, 0.08};
    const int count = 1200;
    const double radius = 0.62;
    const double golden = kPi * (3.0 - std::sqrt(5.0));
    for (int i = 0; i < count; ++i) {
        const double y = 1.0 - 2.0 * (i + 0.5) / count;
        const double r = std::sqrt(std::max(0.0, 1.0 - y * y));
        const double theta = golden * i;
        const Vec3 n{r * std::cos(theta), y, r * std::sin(theta)};
        GaussianPrimitive g;
        g.center = n * radius;
        g.log_scale = {std::log(0.035), std::log(0.035), std::log(0.01)};
        g.rotation = quat_from_z_to(n);
        g.opacity_logit = 4.0;
        const int checker = (static_cast<int>(std::floor(4.0 * (theta / (2.0 * kPi) - std::floor(theta / (2.0 * kPi))) * 2.0)) +
                             static_cast<int>(std::floor((y + 1.0) * 3.0))) % 2;
        g.color = checker ? Vec3{0.92, 0.25, 0.18} : Vec3{0.93, 0.9, 0.82};
        scene.primitives.push_back(g);
    }
    return scene;
}

void checkersphere_points(std::uint64_t seed, int count, std::vector<Vec3>& points) {
    Rng rng(hash_mix(seed, 0x5b8e3));
    const double radius = 0.62;
    for (int i = 0; i < count; ++i) {
        // Uniform on the sphere via normalized gaussians.
        Vec3 v{rng.normal(), rng.normal(), rng.normal()};
        const double n = v.norm();
        points.push_back(v * (radius / (n > 0 ? n : 1.0)));
    }
}

}  // namespace

Scene synth_reference_scene(const std::string& name, std::uint64_t seed) {
    if (name == "thinboard") return thinboard_scene(seed);
    if (name == "checkersphere") return checkersphere_scene(seed);
    throw std::invalid_argument("synth_scene: unknown scene name '" + name +
                                "' (expected thinboard or checkersphere)");
}

TargetSet synth_scene(const std::string& name, std::uint64_t seed, int image_size, int camera_count) {
    if (camera_count < 8) throw std::invalid_argument("synth_scene: need at least 8 cameras");
    TargetSet targets;
    targets.name = name;
    targets.domain = Aabb{{-1, -1, -1}, {1, 1, 1}};

    const Scene reference = synth_reference_scene(name, seed);
    for (int i = 0; i < camera_count; ++i) {
        // Alternate between two elevations so vertical structure is observed.
        const double elev = (i % 2 == 0) ? 18.0 : 38.0;
        targets.cameras.push_back(ring_camera(i, camera_count, 2.4, elev, image_size));
    }
    for (const Camera& cam : targets.cameras) {
        targets.images.push_back(render(reference, cam).image);
    }

    const int point_count = 16384;
    if (name == "thinboard")
        thinboard_points(seed, point_count, targets.points);
    else
        checkersphere_points(seed, point_count, targets.points);
    return targets;
}

}  // namespace deg
