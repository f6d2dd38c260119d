#include <doctest.h>

#include <cmath>
#include <map>

#include "deg/octree.hpp"
#include "deg/rng.hpp"
#include "test_helpers.hpp"

using namespace deg;

namespace {

OctreeDensity random_density(Rng& rng, int levels, double logit_scale = 1.0) {
    OctreeDensity d(levels);
    // Populate every cell so the normalization check exercises stored logits.
    std::uint64_t cells_at_level = 1;
    for (int l = 0; l < levels; ++l) {
        for (std::uint64_t p = 0; p < cells_at_level; ++p) {
            auto& cell = d.logits.cell(l, p);
            for (double& v : cell) v = logit_scale * rng.normal();
        }
        cells_at_level *= 8;
    }
    return d;
}

}  // namespace

TEST_CASE("log_prob: uniform density gives log(1/64) at L=2") {
    OctreeDensity d(2);
    for (std::uint64_t leaf = 0; leaf < 64; ++leaf)
        CHECK(log_prob(d, leaf) == doctest::Approx(std::log(1.0 / 64.0)).epsilon(1e-12));
}

TEST_CASE("log_prob: single-level softmax evaluates directly") {
    OctreeDensity d(1);
    auto& cell = d.logits.cell(0, 0);
    cell[0] = std::log(8.0);
    CHECK(std::exp(log_prob(d, 0)) == doctest::Approx(8.0 / 15.0).epsilon(1e-12));
    CHECK(std::exp(log_prob(d, 1)) == doctest::Approx(1.0 / 15.0).epsilon(1e-12));
}

TEST_CASE("log_prob: exhaustive leaf sum is normalized for L<=4") {
    Rng rng(5);
    for (int levels = 1; levels <= 4; ++levels) {
        const OctreeDensity d = random_density(rng, levels);
        double sum = 0.0;
        for (std::uint64_t leaf = 0; leaf < d.leaf_count(); ++leaf) sum += std::exp(log_prob(d, leaf));
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("log_prob: invalid path rejected") {
    OctreeDensity d(2);
    CHECK_THROWS_AS(log_prob(d, 64), std::invalid_argument);
}

TEST_CASE("systematic_allocate: uniform probabilities split 8 into ones") {
    std::array<double, 8> probs;
    probs.fill(0.125);
    for (double u : {0.0, 0.123, 0.5, 0.99, 0.9999}) {
        const auto counts = systematic_allocate(8, probs, u);
        for (int c : counts) CHECK(c == 1);
    }
}

TEST_CASE("systematic_allocate: zero samples allocate nothing") {
    std::array<double, 8> probs;
    probs.fill(0.125);
    const auto counts = systematic_allocate(0, probs, 0.37);
    for (int c : counts) CHECK(c == 0);
}

TEST_CASE("systematic_allocate: counts stay within one of n*p") {
    Rng rng(88);
    for (int trial = 0; trial < 1000; ++trial) {
        std::array<double, 8> probs;
        double total = 0.0;
        for (double& p : probs) {
            p = rng.uniform();
            total += p;
        }
        for (double& p : probs) p /= total;
        const int n = 1 + static_cast<int>(rng.uniform_int(0, 1499));
        const auto counts = systematic_allocate(n, probs, rng.uniform());
        int sum = 0;
        for (int k = 0; k < 8; ++k) {
            const double expected = n * probs[static_cast<size_t>(k)];
            CHECK(counts[static_cast<size_t>(k)] >= static_cast<int>(std::floor(expected)));
            CHECK(counts[static_cast<size_t>(k)] <= static_cast<int>(std::ceil(expected)));
            sum += counts[static_cast<size_t>(k)];
        }
        CHECK(sum == n);
    }
}

TEST_CASE("systematic_allocate: negative probabilities are rejected") {
    std::array<double, 8> probs{0.5, 0.5, 0, 0, 0, 0, 0, -0.1};
    CHECK_THROWS_AS(systematic_allocate(4, probs, 0.2), std::invalid_argument);
}

TEST_CASE("sample_anchors: uniform density with P=8^L puts one anchor per leaf") {
    OctreeDensity d(2);
    const AnchorSet anchors = sample_anchors(d, 64, 123);
    REQUIRE(anchors.size() == 64);
    std::map<std::uint64_t, int> counts;
    for (std::uint64_t leaf : anchors.leaf_indices) counts[leaf]++;
    CHECK(counts.size() == 64);
    for (const auto& [leaf, c] : counts) CHECK(c == 1);
}

TEST_CASE("sample_anchors: concentrated density routes every anchor to that leaf") {
    OctreeDensity d(3);
    // Push all mass along the path to leaf 0 at every level.
    for (int l = 0; l < 3; ++l) {
        auto& cell = d.logits.cell(l, 0);
        cell[0] = 20.0;
        for (int k = 1; k < 8; ++k) cell[static_cast<size_t>(k)] = -20.0;
    }
    const AnchorSet anchors = sample_anchors(d, 50, 7);
    const Aabb box = d.leaf_box(0);
    for (std::size_t i = 0; i < anchors.size(); ++i) {
        CHECK(anchors.leaf_indices[i] == 0);
        CHECK(box.contains(anchors.positions[i]));
    }
}

TEST_CASE("sample_anchors: anchors lie in their leaf box and log_prob is consistent") {
    Rng rng(9);
    const OctreeDensity d = random_density(rng, 3);
    const AnchorSet anchors = sample_anchors(d, 500, 99);
    REQUIRE(anchors.size() == 500);
    for (std::size_t i = 0; i < anchors.size(); ++i) {
        CHECK(d.leaf_box(anchors.leaf_indices[i]).contains(anchors.positions[i]));
        CHECK(anchors.log_prob[i] == doctest::Approx(log_prob(d, anchors.leaf_indices[i])).epsilon(1e-12));
    }
}

TEST_CASE("sample_anchors: deterministic given the seed") {
    Rng rng(10);
    const OctreeDensity d = random_density(rng, 3);
    const AnchorSet a = sample_anchors(d, 200, 4242);
    const AnchorSet b = sample_anchors(d, 200, 4242);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a.positions[i].x == b.positions[i].x);
        CHECK(a.positions[i].y == b.positions[i].y);
        CHECK(a.positions[i].z == b.positions[i].z);
        CHECK(a.leaf_indices[i] == b.leaf_indices[i]);
    }
}

TEST_CASE("sample_anchors: empirical leaf frequencies match the density (chi-squared)") {
    Rng rng(11);
    const OctreeDensity d = random_density(rng, 2, 0.7);
    const int P = 100000;
    const AnchorSet anchors = sample_anchors(d, P, 2024);
    std::map<std::uint64_t, int> counts;
    for (std::uint64_t leaf : anchors.leaf_indices) counts[leaf]++;
    double statistic = 0.0;
    for (std::uint64_t leaf = 0; leaf < 64; ++leaf) {
        const double expected = P * std::exp(log_prob(d, leaf));
        const double observed = counts.count(leaf) ? counts[leaf] : 0;
        statistic += (observed - expected) * (observed - expected) / expected;
    }
    CHECK(test::chi2_p_value(statistic, 63) > 0.001);
}

TEST_CASE("sample_anchors: logit evaluations bounded by min(P, active cells) per level") {
    Rng rng(12);
    const OctreeDensity d = random_density(rng, 4);
    for (int p : {1, 3, 17, 120}) {
        SampleStats stats;
        sample_anchors(d, p, 5, {}, &stats);
        CHECK(stats.logit_evaluations <= static_cast<std::size_t>(p) * 4);
    }
    // Concentrated density: empty branches are pruned, so the traversal only
    // ever touches one cell per level.
    OctreeDensity concentrated(4);
    for (int l = 0; l < 4; ++l) {
        auto& cell = concentrated.logits.cell(l, 0);
        cell[0] = 25.0;
    }
    SampleStats stats;
    sample_anchors(concentrated, 1000, 5, {}, &stats);
    CHECK(stats.logit_evaluations == 4);
}

TEST_CASE("sample_anchors: deterministic-centers mode places anchors at leaf centers") {
    OctreeDensity d(2);
    SampleOptions opts;
    opts.deterministic_centers = true;
    const AnchorSet anchors = sample_anchors(d, 64, 1, opts);
    for (std::size_t i = 0; i < anchors.size(); ++i) {
        const Vec3 c = d.leaf_box(anchors.leaf_indices[i]).center();
        CHECK(anchors.positions[i].x == c.x);
        CHECK(anchors.positions[i].y == c.y);
        CHECK(anchors.positions[i].z == c.z);
    }
}

TEST_CASE("ce_loss: matching factorized density reaches the entropy bound") {
    // Target that factorizes: mass split across two leaves under one parent.
    TargetHistogram target;
    target.levels = 2;
    target.weights[0] = 0.5;
    target.weights[1] = 0.5;
    OctreeDensity d(2);
    auto& root = d.logits.cell(0, 0);
    root[0] = 50.0;  // all mass to child 0
    auto& cell = d.logits.cell(1, 0);
    cell[0] = 0.0;
    cell[1] = 0.0;
    for (int k = 2; k < 8; ++k) cell[static_cast<size_t>(k)] = -50.0;
    const CeResult ce = ce_loss(d, target);
    CHECK(ce.value == doctest::Approx(histogram_entropy(target)).epsilon(1e-9));
}

TEST_CASE("ce_loss: single leaf against uniform density costs log 64") {
    TargetHistogram target;
    target.levels = 2;
    target.weights[42] = 1.0;
    OctreeDensity d(2);
    CHECK(ce_loss(d, target).value == doctest::Approx(std::log(64.0)).epsilon(1e-12));
}

TEST_CASE("ce_loss: level decomposition equals the joint form") {
    Rng rng(13);
    for (int levels = 1; levels <= 4; ++levels) {
        const OctreeDensity d = random_density(rng, levels);
        TargetHistogram target;
        target.levels = levels;
        double total = 0.0;
        for (int i = 0; i < 30; ++i) {
            const std::uint64_t leaf = static_cast<std::uint64_t>(rng.uniform_int(0, static_cast<std::int64_t>(d.leaf_count()) - 1));
            const double w = rng.uniform();
            target.weights[leaf] += w;
            total += w;
        }
        for (auto& [leaf, w] : target.weights) w /= total;
        CHECK(ce_loss(d, target).value == doctest::Approx(ce_loss_joint(d, target)).epsilon(1e-10));
    }
}

TEST_CASE("ce_loss: gradient matches finite differences on touched logits") {
    Rng rng(14);
    OctreeDensity d = random_density(rng, 3);
    TargetHistogram target;
    target.levels = 3;
    double total = 0.0;
    for (int i = 0; i < 12; ++i) {
        const std::uint64_t leaf = static_cast<std::uint64_t>(rng.uniform_int(0, 511));
        const double w = rng.uniform();
        target.weights[leaf] += w;
        total += w;
    }
    for (auto& [leaf, w] : target.weights) w /= total;

    const CeResult ce = ce_loss(d, target);
    const double h = 1e-6;
    for (std::size_t l = 0; l < ce.grads.levels.size(); ++l) {
        for (const auto& [path, grad] : ce.grads.levels[l]) {
            auto& cell = d.logits.cell(static_cast<int>(l), path);
            for (int k = 0; k < 8; ++k) {
                auto f = [&]() { return ce_loss(d, target).value; };
                const double fd = test::central_diff(f, cell[static_cast<size_t>(k)], h);
                const double rel = std::abs(grad[static_cast<size_t>(k)] - fd) /
                                   std::max(1e-9, std::abs(fd));
                CHECK(rel < 1e-6);
            }
        }
    }
}

TEST_CASE("histogram_from_points: all mass in one leaf") {
    OctreeDensity d(2);
    std::vector<Vec3> points(40, Vec3{0.9, 0.9, 0.9});
    const TargetHistogram hist = histogram_from_points(points, 2, d.domain);
    CHECK(hist.weights.size() == 1);
    CHECK(hist.weights.begin()->second == doctest::Approx(1.0));
    CHECK(hist.weights.begin()->first == d.leaf_of({0.9, 0.9, 0.9}));
}

TEST_CASE("histogram_from_points: one point per leaf is uniform at L=2") {
    OctreeDensity d(2);
    std::vector<Vec3> points;
    for (std::uint64_t leaf = 0; leaf < 64; ++leaf) points.push_back(d.leaf_box(leaf).center());
    const TargetHistogram hist = histogram_from_points(points, 2, d.domain);
    CHECK(hist.weights.size() == 64);
    for (const auto& [leaf, w] : hist.weights) CHECK(w == doctest::Approx(1.0 / 64.0));
}

TEST_CASE("histogram_from_points: marginals at level l are sums of child weights") {
    Rng rng(15);
    std::vector<Vec3> points;
    for (int i = 0; i < 500; ++i)
        points.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
    const TargetHistogram hist = histogram_from_points(points, 3, Aabb{});

    std::map<std::uint64_t, double> level2, from_children;
    for (const auto& [leaf, w] : hist.weights) {
        from_children[leaf >> 3] += w;
    }
    // Recompute level-2 marginals directly from the points.
    OctreeDensity probe(2, Aabb{});
    for (const Vec3& p : points) level2[probe.leaf_of(p)] += 1.0 / points.size();
    REQUIRE(level2.size() == from_children.size());
    for (const auto& [cell, w] : level2) CHECK(from_children[cell] == doctest::Approx(w).epsilon(1e-12));
}

TEST_CASE("histogram_from_points: empty input rejected, outside points counted") {
    CHECK_THROWS_AS(histogram_from_points({}, 2, Aabb{}), std::invalid_argument);
    std::vector<Vec3> points{{5, 5, 5}, {0, 0, 0}};
    const TargetHistogram hist = histogram_from_points(points, 2, Aabb{});
    CHECK(hist.clamped_points == 1);
}
