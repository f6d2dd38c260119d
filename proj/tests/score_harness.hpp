#pragma once

// Shared fixture for the score-function correctness and variance-reduction
// checks: an L=2 density with deterministic leaf-center dequantization and a
// frozen decoder, so the render loss is a fixed function of the sampled
// leaves and the expected loss is computable by exhaustive enumeration.

#include <array>
#include <cmath>
#include <vector>

#include "deg/decoder.hpp"
#include "deg/density_control.hpp"
#include "deg/octree.hpp"
#include "deg/rasterizer.hpp"
#include "deg/rng.hpp"

namespace deg::test {

struct ScoreSetup {
    OctreeDensity density{2};
    DecoderParams decoder;
    Camera cam;
    Image target;
    std::vector<double> leaf_loss;  // cached L1 loss of the one-anchor scene per leaf
};

inline double loss_of_anchors(const ScoreSetup& setup, const AnchorSet& anchors) {
    const DecodeResult decoded = decode(anchors, setup.decoder);
    const RenderOutput out = render(decoded.scene, setup.cam, RenderSettings::strict());
    return l1_mean(out.image, setup.target);
}

inline ScoreSetup make_score_setup(std::uint64_t seed) {
    ScoreSetup setup;
    Rng rng(hash_mix(seed, 0x5c02e));

    setup.density = OctreeDensity(2, Aabb{{-1, -1, -1}, {1, 1, 1}});
    std::uint64_t cells = 1;
    for (int l = 0; l < 2; ++l) {
        for (std::uint64_t p = 0; p < cells; ++p) {
            auto& cell = setup.density.logits.cell(l, p);
            for (double& v : cell) v = 0.4 * rng.normal();
        }
        cells *= 8;
    }

    // High-frequency decoder so neighboring leaves decode to visibly
    // different primitives (loss contrast at every octree level). Opacities
    // are biased low with a wide spread: most leaves render nearly invisible
    // (loss ~ 0), a minority paint strongly, keeping the loss baseline small
    // relative to its across-leaf contrast.
    setup.decoder = DecoderParams::init(4, 24, 2, 0.15, std::log(0.12), setup.density.domain,
                                        hash_mix(seed, 0xdec));
    for (double& w : setup.decoder.w2) w *= 30.0;
    for (int k = 0; k < setup.decoder.expansion; ++k) {
        const std::size_t opacity_row = static_cast<size_t>(k) * 14 + 10;
        for (int c = 0; c < setup.decoder.hidden; ++c)
            setup.decoder.w2[opacity_row * static_cast<size_t>(setup.decoder.hidden) + static_cast<size_t>(c)] *= 2.5;
        setup.decoder.b2[opacity_row] = -3.0;
    }

    setup.cam.width = 16;
    setup.cam.height = 16;
    setup.cam.focal = 16.0;
    setup.cam.near = 0.1;
    setup.cam.position = {0.0, 0.0, -3.0};

    // Target equals the empty-scene render (black background), so the loss
    // measures exactly what the decoded primitives paint: invisible leaves
    // cost nothing and the loss baseline stays far below its contrast.
    setup.target = Image(16, 16, Vec3{0, 0, 0});

    SampleOptions centers;
    centers.deterministic_centers = true;
    setup.leaf_loss.resize(64);
    for (std::uint64_t leaf = 0; leaf < 64; ++leaf) {
        AnchorSet one;
        one.positions.push_back(setup.density.leaf_box(leaf).center());
        one.leaf_indices.push_back(leaf);
        one.log_prob.push_back(log_prob(setup.density, leaf));
        setup.leaf_loss[leaf] = loss_of_anchors(setup, one);
    }
    return setup;
}

// Independent oracle: grad of sum_leaf q(leaf) * loss(leaf) w.r.t. every
// logit, by direct enumeration with explicit softmax algebra.
inline SparseLogits analytic_expected_loss_gradient(const ScoreSetup& setup) {
    SparseLogits grads(2);
    for (std::uint64_t leaf = 0; leaf < 64; ++leaf) {
        const double weight = std::exp(log_prob(setup.density, leaf)) * setup.leaf_loss[leaf];
        // d q(leaf) / d logit = q(leaf) * (indicator - softmax) on each path cell.
        const std::uint64_t parents[2] = {0, leaf >> 3};
        const int digits[2] = {static_cast<int>((leaf >> 3) & 7), static_cast<int>(leaf & 7)};
        for (int l = 0; l < 2; ++l) {
            std::array<double, 8> logits{};
            if (const auto* stored = setup.density.logits.find(l, parents[l])) logits = *stored;
            const auto p = softmax8(logits);
            auto& g = grads.cell(l, parents[l]);
            for (int k = 0; k < 8; ++k)
                g[static_cast<size_t>(k)] += weight * ((k == digits[l] ? 1.0 : 0.0) - p[static_cast<size_t>(k)]);
        }
    }
    return grads;
}

// Monte-Carlo average of the plain policy-gradient estimator with P=1 and
// deterministic dequantization; leaf losses come from the cache.
inline SparseLogits mc_policy_gradient(const ScoreSetup& setup, int samples, std::uint64_t seed) {
    SampleOptions centers;
    centers.deterministic_centers = true;
    SparseLogits sum(2);
    for (int s = 0; s < samples; ++s) {
        const AnchorSet anchors = sample_anchors(setup.density, 1, hash_mix(seed, static_cast<std::uint64_t>(s)), centers);
        const double loss = setup.leaf_loss[anchors.leaf_indices[0]];
        const SparseLogits g = density_gradient(anchors, {loss}, setup.density);
        for (std::size_t l = 0; l < 2; ++l)
            for (const auto& [path, cell] : g.levels[l]) {
                auto& acc = sum.cell(static_cast<int>(l), path);
                for (int k = 0; k < 8; ++k) acc[static_cast<size_t>(k)] += cell[static_cast<size_t>(k)];
            }
    }
    for (auto& level : sum.levels)
        for (auto& [path, cell] : level)
            for (double& v : cell) v /= samples;
    return sum;
}

struct VarianceComparison {
    int coords = 0;
    int dr_not_worse = 0;
    double fraction() const { return coords == 0 ? 0.0 : static_cast<double>(dr_not_worse) / coords; }
};

// Empirical per-coordinate variance of the plain estimator (reward = total
// loss for every anchor) vs the difference-reward estimator (rewards from the
// fused contribution pass, grouped by anchor), over shared sampled anchor
// sets with P anchors each.
inline VarianceComparison variance_comparison(const ScoreSetup& setup, int samples, int anchors_per_sample,
                                              std::uint64_t seed) {
    SampleOptions centers;
    centers.deterministic_centers = true;
    const RenderSettings strict = RenderSettings::strict();

    // 9 cells at L<=2, 8 coordinates each; index root first, then level-1.
    constexpr int kCoords = 72;
    std::vector<double> sum_p(kCoords, 0.0), sq_p(kCoords, 0.0), sum_d(kCoords, 0.0), sq_d(kCoords, 0.0);
    auto flat_index = [](std::size_t level, std::uint64_t path, int k) {
        return level == 0 ? k : 8 + static_cast<int>(path) * 8 + k;
    };

    for (int s = 0; s < samples; ++s) {
        const AnchorSet anchors =
            sample_anchors(setup.density, anchors_per_sample, hash_mix(seed, static_cast<std::uint64_t>(s)), centers);
        const DecodeResult decoded = decode(anchors, setup.decoder);
        const RenderOutput out = render(decoded.scene, setup.cam, strict);
        const double total_loss = l1_mean(out.image, setup.target);
        const ContributionBuffer contrib = contribution_pass(decoded.scene, setup.cam, out, setup.target, strict);
        const std::vector<double> rewards = group_by_anchor(contrib, decoded.scene.anchor_of, anchors.size());

        const SparseLogits g_plain =
            density_gradient(anchors, std::vector<double>(anchors.size(), total_loss), setup.density);
        const SparseLogits g_dr = density_gradient(anchors, rewards, setup.density);

        // Accumulate dense per-coordinate statistics (absent cells are zero).
        std::vector<double> dense_p(kCoords, 0.0), dense_d(kCoords, 0.0);
        for (std::size_t l = 0; l < 2; ++l) {
            for (const auto& [path, cell] : g_plain.levels[l])
                for (int k = 0; k < 8; ++k) dense_p[static_cast<size_t>(flat_index(l, path, k))] += cell[static_cast<size_t>(k)];
            for (const auto& [path, cell] : g_dr.levels[l])
                for (int k = 0; k < 8; ++k) dense_d[static_cast<size_t>(flat_index(l, path, k))] += cell[static_cast<size_t>(k)];
        }
        for (int c = 0; c < kCoords; ++c) {
            sum_p[static_cast<size_t>(c)] += dense_p[static_cast<size_t>(c)];
            sq_p[static_cast<size_t>(c)] += dense_p[static_cast<size_t>(c)] * dense_p[static_cast<size_t>(c)];
            sum_d[static_cast<size_t>(c)] += dense_d[static_cast<size_t>(c)];
            sq_d[static_cast<size_t>(c)] += dense_d[static_cast<size_t>(c)] * dense_d[static_cast<size_t>(c)];
        }
    }

    VarianceComparison result;
    for (int c = 0; c < kCoords; ++c) {
        const double mean_p = sum_p[static_cast<size_t>(c)] / samples;
        const double mean_d = sum_d[static_cast<size_t>(c)] / samples;
        const double var_p = sq_p[static_cast<size_t>(c)] / samples - mean_p * mean_p;
        const double var_d = sq_d[static_cast<size_t>(c)] / samples - mean_d * mean_d;
        if (var_p == 0.0 && var_d == 0.0) continue;  // never touched
        ++result.coords;
        if (var_d <= var_p) ++result.dr_not_worse;
    }
    return result;
}

}  // namespace deg::test
