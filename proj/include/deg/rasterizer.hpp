#pragma once

#include <cstdint>

#include "deg/projection.hpp"
#include "deg/types.hpp"

namespace deg {

enum class Precision { kHigh, kLow };

// Blending weight clamp shared by alpha_at and the rasterizer.
constexpr double kAlphaMax = 0.999;

struct RenderSettings {
    double alpha_cutoff = 1.0 / 255.0;  // blending weights below this are dropped
    double transmittance_stop = 1e-4;   // early-stop threshold (assumption, documented)
    bool early_stop = true;
    Precision precision = Precision::kHigh;

    // Exact mode used by oracles and gradient checks: f64 compositing with no
    // early stop, so removing one primitive changes the image by exactly
    // T * alpha * (c - back).
    static RenderSettings strict() {
        RenderSettings s;
        s.early_stop = false;
        s.precision = Precision::kHigh;
        return s;
    }
};

struct PixelHit {
    std::uint32_t primitive;
    double alpha;
};

struct RenderOutput {
    Image image;
    std::vector<double> final_transmittance;        // H*W, remaining T per pixel
    std::vector<std::uint32_t> sorted_order;        // visible primitives, front to back
    std::vector<std::vector<PixelHit>> per_pixel_hits;  // H*W, composited hits in depth order

    const std::vector<PixelHit>& hits_at(int x, int y) const {
        return per_pixel_hits[static_cast<size_t>(y) * image.width + x];
    }
};

struct ContributionBuffer {
    // delta_l1[i]: change of the mean L1 loss attributable to primitive i,
    // i.e. loss(with i) - loss(without i). Negative means i helps.
    std::vector<double> delta_l1;
};

struct ParamGrads {
    std::vector<Vec3> d_center;
    std::vector<Vec3> d_log_scale;
    std::vector<Vec4> d_rotation;
    std::vector<double> d_opacity_logit;
    std::vector<Vec3> d_color;

    void resize(std::size_t n);
    bool all_finite() const;
};

struct FusedBackwardResult {
    ParamGrads grads;
    ContributionBuffer contributions;
};

RenderOutput render(const Scene& scene, const Camera& cam, const RenderSettings& settings = {});

ParamGrads backward(const Scene& scene, const Camera& cam, const RenderOutput& out,
                    const Image& grad_image, const RenderSettings& settings = {});

ContributionBuffer contribution_pass(const Scene& scene, const Camera& cam, const RenderOutput& out,
                                     const Image& target, const RenderSettings& settings = {});

/// One traversal producing both attribute gradients and per-primitive L1
/// contributions; backward() and contribution_pass() are thin wrappers.
FusedBackwardResult backward_with_contributions(const Scene& scene, const Camera& cam,
                                                const RenderOutput& out, const Image& grad_image,
                                                const Image& target,
                                                const RenderSettings& settings = {});

/// Reference for the fused contributions: re-renders the scene without
/// primitive i and returns loss(full) - loss(without i). N extra renders if
/// called for every primitive; used as the test oracle and by `oracle-check`.
double leave_one_out_oracle(const Scene& scene, const Camera& cam, const Image& target,
                            std::size_t i, const RenderSettings& settings = {});

/// Mean absolute difference over pixels and channels (the documented L1
/// reduction convention).
double l1_mean(const Image& a, const Image& b);

}  // namespace deg
