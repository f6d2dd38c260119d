#pragma once

#include <cstdint>
#include <vector>

#include "deg/octree.hpp"
#include "deg/rasterizer.hpp"
#include "deg/types.hpp"

namespace deg {

/// Fixed two-layer perceptron on Fourier features of the anchor position.
/// Every anchor spawns `expansion` primitives; all attribute parameters come
/// out as unconstrained raw values and are squashed into their domains here,
/// so the backward pass can be written by hand.
struct DecoderParams {
    int fourier_bands = 4;
    int hidden = 32;
    int expansion = 4;           // K primitives per anchor
    double offset_scale = 0.1;   // world units; offsets are offset_scale * tanh(raw)
    double log_scale_bias = -3.0;
    Aabb domain;                 // anchors are normalized to [-1,1]^3 over this box

    std::vector<double> w1, b1, w2, b2;  // row-major weights

    int input_dim() const { return 3 + 6 * fourier_bands; }
    int output_dim() const { return expansion * 14; }

    static DecoderParams init(int fourier_bands, int hidden, int expansion, double offset_scale,
                              double log_scale_bias, const Aabb& domain, std::uint64_t seed);

    /// All weights in a fixed order (w1, b1, w2, b2); used by the optimizer
    /// and the checkpoint writer.
    std::size_t weight_count() const;
    void flatten(std::vector<double>& out) const;
    void unflatten(const std::vector<double>& in);
};

struct DecodeResult {
    Scene scene;                 // anchor_of filled; primitive i*K+k belongs to anchor i
    std::vector<Vec3> offsets;   // cached local offsets, one per primitive
};

DecodeResult decode(const AnchorSet& anchors, const DecoderParams& params);

/// Reverse pass through the fixed architecture. `offset_grads` may be empty
/// or hold one extra d/d offset per primitive (from the offset regularizer).
std::vector<double> decode_backward(const AnchorSet& anchors, const DecoderParams& params,
                                    const ParamGrads& scene_grads,
                                    const std::vector<Vec3>& offset_grads = {});

struct OffsetRegResult {
    double value = 0.0;
    std::vector<Vec3> d_offsets;  // one per primitive
};

/// Cluster compactness: mean ReLU(|mean offset| - gamma * spread) plus a
/// pairwise spread-vs-anchor-distance separation term.
OffsetRegResult offset_reg(const AnchorSet& anchors, const std::vector<Vec3>& offsets, int expansion,
                           double gamma);

struct VolumeOpacityRegResult {
    double value = 0.0;
    ParamGrads grads;  // only d_log_scale and d_opacity_logit are populated
};

/// lambda1 * mean volume + lambda2 * mean (1 - opacity).
VolumeOpacityRegResult volume_opacity_reg(const Scene& scene, double lambda1, double lambda2);

}  // namespace deg
