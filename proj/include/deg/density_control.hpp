#pragma once

#include <unordered_map>
#include <vector>

#include "deg/octree.hpp"
#include "deg/rasterizer.hpp"

namespace deg {

struct AnchorRewards {
    std::vector<double> raw;      // per-anchor loss change (sum of member contributions)
    std::vector<double> clamped;  // after percentile floor + positive cut
};

/// raw[a] = sum of delta_l1 over primitives mapped to anchor a; anchors with
/// no surviving primitive stay 0.
std::vector<double> group_by_anchor(const ContributionBuffer& contrib,
                                    const std::unordered_map<std::size_t, std::size_t>& anchor_of,
                                    std::size_t anchor_count);

/// 10th percentile of a sample by linear interpolation on the sorted values
/// (inclusive endpoints); the documented convention for reward clamping.
double percentile_linear(std::vector<double> values, double q);

/// Raise values below the 10th percentile to it, then zero out positives.
std::vector<double> clamp_rewards(const std::vector<double>& raw);

/// Score-function gradient of the expected render loss w.r.t. the octree
/// logits: sum_j clamped[j] * d log q(x_j) / d logits. Gradient descent on
/// this increases density where rewards are negative (loss-reducing anchors).
SparseLogits density_gradient(const AnchorSet& anchors, const std::vector<double>& clamped,
                              const OctreeDensity& d);

}  // namespace deg
