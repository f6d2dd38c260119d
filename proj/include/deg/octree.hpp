#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <vector>

#include "deg/geometry.hpp"

namespace deg {

/// Sparse per-level gradient (or update) buffer over octree cell logits.
/// Keys are parent-cell path indices; values are 8-vectors over the children.
struct SparseLogits {
    std::vector<std::map<std::uint64_t, std::array<double, 8>>> levels;

    explicit SparseLogits(int num_levels = 0) : levels(static_cast<size_t>(num_levels)) {}

    std::array<double, 8>& cell(int level, std::uint64_t path) {
        auto [it, inserted] = levels[static_cast<size_t>(level)].try_emplace(path, std::array<double, 8>{});
        return it->second;
    }

    const std::array<double, 8>* find(int level, std::uint64_t path) const {
        const auto& m = levels[static_cast<size_t>(level)];
        auto it = m.find(path);
        return it == m.end() ? nullptr : &it->second;
    }

    std::size_t cell_count() const {
        std::size_t n = 0;
        for (const auto& m : levels) n += m.size();
        return n;
    }
};

/// Learnable spatial density over an L-level octree. Each stored cell holds 8
/// logits for the categorical distribution over its children; absent cells
/// are implicitly uniform. Cell paths pack child digits base 8, root = 0.
struct OctreeDensity {
    int levels = 1;
    Aabb domain;
    SparseLogits logits;

    explicit OctreeDensity(int num_levels = 1, const Aabb& box = {})
        : levels(num_levels), domain(box), logits(num_levels) {}

    std::uint64_t leaf_count() const { return std::uint64_t(1) << (3 * levels); }

    /// Axis-aligned box of a leaf cell; child digit bits are (x, y, z) halves.
    Aabb leaf_box(std::uint64_t leaf) const;

    /// Leaf path containing a point (points are clamped into the domain).
    std::uint64_t leaf_of(const Vec3& p) const;
};

struct AnchorSet {
    std::vector<Vec3> positions;
    std::vector<std::uint64_t> leaf_indices;
    std::vector<double> log_prob;

    std::size_t size() const { return positions.size(); }
};

/// Normalized leaf histogram of a surface point cloud.
struct TargetHistogram {
    int levels = 1;
    std::map<std::uint64_t, double> weights;  // leaf path -> probability mass
    std::size_t clamped_points = 0;           // inputs that fell outside the domain
};

struct SampleOptions {
    // Place anchors at leaf centers instead of uniform positions (testing hook
    // that makes the anchor a deterministic function of the leaf).
    bool deterministic_centers = false;
};

struct SampleStats {
    std::size_t logit_evaluations = 0;  // softmax evaluations over the traversal
};

/// log q(leaf) = sum of per-level conditional log-softmax terms along the path.
double log_prob(const OctreeDensity& d, std::uint64_t leaf);

/// Systematic allocation of n samples over 8 children with one uniform offset;
/// counts sum to n and each lies in {floor(n p_k), ceil(n p_k)}.
std::array<int, 8> systematic_allocate(int n, const std::array<double, 8>& probs, double u);

/// Batched ancestral sampling over the active-cell frontier. Deterministic
/// given (density, P, seed): per-cell offsets and per-anchor dequantization
/// draws are keyed by cell path, not traversal order.
AnchorSet sample_anchors(const OctreeDensity& d, int count, std::uint64_t seed,
                         const SampleOptions& options = {}, SampleStats* stats = nullptr);

struct CeResult {
    double value = 0.0;     // level-decomposed cross-entropy
    SparseLogits grads;     // d value / d logits, only cells with target mass
};

/// Octree cross-entropy, computed level by level over the target's marginals.
CeResult ce_loss(const OctreeDensity& d, const TargetHistogram& target);

/// Same quantity summed jointly over leaves via log_prob; kept as an
/// independent evaluation route.
double ce_loss_joint(const OctreeDensity& d, const TargetHistogram& target);

TargetHistogram histogram_from_points(const std::vector<Vec3>& points, int levels, const Aabb& domain);

/// Entropy of the target leaf distribution (the cross-entropy lower bound).
double histogram_entropy(const TargetHistogram& target);

std::array<double, 8> softmax8(const std::array<double, 8>& logits);
std::array<double, 8> log_softmax8(const std::array<double, 8>& logits);

}  // namespace deg
