#include "deg/density_control.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace deg {

std::vector<double> group_by_anchor(const ContributionBuffer& contrib,
                                    const std::unordered_map<std::size_t, std::size_t>& anchor_of,
                                    std::size_t anchor_count) {
    std::vector<double> raw(anchor_count, 0.0);
    for (std::size_t i = 0; i < contrib.delta_l1.size(); ++i) {
        auto it = anchor_of.find(i);
        if (it == anchor_of.end())
            throw std::invalid_argument("group_by_anchor: primitive " + std::to_string(i) + " has no anchor");
        if (it->second >= anchor_count)
            throw std::invalid_argument("group_by_anchor: anchor index out of range");
        raw[it->second] += contrib.delta_l1[i];
    }
    return raw;
}

double percentile_linear(std::vector<double> values, double q) {
    if (values.empty()) throw std::invalid_argument("percentile_linear: empty sample");
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
    if (lo + 1 >= values.size()) return values.back();
    const double frac = pos - static_cast<double>(lo);
    return values[lo] + frac * (values[lo + 1] - values[lo]);
}

std::vector<double> clamp_rewards(const std::vector<double>& raw) {
    if (raw.empty()) throw std::invalid_argument("clamp_rewards: no anchors");
    const double floor_value = percentile_linear(raw, 0.10);
    std::vector<double> out(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i)
        out[i] = std::min(std::max(raw[i], floor_value), 0.0);
    return out;
}

SparseLogits density_gradient(const AnchorSet& anchors, const std::vector<double>& clamped,
                              const OctreeDensity& d) {
    if (clamped.size() != anchors.size())
        throw std::invalid_argument("density_gradient: reward/anchor count mismatch");
    SparseLogits grads(d.levels);
    const std::uint64_t leaf_count = d.leaf_count();
    for (std::size_t j = 0; j < anchors.size(); ++j) {
        const std::uint64_t leaf = anchors.leaf_indices[j];
        if (leaf >= leaf_count)
            throw std::invalid_argument("density_gradient: stale anchor path exceeds octree depth");
        const double reward = clamped[j];
        if (reward == 0.0) continue;
        for (int l = 0; l < d.levels; ++l) {
            const std::uint64_t parent = leaf >> (3 * (d.levels - l));
            const int digit = static_cast<int>((leaf >> (3 * (d.levels - l - 1))) & 7);
            std::array<double, 8> logits{};
            if (const auto* stored = d.logits.find(l, parent)) logits = *stored;
            const auto p = softmax8(logits);
            auto& g = grads.cell(l, parent);
            // d log softmax[digit] / d logit_k = delta_{k,digit} - p_k
            for (int k = 0; k < 8; ++k)
                g[static_cast<size_t>(k)] += reward * ((k == digit ? 1.0 : 0.0) - p[static_cast<size_t>(k)]);
        }
    }
    return grads;
}

}  // namespace deg
