#include "deg/octree.hpp"

#include <cmath>
#include <stdexcept>

#include "deg/rng.hpp"

namespace deg {

std::array<double, 8> softmax8(const std::array<double, 8>& logits) {
    double m = logits[0];
    for (double v : logits) m = std::max(m, v);
    std::array<double, 8> out{};
    double sum = 0.0;
    for (int k = 0; k < 8; ++k) {
        out[k] = std::exp(logits[k] - m);
        sum += out[k];
    }
    for (int k = 0; k < 8; ++k) out[k] /= sum;
    return out;
}

std::array<double, 8> log_softmax8(const std::array<double, 8>& logits) {
    double m = logits[0];
    for (double v : logits) m = std::max(m, v);
    double sum = 0.0;
    for (int k = 0; k < 8; ++k) sum += std::exp(logits[k] - m);
    const double lse = m + std::log(sum);
    std::array<double, 8> out{};
    for (int k = 0; k < 8; ++k) out[k] = logits[k] - lse;
    return out;
}

namespace {

constexpr double kLogEighth = -2.0794415416798357;  // log(1/8)

void check_leaf(const OctreeDensity& d, std::uint64_t leaf) {
    if (leaf >= d.leaf_count())
        throw std::invalid_argument("octree: leaf path digit out of [0,8)");
}

int child_digit(std::uint64_t leaf, int levels, int level) {
    // Digit taken when descending from level `level` to `level + 1`.
    return static_cast<int>((leaf >> (3 * (levels - level - 1))) & 7);
}

std::uint64_t prefix_path(std::uint64_t leaf, int levels, int level) {
    // Cell containing the leaf at the given level.
    return leaf >> (3 * (levels - level));
}

}  // namespace

Aabb OctreeDensity::leaf_box(std::uint64_t leaf) const {
    check_leaf(*this, leaf);
    Aabb box = domain;
    for (int l = 0; l < levels; ++l) {
        const int digit = child_digit(leaf, levels, l);
        const Vec3 mid = box.center();
        if (digit & 1) box.min.x = mid.x; else box.max.x = mid.x;
        if (digit & 2) box.min.y = mid.y; else box.max.y = mid.y;
        if (digit & 4) box.min.z = mid.z; else box.max.z = mid.z;
    }
    return box;
}

std::uint64_t OctreeDensity::leaf_of(const Vec3& p) const {
    Aabb box = domain;
    std::uint64_t path = 0;
    for (int l = 0; l < levels; ++l) {
        const Vec3 mid = box.center();
        int digit = 0;
        if (p.x >= mid.x) { digit |= 1; box.min.x = mid.x; } else { box.max.x = mid.x; }
        if (p.y >= mid.y) { digit |= 2; box.min.y = mid.y; } else { box.max.y = mid.y; }
        if (p.z >= mid.z) { digit |= 4; box.min.z = mid.z; } else { box.max.z = mid.z; }
        path = path * 8 + static_cast<std::uint64_t>(digit);
    }
    return path;
}

double log_prob(const OctreeDensity& d, std::uint64_t leaf) {
    check_leaf(d, leaf);
    double lp = 0.0;
    for (int l = 0; l < d.levels; ++l) {
        const std::uint64_t parent = prefix_path(leaf, d.levels, l);
        const int digit = child_digit(leaf, d.levels, l);
        if (const auto* logits = d.logits.find(l, parent)) {
            lp += log_softmax8(*logits)[digit];
        } else {
            lp += kLogEighth;  // unvisited cells are uniform
        }
    }
    return lp;
}

std::array<int, 8> systematic_allocate(int n, const std::array<double, 8>& probs, double u) {
    double total = 0.0;
    for (double p : probs) {
        if (p < 0.0 || !std::isfinite(p))
            throw std::invalid_argument("systematic_allocate: degenerate probabilities");
        total += p;
    }
    if (total <= 0.0) throw std::invalid_argument("systematic_allocate: probabilities sum to zero");
    if (n < 0) throw std::invalid_argument("systematic_allocate: negative count");

    // counts_k = #{ j : (j + u)/n falls in [C_{k-1}, C_k) }, evaluated in
    // closed form; guarantees sum n and per-bin counts within one of n p_k.
    std::array<int, 8> counts{};
    double cum = 0.0;
    double prev_edge = 0.0;  // ceil(n * C_0 - u) with C_0 = 0, u in [0,1)
    for (int k = 0; k < 8; ++k) {
        cum += probs[k] / total;
        if (k == 7) cum = 1.0;
        const double edge = std::ceil(static_cast<double>(n) * cum - u);
        counts[k] = static_cast<int>(edge - prev_edge);
        prev_edge = edge;
    }
    return counts;
}

AnchorSet sample_anchors(const OctreeDensity& d, int count, std::uint64_t seed,
                         const SampleOptions& options, SampleStats* stats) {
    struct FrontierCell {
        std::uint64_t path;
        int count;
        double log_p;
    };

    std::vector<FrontierCell> frontier{{0, count, 0.0}};
    std::vector<FrontierCell> next;
    for (int l = 0; l < d.levels; ++l) {
        next.clear();
        for (const FrontierCell& cell : frontier) {
            std::array<double, 8> probs;
            std::array<double, 8> logp;
            if (const auto* logits = d.logits.find(l, cell.path)) {
                probs = softmax8(*logits);
                logp = log_softmax8(*logits);
            } else {
                probs.fill(0.125);
                logp.fill(kLogEighth);
            }
            if (stats) ++stats->logit_evaluations;

            // Fresh systematic offset per cell, keyed by (seed, level, path).
            Rng cell_rng(hash_mix(hash_mix(seed, 0x5e1ec7 + static_cast<std::uint64_t>(l)), cell.path));
            const std::array<int, 8> alloc = systematic_allocate(cell.count, probs, cell_rng.uniform());
            for (int k = 0; k < 8; ++k) {
                if (alloc[k] == 0) continue;
                next.push_back({cell.path * 8 + static_cast<std::uint64_t>(k), alloc[k], cell.log_p + logp[k]});
            }
        }
        frontier.swap(next);
    }

    AnchorSet anchors;
    anchors.positions.reserve(static_cast<size_t>(count));
    anchors.leaf_indices.reserve(static_cast<size_t>(count));
    anchors.log_prob.reserve(static_cast<size_t>(count));
    for (const FrontierCell& leaf : frontier) {
        const Aabb box = d.leaf_box(leaf.path);
        Rng leaf_rng(hash_mix(hash_mix(seed, 0xdeca7), leaf.path));
        for (int j = 0; j < leaf.count; ++j) {
            Vec3 pos;
            if (options.deterministic_centers) {
                pos = box.center();
            } else {
                pos = {box.min.x + (box.max.x - box.min.x) * leaf_rng.uniform(),
                       box.min.y + (box.max.y - box.min.y) * leaf_rng.uniform(),
                       box.min.z + (box.max.z - box.min.z) * leaf_rng.uniform()};
            }
            anchors.positions.push_back(pos);
            anchors.leaf_indices.push_back(leaf.path);
            anchors.log_prob.push_back(leaf.log_p);
        }
    }
    return anchors;
}

CeResult ce_loss(const OctreeDensity& d, const TargetHistogram& target) {
    // Accumulate per-(parent, child) target mass from the leaf weights, then
    // walk the touched cells level by level.
    std::vector<std::map<std::uint64_t, std::array<double, 8>>> mass(static_cast<size_t>(d.levels));
    for (const auto& [leaf, w] : target.weights) {
        check_leaf(d, leaf);
        for (int l = 0; l < d.levels; ++l) {
            const std::uint64_t parent = prefix_path(leaf, d.levels, l);
            const int digit = child_digit(leaf, d.levels, l);
            mass[static_cast<size_t>(l)][parent][static_cast<size_t>(digit)] += w;
        }
    }

    CeResult result;
    result.grads = SparseLogits(d.levels);
    for (int l = 0; l < d.levels; ++l) {
        for (const auto& [parent, child_mass] : mass[static_cast<size_t>(l)]) {
            std::array<double, 8> logits{};
            if (const auto* stored = d.logits.find(l, parent)) logits = *stored;
            const auto logp = log_softmax8(logits);
            const auto p = softmax8(logits);
            double cell_total = 0.0;
            for (int k = 0; k < 8; ++k) {
                result.value -= child_mass[static_cast<size_t>(k)] * logp[static_cast<size_t>(k)];
                cell_total += child_mass[static_cast<size_t>(k)];
            }
            auto& g = result.grads.cell(l, parent);
            for (int k = 0; k < 8; ++k)
                g[static_cast<size_t>(k)] = cell_total * p[static_cast<size_t>(k)] - child_mass[static_cast<size_t>(k)];
        }
    }
    return result;
}

double ce_loss_joint(const OctreeDensity& d, const TargetHistogram& target) {
    double value = 0.0;
    for (const auto& [leaf, w] : target.weights) value -= w * log_prob(d, leaf);
    return value;
}

TargetHistogram histogram_from_points(const std::vector<Vec3>& points, int levels, const Aabb& domain) {
    if (points.empty()) throw std::invalid_argument("histogram_from_points: empty point set");
    OctreeDensity probe(levels, domain);
    TargetHistogram hist;
    hist.levels = levels;
    for (const Vec3& p : points) {
        if (!domain.contains(p)) ++hist.clamped_points;
        Vec3 q{std::min(domain.max.x, std::max(domain.min.x, p.x)),
               std::min(domain.max.y, std::max(domain.min.y, p.y)),
               std::min(domain.max.z, std::max(domain.min.z, p.z))};
        hist.weights[probe.leaf_of(q)] += 1.0;
    }
    const double inv = 1.0 / static_cast<double>(points.size());
    for (auto& [leaf, w] : hist.weights) w *= inv;
    return hist;
}

double histogram_entropy(const TargetHistogram& target) {
    double h = 0.0;
    for (const auto& [leaf, w] : target.weights)
        if (w > 0.0) h -= w * std::log(w);
    return h;
}

}  // namespace deg
