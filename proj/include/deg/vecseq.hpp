#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "deg/geometry.hpp"

namespace deg {

/// Joe-Kuo primitive-polynomial record for one Sobol dimension (d >= 2).
struct SobolDirections {
    int degree = 0;                  // s
    std::uint32_t polynomial = 0;    // a
    std::vector<std::uint32_t> m;    // initial direction integers, odd
};

/// Parses the "d s a m_i" table format published with the Joe-Kuo direction
/// numbers. The first dimension is implicit (all m_i = 1).
std::vector<SobolDirections> load_direction_numbers(std::istream& in);
std::vector<SobolDirections> load_direction_numbers_file(const std::string& path);

/// Embedded copy of the first rows of the bundled direction-number file.
const std::vector<SobolDirections>& builtin_direction_numbers();

struct SobolAnchors {
    std::vector<Vec3> points;  // in [0,1)^3
};

/// First M points of the 3D Sobol sequence in gray-code order, skipping the
/// all-zeros index-0 point.
SobolAnchors sobol3d(int count);
SobolAnchors sobol3d(int count, const std::vector<SobolDirections>& directions);

/// Greedy max-min farthest point sampling; starts at index 0, ties broken by
/// lowest index.
std::vector<std::size_t> fps(const std::vector<Vec3>& points, std::size_t count);

struct Assignment {
    std::vector<std::size_t> perm;   // perm[j] = source row assigned to anchor j
    double total_cost = 0.0;         // sum of squared distances
};

/// Exact minimum-cost assignment (Kuhn-Munkres with potentials, O(M^3))
/// between equally sized point sets; cost is squared euclidean distance.
Assignment ot_assign(const std::vector<Vec3>& sources, const std::vector<Vec3>& anchors);

struct SerializedTokens {
    std::size_t channels = 0;
    std::vector<double> tokens;      // M x C, reordered rows
    std::vector<std::size_t> order;  // permutation applied: tokens[j] = input[order[j]]
    std::size_t pe_dim = 0;
    std::vector<double> anchor_pe;   // M x D sinusoidal embedding of the Sobol anchors
    double total_cost = 0.0;
};

/// Sinusoidal embedding of a point in [0,1)^3: per coordinate, dim/6
/// frequencies on a geometric ladder with the given base, laid out as
/// (sin, cos) pairs coordinate-major.
std::vector<double> sinusoidal_embedding(const Vec3& p, std::size_t dim, double base = 10000.0);

/// Canonical serialization: match source points to the Sobol anchors by
/// optimal transport, reorder token rows accordingly, attach anchor
/// positional embeddings.
SerializedTokens serialize(const std::vector<double>& tokens, std::size_t channels,
                           const std::vector<Vec3>& src_points, const SobolAnchors& anchors,
                           std::size_t pe_dim, double pe_base = 10000.0);

}  // namespace deg
