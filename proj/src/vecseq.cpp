#include "deg/vecseq.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace deg {

std::vector<SobolDirections> load_direction_numbers(std::istream& in) {
    std::vector<SobolDirections> dirs;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::string first;
        ls >> first;
        if (first == "d") continue;  // header row
        SobolDirections rec;
        int d = std::stoi(first);
        ls >> rec.degree >> rec.polynomial;
        std::uint32_t v;
        while (ls >> v) rec.m.push_back(v);
        if (static_cast<int>(rec.m.size()) != rec.degree)
            throw std::runtime_error("direction numbers: row for d=" + std::to_string(d) +
                                     " has " + std::to_string(rec.m.size()) + " m values, expected " +
                                     std::to_string(rec.degree));
        dirs.push_back(std::move(rec));
    }
    return dirs;
}

std::vector<SobolDirections> load_direction_numbers_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("direction numbers: cannot open " + path);
    return load_direction_numbers(in);
}

const std::vector<SobolDirections>& builtin_direction_numbers() {
    // First rows of the bundled new-joe-kuo-6 table (data/joe-kuo-d10.txt).
    static const std::vector<SobolDirections> table = {
        {1, 0, {1}},
        {2, 1, {1, 3}},
        {3, 1, {1, 3, 1}},
        {3, 2, {1, 1, 1}},
        {4, 1, {1, 1, 3, 3}},
        {4, 4, {1, 3, 5, 13}},
        {5, 2, {1, 1, 5, 5, 17}},
        {5, 4, {1, 1, 5, 5, 5}},
        {5, 7, {1, 1, 7, 11, 19}},
    };
    return table;
}

namespace {

constexpr int kSobolBits = 32;

// Direction integers v_k scaled to the top bits of a 32-bit word.
std::vector<std::uint32_t> direction_integers(const SobolDirections& rec) {
    std::vector<std::uint32_t> v(kSobolBits);
    const int s = rec.degree;
    for (int k = 0; k < kSobolBits; ++k) {
        if (k < s) {
            v[static_cast<size_t>(k)] = rec.m[static_cast<size_t>(k)] << (kSobolBits - 1 - k);
        } else {
            std::uint32_t val = v[static_cast<size_t>(k - s)] ^ (v[static_cast<size_t>(k - s)] >> s);
            for (int i = 1; i < s; ++i)
                if ((rec.polynomial >> (s - 1 - i)) & 1u) val ^= v[static_cast<size_t>(k - i)];
            v[static_cast<size_t>(k)] = val;
        }
    }
    return v;
}

std::vector<std::uint32_t> first_dimension_integers() {
    std::vector<std::uint32_t> v(kSobolBits);
    for (int k = 0; k < kSobolBits; ++k) v[static_cast<size_t>(k)] = 1u << (kSobolBits - 1 - k);
    return v;
}

}  // namespace

SobolAnchors sobol3d(int count) { return sobol3d(count, builtin_direction_numbers()); }

SobolAnchors sobol3d(int count, const std::vector<SobolDirections>& directions) {
    if (count < 1) throw std::invalid_argument("sobol3d: count must be >= 1");
    if (directions.size() < 2) throw std::invalid_argument("sobol3d: need direction numbers for dimensions 2 and 3");

    const std::vector<std::uint32_t> v[3] = {first_dimension_integers(),
                                             direction_integers(directions[0]),
                                             direction_integers(directions[1])};
    SobolAnchors anchors;
    anchors.points.reserve(static_cast<size_t>(count));
    std::uint32_t x[3] = {0, 0, 0};
    const double scale = 1.0 / 4294967296.0;  // 2^-32
    for (std::uint32_t n = 1; n <= static_cast<std::uint32_t>(count); ++n) {
        int bit = 0;
        std::uint32_t t = n;
        while (!(t & 1u)) { t >>= 1; ++bit; }  // gray-code index: lowest zero bit of n-1 == ctz(n)
        for (int dimension = 0; dimension < 3; ++dimension) x[dimension] ^= v[dimension][static_cast<size_t>(bit)];
        anchors.points.push_back(Vec3{x[0] * scale, x[1] * scale, x[2] * scale});
    }
    return anchors;
}

std::vector<std::size_t> fps(const std::vector<Vec3>& points, std::size_t count) {
    if (count > points.size()) throw std::invalid_argument("fps: requested more points than available");
    std::vector<std::size_t> selected;
    if (count == 0) return selected;
    selected.reserve(count);
    selected.push_back(0);

    std::vector<double> best(points.size(), std::numeric_limits<double>::infinity());
    std::size_t last = 0;
    while (selected.size() < count) {
        std::size_t far_idx = 0;
        double far_d = -1.0;
        for (std::size_t i = 0; i < points.size(); ++i) {
            const double d = (points[i] - points[last]).squared_norm();
            if (d < best[i]) best[i] = d;
            if (best[i] > far_d) {  // strict > breaks ties toward the lowest index
                far_d = best[i];
                far_idx = i;
            }
        }
        selected.push_back(far_idx);
        best[far_idx] = -1.0;  // never re-selected
        last = far_idx;
    }
    return selected;
}

Assignment ot_assign(const std::vector<Vec3>& sources, const std::vector<Vec3>& anchors) {
    if (sources.size() != anchors.size())
        throw std::invalid_argument("ot_assign: point sets must have equal cardinality");
    const int n = static_cast<int>(sources.size());
    Assignment result;
    if (n == 0) return result;

    // Kuhn-Munkres with potentials and shortest augmenting paths; rows are
    // anchors, columns are sources, 1-based internal indexing.
    auto cost = [&](int row, int col) {
        return (sources[static_cast<size_t>(col)] - anchors[static_cast<size_t>(row)]).squared_norm();
    };

    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(static_cast<size_t>(n) + 1, 0.0), v(static_cast<size_t>(n) + 1, 0.0);
    std::vector<int> p(static_cast<size_t>(n) + 1, 0), way(static_cast<size_t>(n) + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(static_cast<size_t>(n) + 1, inf);
        std::vector<char> used(static_cast<size_t>(n) + 1, 0);
        do {
            used[static_cast<size_t>(j0)] = 1;
            const int i0 = p[static_cast<size_t>(j0)];
            int j1 = 0;
            double delta = inf;
            for (int j = 1; j <= n; ++j) {
                if (used[static_cast<size_t>(j)]) continue;
                const double cur = cost(i0 - 1, j - 1) - u[static_cast<size_t>(i0)] - v[static_cast<size_t>(j)];
                if (cur < minv[static_cast<size_t>(j)]) {
                    minv[static_cast<size_t>(j)] = cur;
                    way[static_cast<size_t>(j)] = j0;
                }
                if (minv[static_cast<size_t>(j)] < delta) {
                    delta = minv[static_cast<size_t>(j)];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[static_cast<size_t>(j)]) {
                    u[static_cast<size_t>(p[static_cast<size_t>(j)])] += delta;
                    v[static_cast<size_t>(j)] -= delta;
                } else {
                    minv[static_cast<size_t>(j)] -= delta;
                }
            }
            j0 = j1;
        } while (p[static_cast<size_t>(j0)] != 0);
        do {
            const int j1 = way[static_cast<size_t>(j0)];
            p[static_cast<size_t>(j0)] = p[static_cast<size_t>(j1)];
            j0 = j1;
        } while (j0);
    }

    result.perm.assign(static_cast<size_t>(n), 0);
    for (int j = 1; j <= n; ++j) result.perm[static_cast<size_t>(p[static_cast<size_t>(j)]) - 1] = static_cast<size_t>(j - 1);
    for (int row = 0; row < n; ++row)
        result.total_cost += cost(row, static_cast<int>(result.perm[static_cast<size_t>(row)]));
    return result;
}

std::vector<double> sinusoidal_embedding(const Vec3& p, std::size_t dim, double base) {
    if (dim % 6 != 0 || dim == 0)
        throw std::invalid_argument("sinusoidal_embedding: dimension must be a positive multiple of 6");
    const std::size_t freqs = dim / 6;
    std::vector<double> pe(dim);
    std::size_t idx = 0;
    for (int c = 0; c < 3; ++c) {
        for (std::size_t f = 0; f < freqs; ++f) {
            const double omega = std::pow(base, -static_cast<double>(f) / static_cast<double>(freqs));
            pe[idx++] = std::sin(omega * p[c]);
            pe[idx++] = std::cos(omega * p[c]);
        }
    }
    return pe;
}

SerializedTokens serialize(const std::vector<double>& tokens, std::size_t channels,
                           const std::vector<Vec3>& src_points, const SobolAnchors& anchors,
                           std::size_t pe_dim, double pe_base) {
    const std::size_t m = src_points.size();
    if (channels == 0 || tokens.size() != m * channels)
        throw std::invalid_argument("serialize: token matrix shape does not match the point count");
    if (anchors.points.size() != m)
        throw std::invalid_argument("serialize: anchor count does not match the point count");

    const Assignment assignment = ot_assign(src_points, anchors.points);

    SerializedTokens out;
    out.channels = channels;
    out.order = assignment.perm;
    out.total_cost = assignment.total_cost;
    out.tokens.resize(m * channels);
    out.pe_dim = pe_dim;
    out.anchor_pe.resize(m * pe_dim);
    for (std::size_t j = 0; j < m; ++j) {
        const std::size_t src = assignment.perm[j];
        std::copy_n(tokens.begin() + static_cast<std::ptrdiff_t>(src * channels), channels,
                    out.tokens.begin() + static_cast<std::ptrdiff_t>(j * channels));
        const std::vector<double> pe = sinusoidal_embedding(anchors.points[j], pe_dim, pe_base);
        std::copy(pe.begin(), pe.end(), out.anchor_pe.begin() + static_cast<std::ptrdiff_t>(j * pe_dim));
    }
    return out;
}

}  // namespace deg
