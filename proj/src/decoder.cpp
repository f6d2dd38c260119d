#include "deg/decoder.hpp"

#include <cmath>
#include <stdexcept>

#include "deg/rng.hpp"

namespace deg {

namespace {

constexpr double kPi = 3.14159265358979323846;

void fourier_features(const DecoderParams& params, const Vec3& anchor, std::vector<double>& f) {
    const Vec3 ext = params.domain.extent();
    const Vec3 n{2.0 * (anchor.x - params.domain.min.x) / ext.x - 1.0,
                 2.0 * (anchor.y - params.domain.min.y) / ext.y - 1.0,
                 2.0 * (anchor.z - params.domain.min.z) / ext.z - 1.0};
    f.resize(static_cast<size_t>(params.input_dim()));
    f[0] = n.x;
    f[1] = n.y;
    f[2] = n.z;
    std::size_t idx = 3;
    for (int b = 0; b < params.fourier_bands; ++b) {
        const double freq = kPi * static_cast<double>(1 << b);
        for (int c = 0; c < 3; ++c) {
            f[idx++] = std::sin(freq * n[c]);
            f[idx++] = std::cos(freq * n[c]);
        }
    }
}

// Forward through the MLP for one anchor; h gets tanh applied in place.
void mlp_forward(const DecoderParams& params, const std::vector<double>& f, std::vector<double>& h,
                 std::vector<double>& raw) {
    const int in = params.input_dim();
    const int hid = params.hidden;
    const int out = params.output_dim();
    h.resize(static_cast<size_t>(hid));
    raw.resize(static_cast<size_t>(out));
    for (int r = 0; r < hid; ++r) {
        double s = params.b1[static_cast<size_t>(r)];
        const double* row = params.w1.data() + static_cast<size_t>(r) * in;
        for (int c = 0; c < in; ++c) s += row[c] * f[static_cast<size_t>(c)];
        h[static_cast<size_t>(r)] = std::tanh(s);
    }
    for (int r = 0; r < out; ++r) {
        double s = params.b2[static_cast<size_t>(r)];
        const double* row = params.w2.data() + static_cast<size_t>(r) * hid;
        for (int c = 0; c < hid; ++c) s += row[c] * h[static_cast<size_t>(c)];
        raw[static_cast<size_t>(r)] = s;
    }
}

}  // namespace

DecoderParams DecoderParams::init(int fourier_bands, int hidden, int expansion, double offset_scale,
                                  double log_scale_bias, const Aabb& domain, std::uint64_t seed) {
    if (expansion < 1) throw std::invalid_argument("DecoderParams: expansion must be >= 1");
    DecoderParams p;
    p.fourier_bands = fourier_bands;
    p.hidden = hidden;
    p.expansion = expansion;
    p.offset_scale = offset_scale;
    p.log_scale_bias = log_scale_bias;
    p.domain = domain;

    const int in = p.input_dim();
    const int out = p.output_dim();
    Rng rng(hash_mix(seed, 0xdec0de));
    p.w1.resize(static_cast<size_t>(hidden) * in);
    p.b1.assign(static_cast<size_t>(hidden), 0.0);
    p.w2.resize(static_cast<size_t>(out) * hidden);
    p.b2.assign(static_cast<size_t>(out), 0.0);
    const double s1 = 1.0 / std::sqrt(static_cast<double>(in));
    for (auto& w : p.w1) w = rng.normal() * s1;
    // Small output weights keep freshly decoded primitives close to their anchors.
    const double s2 = 0.1 / std::sqrt(static_cast<double>(hidden));
    for (auto& w : p.w2) w = rng.normal() * s2;
    return p;
}

std::size_t DecoderParams::weight_count() const {
    return w1.size() + b1.size() + w2.size() + b2.size();
}

void DecoderParams::flatten(std::vector<double>& out) const {
    out.clear();
    out.reserve(weight_count());
    out.insert(out.end(), w1.begin(), w1.end());
    out.insert(out.end(), b1.begin(), b1.end());
    out.insert(out.end(), w2.begin(), w2.end());
    out.insert(out.end(), b2.begin(), b2.end());
}

void DecoderParams::unflatten(const std::vector<double>& in) {
    if (in.size() != weight_count()) throw std::invalid_argument("DecoderParams: weight vector size mismatch");
    std::size_t o = 0;
    std::copy_n(in.begin() + static_cast<std::ptrdiff_t>(o), w1.size(), w1.begin());
    o += w1.size();
    std::copy_n(in.begin() + static_cast<std::ptrdiff_t>(o), b1.size(), b1.begin());
    o += b1.size();
    std::copy_n(in.begin() + static_cast<std::ptrdiff_t>(o), w2.size(), w2.begin());
    o += w2.size();
    std::copy_n(in.begin() + static_cast<std::ptrdiff_t>(o), b2.size(), b2.begin());
}

DecodeResult decode(const AnchorSet& anchors, const DecoderParams& params) {
    DecodeResult result;
    const int k = params.expansion;
    result.scene.primitives.reserve(anchors.size() * static_cast<size_t>(k));
    result.offsets.reserve(anchors.size() * static_cast<size_t>(k));

    std::vector<double> f, h, raw;
    for (std::size_t i = 0; i < anchors.size(); ++i) {
        fourier_features(params, anchors.positions[i], f);
        mlp_forward(params, f, h, raw);
        for (int kk = 0; kk < k; ++kk) {
            const double* r = raw.data() + static_cast<size_t>(kk) * 14;
            GaussianPrimitive g;
            const Vec3 offset{params.offset_scale * std::tanh(r[0]),
                              params.offset_scale * std::tanh(r[1]),
                              params.offset_scale * std::tanh(r[2])};
            g.center = anchors.positions[i] + offset;
            g.log_scale = {r[3] + params.log_scale_bias, r[4] + params.log_scale_bias,
                           r[5] + params.log_scale_bias};
            g.rotation = normalized(Vec4{r[6] + 1.0, r[7], r[8], r[9]});
            g.opacity_logit = r[10];
            g.color = {logistic(r[11]), logistic(r[12]), logistic(r[13])};
            const std::size_t prim = result.scene.primitives.size();
            result.scene.anchor_of[prim] = i;
            result.scene.primitives.push_back(g);
            result.offsets.push_back(offset);
        }
    }
    return result;
}

std::vector<double> decode_backward(const AnchorSet& anchors, const DecoderParams& params,
                                    const ParamGrads& scene_grads, const std::vector<Vec3>& offset_grads) {
    const int k = params.expansion;
    const std::size_t n = anchors.size() * static_cast<size_t>(k);
    if (scene_grads.d_center.size() != n)
        throw std::invalid_argument("decode_backward: gradient shape does not match anchors * expansion");
    if (!offset_grads.empty() && offset_grads.size() != n)
        throw std::invalid_argument("decode_backward: offset gradient shape mismatch");

    const int in = params.input_dim();
    const int hid = params.hidden;
    const int out = params.output_dim();

    std::vector<double> grad(params.weight_count(), 0.0);
    double* g_w1 = grad.data();
    double* g_b1 = g_w1 + params.w1.size();
    double* g_w2 = g_b1 + params.b1.size();
    double* g_b2 = g_w2 + params.w2.size();

    std::vector<double> f, h, raw, d_raw(static_cast<size_t>(out)), d_h(static_cast<size_t>(hid));
    for (std::size_t i = 0; i < anchors.size(); ++i) {
        fourier_features(params, anchors.positions[i], f);
        mlp_forward(params, f, h, raw);

        for (int kk = 0; kk < k; ++kk) {
            const std::size_t prim = i * static_cast<size_t>(k) + static_cast<size_t>(kk);
            const double* r = raw.data() + static_cast<size_t>(kk) * 14;
            double* dr = d_raw.data() + static_cast<size_t>(kk) * 14;

            Vec3 d_off = scene_grads.d_center[prim];
            if (!offset_grads.empty()) d_off += offset_grads[prim];
            for (int c = 0; c < 3; ++c) {
                const double t = std::tanh(r[c]);
                dr[c] = d_off[c] * params.offset_scale * (1.0 - t * t);
            }
            dr[3] = scene_grads.d_log_scale[prim].x;
            dr[4] = scene_grads.d_log_scale[prim].y;
            dr[5] = scene_grads.d_log_scale[prim].z;

            // rotation = normalize(raw + e_w); project the upstream gradient
            // onto the tangent space as in quat_rotation_backward.
            const Vec4 v{r[6] + 1.0, r[7], r[8], r[9]};
            const double vn = v.norm();
            const Vec4 q = v * (1.0 / vn);
            const Vec4& dq = scene_grads.d_rotation[prim];
            const double dot = dq.dot(q);
            const Vec4 dv = (dq - q * dot) * (1.0 / vn);
            dr[6] = dv.w;
            dr[7] = dv.x;
            dr[8] = dv.y;
            dr[9] = dv.z;

            dr[10] = scene_grads.d_opacity_logit[prim];
            for (int c = 0; c < 3; ++c) {
                const double s = logistic(r[11 + c]);
                dr[11 + c] = scene_grads.d_color[prim][c] * s * (1.0 - s);
            }
        }

        // Backprop through the two layers.
        std::fill(d_h.begin(), d_h.end(), 0.0);
        for (int row = 0; row < out; ++row) {
            const double d = d_raw[static_cast<size_t>(row)];
            if (d == 0.0) continue;
            g_b2[row] += d;
            double* w2g = g_w2 + static_cast<size_t>(row) * hid;
            const double* w2row = params.w2.data() + static_cast<size_t>(row) * hid;
            for (int c = 0; c < hid; ++c) {
                w2g[c] += d * h[static_cast<size_t>(c)];
                d_h[static_cast<size_t>(c)] += d * w2row[c];
            }
        }
        for (int row = 0; row < hid; ++row) {
            const double hv = h[static_cast<size_t>(row)];
            const double d = d_h[static_cast<size_t>(row)] * (1.0 - hv * hv);
            if (d == 0.0) continue;
            g_b1[row] += d;
            double* w1g = g_w1 + static_cast<size_t>(row) * in;
            for (int c = 0; c < in; ++c) w1g[c] += d * f[static_cast<size_t>(c)];
        }
    }
    return grad;
}

OffsetRegResult offset_reg(const AnchorSet& anchors, const std::vector<Vec3>& offsets, int expansion,
                           double gamma) {
    const std::size_t p = anchors.size();
    const int k = expansion;
    if (offsets.size() != p * static_cast<size_t>(k))
        throw std::invalid_argument("offset_reg: offsets size does not match anchors * expansion");

    OffsetRegResult result;
    result.d_offsets.assign(offsets.size(), Vec3{});
    if (p == 0) return result;

    std::vector<Vec3> mean_offset(p, Vec3{});
    std::vector<double> spread(p, 0.0);
    for (std::size_t i = 0; i < p; ++i) {
        double sq = 0.0;
        for (int kk = 0; kk < k; ++kk) {
            const Vec3& d = offsets[i * static_cast<size_t>(k) + static_cast<size_t>(kk)];
            mean_offset[i] += d;
            sq += d.squared_norm();
        }
        mean_offset[i] *= 1.0 / k;
        spread[i] = std::sqrt(sq / k);
    }

    const double inv_p = 1.0 / static_cast<double>(p);
    const double inv_p2 = inv_p * inv_p;

    // Centering: mean_i ReLU(|mean offset| - gamma * spread).
    std::vector<double> d_spread(p, 0.0);
    for (std::size_t i = 0; i < p; ++i) {
        const double mnorm = mean_offset[i].norm();
        const double arg = mnorm - gamma * spread[i];
        if (arg > 0.0) {
            result.value += inv_p * arg;
            if (mnorm > 0.0) {
                const Vec3 dir = mean_offset[i] * (1.0 / mnorm);
                for (int kk = 0; kk < k; ++kk)
                    result.d_offsets[i * static_cast<size_t>(k) + static_cast<size_t>(kk)] += dir * (inv_p / k);
            }
            d_spread[i] -= inv_p * gamma;
        }
    }

    // Separation: (1/P^2) sum_i sum_{j != i} ReLU(spread_i - |x_i - x_j|).
    for (std::size_t i = 0; i < p; ++i) {
        for (std::size_t j = 0; j < p; ++j) {
            if (i == j) continue;
            const double dist = (anchors.positions[i] - anchors.positions[j]).norm();
            const double arg = spread[i] - dist;
            if (arg > 0.0) {
                result.value += inv_p2 * arg;
                d_spread[i] += inv_p2;
            }
        }
    }

    for (std::size_t i = 0; i < p; ++i) {
        if (d_spread[i] == 0.0 || spread[i] <= 0.0) continue;
        const double c = d_spread[i] / (k * spread[i]);
        for (int kk = 0; kk < k; ++kk) {
            const std::size_t idx = i * static_cast<size_t>(k) + static_cast<size_t>(kk);
            result.d_offsets[idx] += offsets[idx] * c;
        }
    }
    return result;
}

VolumeOpacityRegResult volume_opacity_reg(const Scene& scene, double lambda1, double lambda2) {
    VolumeOpacityRegResult result;
    const std::size_t n = scene.size();
    result.grads.resize(n);
    if (n == 0) return result;
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        const GaussianPrimitive& g = scene.primitives[i];
        const double volume = std::exp(g.log_scale.x + g.log_scale.y + g.log_scale.z);
        const double alpha = g.opacity();
        result.value += inv_n * (lambda1 * volume + lambda2 * (1.0 - alpha));
        const double dv = lambda1 * volume * inv_n;
        result.grads.d_log_scale[i] = {dv, dv, dv};
        result.grads.d_opacity_logit[i] = -lambda2 * alpha * (1.0 - alpha) * inv_n;
    }
    return result;
}

}  // namespace deg
