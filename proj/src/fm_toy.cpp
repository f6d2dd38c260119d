#include "deg/fm_toy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "deg/adam.hpp"
#include "deg/rng.hpp"
#include "deg/vecseq.hpp"

namespace deg {

void FmConfig::validate() const {
    if (tokens < 1 || channels < 4 || hidden < 1 || batch < 1 || train_assets < 1 || val_assets < 1)
        throw std::invalid_argument("FmConfig: counts must be positive (channels >= 4)");
    if (steps < 0) throw std::invalid_argument("FmConfig: negative step count");
    if (channels % 6 != 0)
        throw std::invalid_argument("FmConfig: channels must be a multiple of 6 to carry the anchor embedding");
}

double fm_loss(const std::vector<double>& v_out, const std::vector<double>& x0,
               const std::vector<double>& eps) {
    if (v_out.size() != x0.size() || v_out.size() != eps.size())
        throw std::invalid_argument("fm_loss: shape mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < v_out.size(); ++i) {
        const double d = v_out[i] - (eps[i] - x0[i]);
        s += d * d;
    }
    return s / static_cast<double>(v_out.size());
}

std::vector<double> fm_loss_grad(const std::vector<double>& v_out, const std::vector<double>& x0,
                                 const std::vector<double>& eps) {
    if (v_out.size() != x0.size() || v_out.size() != eps.size())
        throw std::invalid_argument("fm_loss: shape mismatch");
    std::vector<double> g(v_out.size());
    const double scale = 2.0 / static_cast<double>(v_out.size());
    for (std::size_t i = 0; i < v_out.size(); ++i) g[i] = scale * (v_out[i] - (eps[i] - x0[i]));
    return g;
}

namespace {

struct AssetWithoutOrder {
    std::vector<double> tokens;
    std::vector<Vec3> points;
    std::vector<std::size_t> original;  // original row of each current row
};

AssetWithoutOrder make_asset(const FmConfig& cfg, Rng& rng) {
    const int n_clusters = static_cast<int>(rng.uniform_int(3, 5));
    std::vector<Vec3> means;
    while (static_cast<int>(means.size()) < n_clusters) {
        const Vec3 c{rng.uniform(0.15, 0.85), rng.uniform(0.15, 0.85), rng.uniform(0.15, 0.85)};
        bool ok = true;
        for (const Vec3& m : means)
            if ((m - c).norm() < 0.2) { ok = false; break; }
        if (ok) means.push_back(c);
    }
    std::vector<double> stds(static_cast<size_t>(n_clusters));
    std::vector<std::vector<double>> features(static_cast<size_t>(n_clusters));
    const int feat_dim = cfg.channels - 3;
    for (int c = 0; c < n_clusters; ++c) {
        stds[static_cast<size_t>(c)] = rng.uniform(0.02, 0.06);
        features[static_cast<size_t>(c)].resize(static_cast<size_t>(feat_dim));
        for (double& f : features[static_cast<size_t>(c)]) f = rng.uniform();
    }

    AssetWithoutOrder asset;
    asset.tokens.resize(static_cast<size_t>(cfg.tokens) * cfg.channels);
    asset.points.resize(static_cast<size_t>(cfg.tokens));
    asset.original.resize(static_cast<size_t>(cfg.tokens));
    for (int r = 0; r < cfg.tokens; ++r) {
        const int c = static_cast<int>(rng.uniform_int(0, n_clusters - 1));
        auto clamp01 = [](double v) { return std::min(0.999999, std::max(0.0, v)); };
        const Vec3 p{clamp01(means[static_cast<size_t>(c)].x + stds[static_cast<size_t>(c)] * rng.normal()),
                     clamp01(means[static_cast<size_t>(c)].y + stds[static_cast<size_t>(c)] * rng.normal()),
                     clamp01(means[static_cast<size_t>(c)].z + stds[static_cast<size_t>(c)] * rng.normal())};
        asset.points[static_cast<size_t>(r)] = p;
        double* row = asset.tokens.data() + static_cast<size_t>(r) * cfg.channels;
        row[0] = p.x;
        row[1] = p.y;
        row[2] = p.z;
        for (int f = 0; f < feat_dim; ++f) row[3 + f] = features[static_cast<size_t>(c)][static_cast<size_t>(f)];
        asset.original[static_cast<size_t>(r)] = static_cast<size_t>(r);
    }
    return asset;
}

FmAsset strip(const AssetWithoutOrder& a) {
    return FmAsset{a.tokens, a.points};
}

// Shared per-token two-layer perceptron: input (token + pe, t) -> velocity.
struct ToyModel {
    int channels;
    int hidden;
    std::vector<double> w1, b1, w2, b2;

    int input_dim() const { return channels + 1; }

    static ToyModel init(int channels, int hidden, std::uint64_t seed) {
        ToyModel m;
        m.channels = channels;
        m.hidden = hidden;
        const int in = m.input_dim();
        Rng rng(hash_mix(seed, 0xf10));
        m.w1.resize(static_cast<size_t>(hidden) * in);
        const double s1 = 1.0 / std::sqrt(static_cast<double>(in));
        for (double& w : m.w1) w = rng.normal() * s1;
        m.b1.assign(static_cast<size_t>(hidden), 0.0);
        // Zero output layer: the initial velocity field is identically zero,
        // making the initial loss independent of token order and embeddings.
        m.w2.assign(static_cast<size_t>(channels) * hidden, 0.0);
        m.b2.assign(static_cast<size_t>(channels), 0.0);
        return m;
    }

    std::size_t weight_count() const { return w1.size() + b1.size() + w2.size() + b2.size(); }

    void flatten(std::vector<double>& out) const {
        out.clear();
        out.insert(out.end(), w1.begin(), w1.end());
        out.insert(out.end(), b1.begin(), b1.end());
        out.insert(out.end(), w2.begin(), w2.end());
        out.insert(out.end(), b2.begin(), b2.end());
    }
    void unflatten(const std::vector<double>& in) {
        std::size_t o = 0;
        std::copy_n(in.begin() + static_cast<std::ptrdiff_t>(o), w1.size(), w1.begin());
        o += w1.size();
        std::copy_n(in.begin() + static_cast<std::ptrdiff_t>(o), b1.size(), b1.begin());
        o += b1.size();
        std::copy_n(in.begin() + static_cast<std::ptrdiff_t>(o), w2.size(), w2.begin());
        o += w2.size();
        std::copy_n(in.begin() + static_cast<std::ptrdiff_t>(o), b2.size(), b2.begin());
    }

    // Forward for one token; h is the post-tanh hidden state.
    void forward(const double* input, std::vector<double>& h, double* out) const {
        h.resize(static_cast<size_t>(hidden));
        const int in = input_dim();
        for (int r = 0; r < hidden; ++r) {
            double s = b1[static_cast<size_t>(r)];
            const double* row = w1.data() + static_cast<size_t>(r) * in;
            for (int c = 0; c < in; ++c) s += row[c] * input[c];
            h[static_cast<size_t>(r)] = std::tanh(s);
        }
        for (int r = 0; r < channels; ++r) {
            double s = b2[static_cast<size_t>(r)];
            const double* row = w2.data() + static_cast<size_t>(r) * hidden;
            for (int c = 0; c < hidden; ++c) s += row[c] * h[static_cast<size_t>(c)];
            out[r] = s;
        }
    }

    void backward(const double* input, const std::vector<double>& h, const double* d_out,
                  std::vector<double>& grad) const {
        const int in = input_dim();
        double* g_w1 = grad.data();
        double* g_b1 = g_w1 + w1.size();
        double* g_w2 = g_b1 + b1.size();
        double* g_b2 = g_w2 + w2.size();
        std::vector<double> d_h(static_cast<size_t>(hidden), 0.0);
        for (int r = 0; r < channels; ++r) {
            const double d = d_out[r];
            if (d == 0.0) continue;
            g_b2[r] += d;
            double* wg = g_w2 + static_cast<size_t>(r) * hidden;
            const double* wrow = w2.data() + static_cast<size_t>(r) * hidden;
            for (int c = 0; c < hidden; ++c) {
                wg[c] += d * h[static_cast<size_t>(c)];
                d_h[static_cast<size_t>(c)] += d * wrow[c];
            }
        }
        for (int r = 0; r < hidden; ++r) {
            const double hv = h[static_cast<size_t>(r)];
            const double d = d_h[static_cast<size_t>(r)] * (1.0 - hv * hv);
            if (d == 0.0) continue;
            g_b1[r] += d;
            double* wg = g_w1 + static_cast<size_t>(r) * in;
            for (int c = 0; c < in; ++c) wg[c] += d * input[c];
        }
    }
};

// Per-token evaluation noise keyed by the asset and the token's original row,
// so the (x0, eps) pairing is invariant to reordering.
void eval_noise(std::uint64_t seed, std::size_t asset, std::size_t original_row, int t_index,
                int channels, double* eps) {
    Rng rng(hash_mix(hash_mix(hash_mix(seed, 0xe7a1), asset), original_row * 131 + static_cast<std::size_t>(t_index)));
    for (int c = 0; c < channels; ++c) eps[c] = rng.normal();
}

struct VariantData {
    std::vector<FmAsset> train, val;
    std::vector<std::vector<std::size_t>> train_original, val_original;
    std::vector<double> pe;  // M x C anchor embedding, zero for the unordered variant
};

}  // namespace

FmDataset make_dataset(const FmConfig& cfg) {
    cfg.validate();
    Rng rng(hash_mix(cfg.seed, 0xda7a));
    FmDataset data;
    data.tokens = cfg.tokens;
    data.channels = cfg.channels;
    for (int i = 0; i < cfg.train_assets; ++i) data.train.push_back(strip(make_asset(cfg, rng)));
    for (int i = 0; i < cfg.val_assets; ++i) data.val.push_back(strip(make_asset(cfg, rng)));
    return data;
}

FmTrainResult train_toy(const FmConfig& cfg) {
    cfg.validate();

    // Build both the asset set and the per-variant views of it.
    Rng data_rng(hash_mix(cfg.seed, 0xda7a));
    std::vector<AssetWithoutOrder> train_raw, val_raw;
    for (int i = 0; i < cfg.train_assets; ++i) train_raw.push_back(make_asset(cfg, data_rng));
    for (int i = 0; i < cfg.val_assets; ++i) val_raw.push_back(make_asset(cfg, data_rng));

    const SobolAnchors anchors = sobol3d(cfg.tokens);
    VariantData vd;
    vd.pe.assign(static_cast<size_t>(cfg.tokens) * cfg.channels, 0.0);
    if (cfg.variant == FmVariant::kReordered) {
        for (int j = 0; j < cfg.tokens; ++j) {
            const auto pe = sinusoidal_embedding(anchors.points[static_cast<size_t>(j)],
                                                 static_cast<size_t>(cfg.channels));
            std::copy(pe.begin(), pe.end(), vd.pe.begin() + static_cast<std::ptrdiff_t>(j) * cfg.channels);
        }
    }

    auto apply_variant = [&](const AssetWithoutOrder& a, std::size_t asset_index,
                             std::vector<FmAsset>& out, std::vector<std::vector<std::size_t>>& originals) {
        FmAsset res;
        std::vector<std::size_t> orig(static_cast<size_t>(cfg.tokens));
        if (cfg.variant == FmVariant::kReordered) {
            const SerializedTokens st = serialize(a.tokens, static_cast<size_t>(cfg.channels), a.points,
                                                  anchors, static_cast<size_t>(cfg.channels));
            res.tokens = st.tokens;
            res.points.resize(static_cast<size_t>(cfg.tokens));
            for (int j = 0; j < cfg.tokens; ++j) {
                res.points[static_cast<size_t>(j)] = a.points[st.order[static_cast<size_t>(j)]];
                orig[static_cast<size_t>(j)] = a.original[st.order[static_cast<size_t>(j)]];
            }
        } else {
            // Uniform shuffle so the slot index carries no information.
            std::vector<std::size_t> perm(static_cast<size_t>(cfg.tokens));
            std::iota(perm.begin(), perm.end(), std::size_t{0});
            Rng shuffle_rng(hash_mix(hash_mix(cfg.seed, 0x5f1e), asset_index));
            for (std::size_t i = perm.size(); i > 1; --i)
                std::swap(perm[i - 1], perm[static_cast<size_t>(shuffle_rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
            res.tokens.resize(a.tokens.size());
            res.points.resize(static_cast<size_t>(cfg.tokens));
            for (int j = 0; j < cfg.tokens; ++j) {
                std::copy_n(a.tokens.begin() + static_cast<std::ptrdiff_t>(perm[static_cast<size_t>(j)]) * cfg.channels,
                            cfg.channels, res.tokens.begin() + static_cast<std::ptrdiff_t>(j) * cfg.channels);
                res.points[static_cast<size_t>(j)] = a.points[perm[static_cast<size_t>(j)]];
                orig[static_cast<size_t>(j)] = a.original[perm[static_cast<size_t>(j)]];
            }
        }
        out.push_back(std::move(res));
        originals.push_back(std::move(orig));
    };

    for (std::size_t i = 0; i < train_raw.size(); ++i) apply_variant(train_raw[i], i, vd.train, vd.train_original);
    for (std::size_t i = 0; i < val_raw.size(); ++i)
        apply_variant(val_raw[i], train_raw.size() + i, vd.val, vd.val_original);

    ToyModel model = ToyModel::init(cfg.channels, cfg.hidden, cfg.seed);

    const int m = cfg.tokens, ch = cfg.channels;
    std::vector<double> input(static_cast<size_t>(ch) + 1), h;
    std::vector<double> v_row(static_cast<size_t>(ch));

    // Deterministic validation pass: fixed time grid, noise keyed by the
    // original token row.
    const double t_grid[5] = {0.1, 0.3, 0.5, 0.7, 0.9};
    auto eval_set = [&](const std::vector<FmAsset>& assets,
                        const std::vector<std::vector<std::size_t>>& originals) {
        double total = 0.0;
        std::size_t count = 0;
        std::vector<double> eps(static_cast<size_t>(ch));
        for (std::size_t a = 0; a < assets.size(); ++a) {
            for (int ti = 0; ti < 5; ++ti) {
                const double t = t_grid[ti];
                for (int j = 0; j < m; ++j) {
                    const double* x0 = assets[a].tokens.data() + static_cast<size_t>(j) * ch;
                    eval_noise(cfg.seed, a, originals[a][static_cast<size_t>(j)], ti, ch, eps.data());
                    for (int c = 0; c < ch; ++c)
                        input[static_cast<size_t>(c)] = (1.0 - t) * x0[c] + t * eps[static_cast<size_t>(c)] +
                                                        vd.pe[static_cast<size_t>(j) * ch + c];
                    input[static_cast<size_t>(ch)] = t;
                    model.forward(input.data(), h, v_row.data());
                    for (int c = 0; c < ch; ++c) {
                        const double d = v_row[static_cast<size_t>(c)] - (eps[static_cast<size_t>(c)] - x0[c]);
                        total += d * d;
                        ++count;
                    }
                }
            }
        }
        return total / static_cast<double>(count);
    };

    FmTrainResult result;
    result.initial_val_loss = eval_set(vd.val, vd.val_original);
    result.curve.push_back({0, eval_set(vd.train, vd.train_original), result.initial_val_loss});

    Rng train_rng(hash_mix(cfg.seed, 0x7a1e));
    std::vector<double> flat, grad(model.weight_count());
    AdamOptimizer opt(cfg.lr);
    std::vector<double> eps(static_cast<size_t>(ch)), d_out(static_cast<size_t>(ch));

    double running = 0.0;
    int running_n = 0;
    for (int step = 1; step <= cfg.steps; ++step) {
        std::fill(grad.begin(), grad.end(), 0.0);
        double batch_loss = 0.0;
        const double scale = 1.0 / (static_cast<double>(cfg.batch) * m * ch);
        for (int b = 0; b < cfg.batch; ++b) {
            const std::size_t a =
                static_cast<std::size_t>(train_rng.uniform_int(0, static_cast<std::int64_t>(vd.train.size()) - 1));
            const double t = train_rng.uniform();
            for (int j = 0; j < m; ++j) {
                const double* x0 = vd.train[a].tokens.data() + static_cast<size_t>(j) * ch;
                for (int c = 0; c < ch; ++c) eps[static_cast<size_t>(c)] = train_rng.normal();
                for (int c = 0; c < ch; ++c)
                    input[static_cast<size_t>(c)] = (1.0 - t) * x0[c] + t * eps[static_cast<size_t>(c)] +
                                                    vd.pe[static_cast<size_t>(j) * ch + c];
                input[static_cast<size_t>(ch)] = t;
                model.forward(input.data(), h, v_row.data());
                for (int c = 0; c < ch; ++c) {
                    const double d = v_row[static_cast<size_t>(c)] - (eps[static_cast<size_t>(c)] - x0[c]);
                    batch_loss += d * d * scale;
                    d_out[static_cast<size_t>(c)] = 2.0 * d * scale;
                }
                model.backward(input.data(), h, d_out.data(), grad);
            }
        }
        if (!std::isfinite(batch_loss)) throw std::runtime_error("train_toy: non-finite loss at step " + std::to_string(step));
        model.flatten(flat);
        opt.step(flat, grad);
        model.unflatten(flat);

        running += batch_loss;
        ++running_n;
        if (step % cfg.eval_every == 0 || step == cfg.steps) {
            result.curve.push_back({step, running / running_n, eval_set(vd.val, vd.val_original)});
            running = 0.0;
            running_n = 0;
        }
    }
    result.final_val_loss = result.curve.back().val_loss;
    return result;
}

}  // namespace deg
