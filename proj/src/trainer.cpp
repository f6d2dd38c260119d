#include "deg/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <map>
#include <stdexcept>

#include "deg/adam.hpp"
#include "deg/density_control.hpp"
#include "deg/rng.hpp"

namespace deg {

void FitConfig::validate() const {
    if (lambda_kl != 0.0)
        throw std::invalid_argument("FitConfig: lambda_kl is out of scope for this build and must stay 0");
    if (lambda_lpips != 0.0)
        throw std::invalid_argument("FitConfig: lambda_lpips is out of scope for this build and must stay 0");
    for (double v : {lambda_struct, lambda_render, lambda_reg, lambda_ssim, lambda1, lambda2, lambda_offset})
        if (v < 0.0) throw std::invalid_argument("FitConfig: loss weights must be nonnegative");
    if (anchors_min < 1 || anchors_min > anchors_max)
        throw std::invalid_argument("FitConfig: need 1 <= anchors_min <= anchors_max");
    if (levels < 1) throw std::invalid_argument("FitConfig: levels must be >= 1");
    if (expansion < 1) throw std::invalid_argument("FitConfig: expansion must be >= 1");
    if (stage1_iters < 0 || stage2_iters < 0 || stage3_iters < 0)
        throw std::invalid_argument("FitConfig: negative iteration count");
}

RenderLossResult render_loss(const Image& img, const Image& target, const FitConfig& cfg) {
    if (img.width != target.width || img.height != target.height)
        throw std::invalid_argument("render_loss: image sizes differ");
    RenderLossResult result;
    result.grad = Image(img.width, img.height);
    const double inv = 1.0 / static_cast<double>(img.pixels.size());
    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
        const double d = img.pixels[i] - target.pixels[i];
        result.l1 += std::abs(d) * inv;
        result.grad.pixels[i] = (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0)) * inv;
    }
    if (cfg.lambda_ssim > 0.0) {
        const SsimResult s = ssim(img, target);
        result.ssim_loss = 1.0 - s.value;
        for (std::size_t i = 0; i < img.pixels.size(); ++i)
            result.grad.pixels[i] -= cfg.lambda_ssim * s.grad.pixels[i];
    }
    result.total = result.l1 + cfg.lambda_ssim * result.ssim_loss;
    return result;
}

double psnr(const Image& img, const Image& target) {
    if (img.width != target.width || img.height != target.height)
        throw std::invalid_argument("psnr: image sizes differ");
    double mse = 0.0;
    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
        const double d = img.pixels[i] - target.pixels[i];
        mse += d * d;
    }
    mse /= static_cast<double>(img.pixels.size());
    if (mse <= 0.0) return 99.0;
    return std::min(99.0, 10.0 * std::log10(1.0 / mse));
}

namespace {

// Adam over lazily instantiated octree cells. Each cell keeps its own step
// counter so late-created cells are bias-corrected correctly.
class LogitAdam {
public:
    explicit LogitAdam(double lr) : lr_(lr) {}

    void step(SparseLogits& logits, const SparseLogits& grads) {
        for (std::size_t l = 0; l < grads.levels.size(); ++l) {
            for (const auto& [path, g] : grads.levels[l]) {
                auto& cell = logits.cell(static_cast<int>(l), path);
                State& st = state_[key(l, path)];
                ++st.t;
                const double bc1 = 1.0 - std::pow(0.9, st.t);
                const double bc2 = 1.0 - std::pow(0.999, st.t);
                for (int k = 0; k < 8; ++k) {
                    st.m[k] = 0.9 * st.m[k] + 0.1 * g[static_cast<size_t>(k)];
                    st.v[k] = 0.999 * st.v[k] + 0.001 * g[static_cast<size_t>(k)] * g[static_cast<size_t>(k)];
                    cell[static_cast<size_t>(k)] -= lr_ * (st.m[k] / bc1) / (std::sqrt(st.v[k] / bc2) + 1e-8);
                }
            }
        }
    }

private:
    struct State {
        std::array<double, 8> m{}, v{};
        int t = 0;
    };
    static std::uint64_t key(std::size_t level, std::uint64_t path) { return (path << 5) | level; }
    double lr_;
    std::map<std::uint64_t, State> state_;
};

void accumulate(SparseLogits& into, const SparseLogits& from, double weight) {
    if (weight == 0.0) return;
    for (std::size_t l = 0; l < from.levels.size(); ++l)
        for (const auto& [path, g] : from.levels[l]) {
            auto& cell = into.cell(static_cast<int>(l), path);
            for (int k = 0; k < 8; ++k) cell[static_cast<size_t>(k)] += weight * g[static_cast<size_t>(k)];
        }
}

double abs_sum(const SparseLogits& g) {
    double s = 0.0;
    for (const auto& level : g.levels)
        for (const auto& [path, cell] : level)
            for (double v : cell) s += std::abs(v);
    return s;
}

struct AutoParams {
    double offset_scale;
    double log_scale_bias;
};

AutoParams resolve_auto(const FitConfig& cfg, const Aabb& domain) {
    const double leaf_edge = domain.extent().x / static_cast<double>(std::uint64_t(1) << cfg.levels);
    AutoParams a;
    a.offset_scale = cfg.offset_scale > 0.0 ? cfg.offset_scale : 2.0 * leaf_edge;
    a.log_scale_bias = cfg.log_scale_bias != 0.0 ? cfg.log_scale_bias : std::log(0.75 * leaf_edge);
    return a;
}

void check_finite(double value, const char* what, int iter, const IterationLog& row) {
    if (std::isfinite(value)) return;
    std::cerr << "fit: non-finite " << what << " at iteration " << iter << "\n"
              << fit_log_header() << "\n"
              << fit_log_row(row) << std::endl;
    throw std::runtime_error(std::string("fit: non-finite ") + what + " at iteration " +
                             std::to_string(iter));
}

}  // namespace

FitResult fit(const FitConfig& cfg, const TargetSet& targets) {
    cfg.validate();
    if (targets.view_count() < 2) throw std::invalid_argument("fit: need at least 2 target views");
    if (targets.images.size() != targets.cameras.size())
        throw std::invalid_argument("fit: camera/image count mismatch");

    const AutoParams autop = resolve_auto(cfg, targets.domain);

    FitResult result;
    result.model.density = OctreeDensity(cfg.levels, targets.domain);
    result.model.decoder = DecoderParams::init(cfg.fourier_bands, cfg.hidden, cfg.expansion,
                                               autop.offset_scale, autop.log_scale_bias,
                                               targets.domain, cfg.seed);

    const TargetHistogram hist = histogram_from_points(targets.points, cfg.levels, targets.domain);

    LogitAdam logit_opt(cfg.lr_logits);
    AdamOptimizer decoder_opt(cfg.lr_decoder);
    Rng rng(hash_mix(cfg.seed, 0xf17));

    std::vector<double> decoder_flat;
    int iter = 0;

    // Stage 1: structural initialization, cross-entropy only.
    for (int s = 0; s < cfg.stage1_iters; ++s, ++iter) {
        CeResult ce = ce_loss(result.model.density, hist);
        IterationLog row;
        row.iter = iter;
        row.stage = 1;
        row.ce = ce.value;
        row.total = cfg.lambda_struct * ce.value;
        check_finite(row.total, "loss", iter, row);
        logit_opt.step(result.model.density.logits, ce.grads);
        result.log.push_back(row);
    }

    // Stages 2 and 3 share one render step; stage 2 freezes the density to the
    // CE signal and uses a fixed small anchor budget.
    auto render_step = [&](int stage, int s) {
        const int budget = stage == 2 ? cfg.anchors_stage2
                                      : static_cast<int>(rng.uniform_int(cfg.anchors_min, cfg.anchors_max));
        const AnchorSet anchors = sample_anchors(result.model.density, budget, rng.next_u64());
        DecodeResult decoded = decode(anchors, result.model.decoder);

        const int view = static_cast<int>(rng.uniform_int(0, static_cast<std::int64_t>(targets.view_count()) - 1));
        const Camera& cam = targets.cameras[static_cast<size_t>(view)];
        const Image& target = targets.images[static_cast<size_t>(view)];

        const RenderOutput out = render(decoded.scene, cam, cfg.render);
        const RenderLossResult rl = render_loss(out.image, target, cfg);

        IterationLog row;
        row.iter = iter;
        row.stage = stage;
        row.view = view;
        row.anchors = budget;
        row.l1 = rl.l1;
        row.ssim_loss = rl.ssim_loss;
        row.render = rl.total;

        // Regularizers on the decoded primitives.
        const VolumeOpacityRegResult vo = volume_opacity_reg(decoded.scene, cfg.lambda1, cfg.lambda2);
        const OffsetRegResult off = offset_reg(anchors, decoded.offsets, cfg.expansion, cfg.gamma);
        row.reg = vo.value + cfg.lambda_offset * off.value;

        // Cross-entropy keeps anchoring the density in both stages.
        CeResult ce = ce_loss(result.model.density, hist);
        row.ce = ce.value;

        const bool use_reward = stage == 3 && cfg.render_gradient_enabled;
        SparseLogits logit_grads(cfg.levels);
        accumulate(logit_grads, ce.grads, cfg.lambda_struct);

        FusedBackwardResult fused;
        if (use_reward) {
            fused = backward_with_contributions(decoded.scene, cam, out, rl.grad, target, cfg.render);
            std::vector<double> raw = group_by_anchor(fused.contributions, decoded.scene.anchor_of,
                                                      anchors.size());
            if (cfg.normalize_rewards)
                for (double& r : raw) r /= static_cast<double>(anchors.size());
            const std::vector<double> clamped = clamp_rewards(raw);
            for (std::size_t j = 0; j < anchors.size(); ++j)
                row.surrogate += clamped[j] * anchors.log_prob[j];
            const SparseLogits score = density_gradient(anchors, clamped, result.model.density);
            result.score_grad_abs_sum += abs_sum(score);
            accumulate(logit_grads, score, cfg.lambda_render);
        } else {
            fused.grads = backward(decoded.scene, cam, out, rl.grad, cfg.render);
        }

        row.total = cfg.lambda_struct * row.ce + cfg.lambda_render * (row.render + row.surrogate) +
                    cfg.lambda_reg * row.reg;
        check_finite(row.total, "loss", iter, row);

        // Decoder gradient: lambda_render * render backward + lambda_reg * regularizers.
        ParamGrads combined = fused.grads;
        const std::size_t n = decoded.scene.size();
        std::vector<Vec3> offset_grads(n);
        for (std::size_t i = 0; i < n; ++i) {
            combined.d_center[i] *= cfg.lambda_render;
            combined.d_log_scale[i] = combined.d_log_scale[i] * cfg.lambda_render +
                                      vo.grads.d_log_scale[i] * cfg.lambda_reg;
            combined.d_rotation[i] = combined.d_rotation[i] * cfg.lambda_render;
            combined.d_opacity_logit[i] = combined.d_opacity_logit[i] * cfg.lambda_render +
                                          vo.grads.d_opacity_logit[i] * cfg.lambda_reg;
            combined.d_color[i] = combined.d_color[i] * cfg.lambda_render;
            offset_grads[i] = off.d_offsets[i] * (cfg.lambda_reg * cfg.lambda_offset);
        }
        const std::vector<double> wgrads =
            decode_backward(anchors, result.model.decoder, combined, offset_grads);

        result.model.decoder.flatten(decoder_flat);
        decoder_opt.step(decoder_flat, wgrads);
        result.model.decoder.unflatten(decoder_flat);
        logit_opt.step(result.model.density.logits, logit_grads);
        result.log.push_back(row);
        (void)s;
    };

    for (int s = 0; s < cfg.stage2_iters; ++s, ++iter) render_step(2, s);
    for (int s = 0; s < cfg.stage3_iters; ++s, ++iter) render_step(3, s);

    return result;
}

EvalResult evaluate(const FittedModel& model, const TargetSet& targets, int anchor_budget,
                    std::uint64_t seed, const RenderSettings& settings) {
    const AnchorSet anchors = sample_anchors(model.density, anchor_budget, seed);
    const DecodeResult decoded = decode(anchors, model.decoder);
    EvalResult result;
    for (std::size_t v = 0; v < targets.view_count(); ++v) {
        const RenderOutput out = render(decoded.scene, targets.cameras[v], settings);
        result.psnr_per_view.push_back(psnr(out.image, targets.images[v]));
        result.ssim_per_view.push_back(ssim_value(out.image, targets.images[v]));
    }
    for (double v : result.psnr_per_view) result.mean_psnr += v;
    for (double v : result.ssim_per_view) result.mean_ssim += v;
    if (!result.psnr_per_view.empty()) {
        result.mean_psnr /= static_cast<double>(result.psnr_per_view.size());
        result.mean_ssim /= static_cast<double>(result.ssim_per_view.size());
    }
    return result;
}

std::string fit_log_header() {
    return "iter,stage,view,anchors,ce,l1,ssim,render,surrogate,reg,total";
}

std::string fit_log_row(const IterationLog& r) {
    char buf[512];
    std::snprintf(buf, sizeof(buf), "%d,%d,%d,%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g", r.iter,
                  r.stage, r.view, r.anchors, r.ce, r.l1, r.ssim_loss, r.render, r.surrogate, r.reg,
                  r.total);
    return buf;
}

}  // namespace deg
