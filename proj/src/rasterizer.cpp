#include "deg/rasterizer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace deg {

void ParamGrads::resize(std::size_t n) {
    d_center.assign(n, Vec3{});
    d_log_scale.assign(n, Vec3{});
    d_rotation.assign(n, Vec4{0, 0, 0, 0});
    d_opacity_logit.assign(n, 0.0);
    d_color.assign(n, Vec3{});
}

bool ParamGrads::all_finite() const {
    auto fin3 = [](const Vec3& v) { return std::isfinite(v.x) && std::isfinite(v.y) && std::isfinite(v.z); };
    for (const auto& v : d_center)
        if (!fin3(v)) return false;
    for (const auto& v : d_log_scale)
        if (!fin3(v)) return false;
    for (const auto& v : d_color)
        if (!fin3(v)) return false;
    for (const auto& q : d_rotation)
        if (!(std::isfinite(q.w) && std::isfinite(q.x) && std::isfinite(q.y) && std::isfinite(q.z))) return false;
    for (double v : d_opacity_logit)
        if (!std::isfinite(v)) return false;
    return true;
}

double l1_mean(const Image& a, const Image& b) {
    if (a.width != b.width || a.height != b.height)
        throw std::invalid_argument("l1_mean: image sizes differ");
    double s = 0.0;
    for (std::size_t i = 0; i < a.pixels.size(); ++i) s += std::abs(a.pixels[i] - b.pixels[i]);
    return s / static_cast<double>(a.pixels.size());
}

namespace {

struct ProjectedSplat {
    std::uint32_t index;
    Splat2D splat;
    Mat2Sym conic;  // inverse of cov2d
    int x0, x1, y0, y1;  // inclusive pixel bounds, empty when x0 > x1
};

// Conservative pixel bounds of the region where alpha can reach the cutoff.
void splat_bounds(const Splat2D& s, double alpha_cutoff, int width, int height, ProjectedSplat& out) {
    double radius;
    if (alpha_cutoff > 0.0 && s.opacity > alpha_cutoff) {
        radius = std::sqrt(2.0 * s.cov2d.max_eigenvalue() * std::log(s.opacity / alpha_cutoff));
    } else if (alpha_cutoff > 0.0) {
        out.x0 = 1; out.x1 = 0; out.y0 = 1; out.y1 = 0;  // never reaches the cutoff
        return;
    } else {
        out.x0 = 0; out.x1 = width - 1; out.y0 = 0; out.y1 = height - 1;
        return;
    }
    // Pixel centers sit at integer + 0.5.
    out.x0 = std::max(0, static_cast<int>(std::floor(s.mean2d.x - radius - 0.5)));
    out.x1 = std::min(width - 1, static_cast<int>(std::ceil(s.mean2d.x + radius - 0.5)));
    out.y0 = std::max(0, static_cast<int>(std::floor(s.mean2d.y - radius - 0.5)));
    out.y1 = std::min(height - 1, static_cast<int>(std::ceil(s.mean2d.y + radius - 0.5)));
}

std::vector<ProjectedSplat> project_visible(const Scene& scene, const Camera& cam,
                                            const RenderSettings& settings,
                                            std::vector<std::uint32_t>* sorted_order) {
    std::vector<ProjectedSplat> splats;
    splats.reserve(scene.size());
    for (std::uint32_t i = 0; i < scene.size(); ++i) {
        auto p = project_gaussian(scene.primitives[i], cam);
        if (!p) continue;
        ProjectedSplat ps;
        ps.index = i;
        ps.splat = *p;
        ps.conic = p->cov2d.inverse();
        splat_bounds(*p, settings.alpha_cutoff, cam.width, cam.height, ps);
        splats.push_back(ps);
    }
    std::stable_sort(splats.begin(), splats.end(),
                     [](const ProjectedSplat& a, const ProjectedSplat& b) { return a.splat.depth < b.splat.depth; });
    if (sorted_order) {
        sorted_order->clear();
        for (const auto& s : splats) sorted_order->push_back(s.index);
    }
    return splats;
}

// Front-to-back compositing of a pixel's hit list in scalar type T. Returns
// the index one past the last composited hit (early stop truncation point).
template <typename T>
std::size_t composite_pixel(const std::vector<PixelHit>& hits, const std::vector<ProjectedSplat>& by_index,
                            const Vec3& background, const RenderSettings& settings, T rgb[3], T& transmittance) {
    T t = T(1);
    rgb[0] = rgb[1] = rgb[2] = T(0);
    std::size_t n = hits.size();
    std::size_t composited = 0;
    for (std::size_t k = 0; k < n; ++k) {
        const T a = static_cast<T>(hits[k].alpha);
        const Vec3& c = by_index[hits[k].primitive].splat.color;
        rgb[0] += t * a * static_cast<T>(c.x);
        rgb[1] += t * a * static_cast<T>(c.y);
        rgb[2] += t * a * static_cast<T>(c.z);
        t *= (T(1) - a);
        ++composited;
        if (settings.early_stop && t < static_cast<T>(settings.transmittance_stop)) break;
    }
    rgb[0] += t * static_cast<T>(background.x);
    rgb[1] += t * static_cast<T>(background.y);
    rgb[2] += t * static_cast<T>(background.z);
    transmittance = t;
    return composited;
}

}  // namespace

RenderOutput render(const Scene& scene, const Camera& cam, const RenderSettings& settings) {
    cam.validate();
    RenderOutput out;
    out.image = Image(cam.width, cam.height);
    const std::size_t npix = static_cast<std::size_t>(cam.width) * cam.height;
    out.final_transmittance.assign(npix, 1.0);
    out.per_pixel_hits.assign(npix, {});

    std::vector<ProjectedSplat> splats = project_visible(scene, cam, settings, &out.sorted_order);

    // Index the projected splats by primitive id for color lookup.
    std::vector<ProjectedSplat> by_index(scene.size());
    for (const auto& s : splats) by_index[s.index] = s;

    // Bin hits per pixel; the outer loop is depth-sorted, so each per-pixel
    // list ends up in compositing order.
    for (const auto& s : splats) {
        for (int y = s.y0; y <= s.y1; ++y) {
            for (int x = s.x0; x <= s.x1; ++x) {
                const double a = alpha_at(s.splat, Vec2(x + 0.5, y + 0.5));
                if (a < settings.alpha_cutoff || a <= 0.0) continue;
                out.per_pixel_hits[static_cast<std::size_t>(y) * cam.width + x].push_back({s.index, a});
            }
        }
    }

    for (std::size_t p = 0; p < npix; ++p) {
        auto& hits = out.per_pixel_hits[p];
        std::size_t kept;
        if (settings.precision == Precision::kHigh) {
            double rgb[3], t;
            kept = composite_pixel<double>(hits, by_index, scene.background, settings, rgb, t);
            out.image.pixels[p * 3 + 0] = rgb[0];
            out.image.pixels[p * 3 + 1] = rgb[1];
            out.image.pixels[p * 3 + 2] = rgb[2];
            out.final_transmittance[p] = t;
        } else {
            float rgb[3], t;
            kept = composite_pixel<float>(hits, by_index, scene.background, settings, rgb, t);
            out.image.pixels[p * 3 + 0] = rgb[0];
            out.image.pixels[p * 3 + 1] = rgb[1];
            out.image.pixels[p * 3 + 2] = rgb[2];
            out.final_transmittance[p] = t;
        }
        // Hits past the early-stop point were never composited; drop them so
        // the stored lists always recompose to the image exactly.
        if (kept < hits.size()) hits.resize(kept);
    }
    return out;
}

namespace {

void check_buffers(const Camera& cam, const RenderOutput& out) {
    const std::size_t npix = static_cast<std::size_t>(cam.width) * cam.height;
    if (out.image.width != cam.width || out.image.height != cam.height ||
        out.final_transmittance.size() != npix || out.per_pixel_hits.size() != npix)
        throw std::invalid_argument("backward: render output buffers do not match the camera");
}

FusedBackwardResult backward_with_contributions_impl(const Scene& scene, const Camera& cam,
                                                     const RenderOutput& out, const Image* grad_image,
                                                     const Image* target, const RenderSettings& settings) {
    cam.validate();
    check_buffers(cam, out);
    if (grad_image && (grad_image->width != cam.width || grad_image->height != cam.height))
        throw std::invalid_argument("backward: grad_image size does not match the camera");
    if (target && (target->width != cam.width || target->height != cam.height))
        throw std::invalid_argument("contribution_pass: target size does not match the camera");

    const std::size_t n = scene.size();
    const std::size_t npix = static_cast<std::size_t>(cam.width) * cam.height;
    const double inv_count = 1.0 / static_cast<double>(npix * 3);

    FusedBackwardResult result;
    result.grads.resize(n);
    result.contributions.delta_l1.assign(n, 0.0);

    // Screen-space accumulators, folded through the projection backward once
    // per primitive at the end.
    std::vector<Vec2> d_mean2d(n, Vec2{});
    std::vector<Mat2Sym> d_cov2d(n, Mat2Sym{});

    std::vector<ProjectedSplat> by_index(n);
    {
        std::vector<ProjectedSplat> splats = project_visible(scene, cam, settings, nullptr);
        for (const auto& s : splats) by_index[s.index] = s;
    }

    for (std::size_t p = 0; p < npix; ++p) {
        const auto& hits = out.per_pixel_hits[p];
        if (hits.empty()) continue;
        const int px = static_cast<int>(p % cam.width);
        const int py = static_cast<int>(p / cam.width);
        const Vec2 pix(px + 0.5, py + 0.5);

        double g[3] = {0, 0, 0};
        if (grad_image) {
            g[0] = grad_image->pixels[p * 3 + 0];
            g[1] = grad_image->pixels[p * 3 + 1];
            g[2] = grad_image->pixels[p * 3 + 2];
        }
        double resid[3] = {0, 0, 0};
        if (target) {
            resid[0] = out.image.pixels[p * 3 + 0] - target->pixels[p * 3 + 0];
            resid[1] = out.image.pixels[p * 3 + 1] - target->pixels[p * 3 + 1];
            resid[2] = out.image.pixels[p * 3 + 2] - target->pixels[p * 3 + 2];
        }

        // Walk hits back to front. S is the un-normalized color behind the
        // current hit (deeper hits plus background), T_next the transmittance
        // just after it.
        double t_next = out.final_transmittance[p];
        double s_acc[3] = {t_next * scene.background.x, t_next * scene.background.y,
                           t_next * scene.background.z};
        for (std::size_t kk = hits.size(); kk-- > 0;) {
            const std::uint32_t i = hits[kk].primitive;
            const double alpha = hits[kk].alpha;
            const double one_minus = 1.0 - alpha;
            const double t_k = t_next / one_minus;
            const ProjectedSplat& ps = by_index[i];
            const Vec3& c = ps.splat.color;

            if (target) {
                // back color = normalized composite behind i; t_next > 0
                // because alpha is clamped below 1.
                const double inv_tn = 1.0 / t_next;
                const double ta = t_k * alpha;
                double delta = 0.0;
                for (int ch = 0; ch < 3; ++ch) {
                    const double cch = ch == 0 ? c.x : (ch == 1 ? c.y : c.z);
                    const double dc = ta * (cch - s_acc[ch] * inv_tn);
                    delta += std::abs(resid[ch]) - std::abs(resid[ch] - dc);
                }
                result.contributions.delta_l1[i] += delta * inv_count;
            }

            if (grad_image) {
                const double ta = t_k * alpha;
                result.grads.d_color[i] += Vec3(g[0] * ta, g[1] * ta, g[2] * ta);

                double d_alpha = 0.0;
                d_alpha += g[0] * (t_k * c.x - s_acc[0] / one_minus);
                d_alpha += g[1] * (t_k * c.y - s_acc[1] / one_minus);
                d_alpha += g[2] * (t_k * c.z - s_acc[2] / one_minus);

                // alpha = min(kAlphaMax, opacity * G); the clamp gates all
                // gradients through opacity and the Gaussian kernel.
                if (alpha < kAlphaMax) {
                    const double opacity = ps.splat.opacity;
                    const double gauss = alpha / opacity;
                    const double d_opacity = d_alpha * gauss;
                    result.grads.d_opacity_logit[i] += d_opacity * opacity * (1.0 - opacity);

                    const double d_gauss = d_alpha * opacity;
                    const Vec2 d = pix - ps.splat.mean2d;
                    const Vec2 cd = ps.conic.apply(d);
                    d_mean2d[i] += cd * (d_gauss * gauss);
                    const double h = 0.5 * d_gauss * gauss;
                    d_cov2d[i] += Mat2Sym(h * cd.x * cd.x, h * cd.x * cd.y, h * cd.y * cd.y);
                }
            }

            s_acc[0] += t_k * alpha * c.x;
            s_acc[1] += t_k * alpha * c.y;
            s_acc[2] += t_k * alpha * c.z;
            t_next = t_k;
        }
    }
    if (grad_image) {
        for (std::size_t i = 0; i < n; ++i) {
            if (d_mean2d[i].x == 0.0 && d_mean2d[i].y == 0.0 && d_cov2d[i].xx == 0.0 &&
                d_cov2d[i].xy == 0.0 && d_cov2d[i].yy == 0.0)
                continue;
            const ProjectionGrads pg =
                project_gaussian_backward(scene.primitives[i], cam, d_mean2d[i], d_cov2d[i]);
            result.grads.d_center[i] += pg.d_center;
            result.grads.d_log_scale[i] += pg.d_log_scale;
            result.grads.d_rotation[i] += pg.d_rotation;
        }
    }
    return result;
}

}  // namespace

ParamGrads backward(const Scene& scene, const Camera& cam, const RenderOutput& out,
                    const Image& grad_image, const RenderSettings& settings) {
    return backward_with_contributions_impl(scene, cam, out, &grad_image, nullptr, settings).grads;
}

ContributionBuffer contribution_pass(const Scene& scene, const Camera& cam, const RenderOutput& out,
                                     const Image& target, const RenderSettings& settings) {
    return backward_with_contributions_impl(scene, cam, out, nullptr, &target, settings).contributions;
}

FusedBackwardResult backward_with_contributions(const Scene& scene, const Camera& cam,
                                                const RenderOutput& out, const Image& grad_image,
                                                const Image& target, const RenderSettings& settings) {
    return backward_with_contributions_impl(scene, cam, out, &grad_image, &target, settings);
}

double leave_one_out_oracle(const Scene& scene, const Camera& cam, const Image& target,
                            std::size_t i, const RenderSettings& settings) {
    if (i >= scene.size()) throw std::out_of_range("leave_one_out_oracle: primitive index out of range");
    const RenderOutput full = render(scene, cam, settings);
    Scene reduced = scene;
    reduced.primitives.erase(reduced.primitives.begin() + static_cast<std::ptrdiff_t>(i));
    reduced.anchor_of.clear();
    const RenderOutput without = render(reduced, cam, settings);
    return l1_mean(full.image, target) - l1_mean(without.image, target);
}

}  // namespace deg
