#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "deg/decoder.hpp"
#include "deg/octree.hpp"
#include "deg/rasterizer.hpp"
#include "deg/ssim.hpp"

namespace deg {

struct FitConfig {
    // Loss weights. The KL and LPIPS terms are permanently out of this build;
    // validate() rejects nonzero values so the gap stays explicit.
    double lambda_struct = 1.0;
    double lambda_render = 1.0;
    double lambda_reg = 1.0;
    double lambda_ssim = 0.2;
    double lambda_lpips = 0.0;
    double lambda_kl = 0.0;
    double lambda1 = 1e-3;      // volume regularizer
    double lambda2 = 1e-3;      // opacity regularizer
    double lambda_offset = 0.1;
    double gamma = 0.5;

    // Model shape.
    int levels = 8;
    int expansion = 32;         // K primitives per anchor
    int fourier_bands = 4;
    int hidden = 32;
    double offset_scale = 0.0;     // <= 0: auto, 2x leaf edge length at the finest level
    double log_scale_bias = 0.0;   // 0: auto, log(0.75 * leaf edge)

    // Anchor budgets.
    int anchors_min = 64;
    int anchors_max = 256;
    int anchors_stage2 = 128;

    // Schedule.
    int stage1_iters = 300;
    int stage2_iters = 0;       // the appearance stage is optional
    int stage3_iters = 600;
    double lr_decoder = 1e-3;
    double lr_logits = 1e-2;

    // Controls.
    bool render_gradient_enabled = true;  // the density-control reward pathway
    bool normalize_rewards = false;       // divide anchor rewards by P before use
    std::uint64_t seed = 0;
    RenderSettings render;

    // Used when procedurally generating a target set.
    int image_size = 64;
    int camera_count = 10;

    void validate() const;
};

struct TargetSet {
    std::string name;
    std::vector<Camera> cameras;
    std::vector<Image> images;
    std::vector<Vec3> points;  // surface samples for histogram supervision
    Aabb domain;

    std::size_t view_count() const { return cameras.size(); }
};

struct RenderLossResult {
    double total = 0.0;      // l1 + lambda_ssim * (1 - ssim)
    double l1 = 0.0;
    double ssim_loss = 0.0;  // 1 - ssim (0 when lambda_ssim == 0)
    Image grad;              // d total / d image
};

RenderLossResult render_loss(const Image& img, const Image& target, const FitConfig& cfg);

double psnr(const Image& img, const Image& target);  // 10 log10(1/MSE), capped at 99 dB

struct IterationLog {
    int iter = 0;
    int stage = 0;
    int view = -1;
    int anchors = 0;
    double ce = 0.0;
    double l1 = 0.0;
    double ssim_loss = 0.0;
    double render = 0.0;     // l1 + lambda_ssim * ssim_loss
    double surrogate = 0.0;  // sum_j clamped_reward_j * log q(x_j)
    double reg = 0.0;        // lambda1*vol + lambda2*opac + lambda_offset*offset
    double total = 0.0;      // lambda_struct*ce + lambda_render*(render+surrogate) + lambda_reg*reg
};

struct FittedModel {
    OctreeDensity density;
    DecoderParams decoder;
};

struct FitResult {
    FittedModel model;
    std::vector<IterationLog> log;
    double score_grad_abs_sum = 0.0;  // instrumentation: reward-pathway gradient mass
};

FitResult fit(const FitConfig& cfg, const TargetSet& targets);

struct EvalResult {
    std::vector<double> psnr_per_view;
    std::vector<double> ssim_per_view;
    double mean_psnr = 0.0;
    double mean_ssim = 0.0;
};

EvalResult evaluate(const FittedModel& model, const TargetSet& targets, int anchor_budget,
                    std::uint64_t seed, const RenderSettings& settings = {});

/// Procedural target sets rendered from hand-authored reference scenes, so
/// ground truth is representable exactly. Names: "thinboard" (thin bright
/// rods over a flat smoothly textured board) and "checkersphere".
TargetSet synth_scene(const std::string& name, std::uint64_t seed, int image_size, int camera_count);

/// Reference scene behind a synthetic target set (exposed for sanity tests).
Scene synth_reference_scene(const std::string& name, std::uint64_t seed);

std::string fit_log_header();
std::string fit_log_row(const IterationLog& row);

}  // namespace deg
