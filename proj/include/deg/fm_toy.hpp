#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "deg/geometry.hpp"

namespace deg {

enum class FmVariant { kReordered, kUnordered };

struct FmConfig {
    int tokens = 64;       // M
    int channels = 6;      // C: 3 point coordinates + 3 cluster feature dims
    int hidden = 64;
    int steps = 1500;
    int batch = 8;
    int train_assets = 192;
    int val_assets = 48;
    int eval_every = 50;
    double lr = 1e-3;
    std::uint64_t seed = 0;
    FmVariant variant = FmVariant::kReordered;

    void validate() const;
};

/// Velocity regression target: mean squared error of v against (eps - x0),
/// all matrices M x C row-major.
double fm_loss(const std::vector<double>& v_out, const std::vector<double>& x0,
               const std::vector<double>& eps);

/// Gradient of fm_loss w.r.t. v_out.
std::vector<double> fm_loss_grad(const std::vector<double>& v_out, const std::vector<double>& x0,
                                 const std::vector<double>& eps);

struct FmAsset {
    std::vector<double> tokens;  // M x C; first 3 channels are the point position
    std::vector<Vec3> points;
};

struct FmDataset {
    int tokens = 0;
    int channels = 0;
    std::vector<FmAsset> train;
    std::vector<FmAsset> val;
};

/// Synthetic assets: M points drawn from 3-5 well-separated spatial clusters
/// in the unit cube; the token feature is cluster-dependent, so spatial
/// position predicts content.
FmDataset make_dataset(const FmConfig& cfg);

struct FmCurvePoint {
    int step = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
};

struct FmTrainResult {
    std::vector<FmCurvePoint> curve;
    double initial_val_loss = 0.0;
    double final_val_loss = 0.0;
};

/// Per-token two-layer perceptron trained on the flow-matching objective.
/// The reordered variant serializes each asset against the Sobol anchors and
/// adds the anchor positional embedding to the token input; the unordered
/// variant shuffles tokens and uses no embedding. Initialization depends only
/// on the seed, so both variants start from identical weights.
FmTrainResult train_toy(const FmConfig& cfg);

}  // namespace deg
