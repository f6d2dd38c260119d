#pragma once

#include "deg/types.hpp"

namespace deg {

struct SsimResult {
    double value = 0.0;  // mean SSIM over pixels and channels
    Image grad;          // d value / d first image
};

/// SSIM with an 11x11 Gaussian window (sigma 1.5), C1 = 0.01^2, C2 = 0.03^2
/// for unit dynamic range. Windows are clipped and renormalized at borders;
/// the gradient is the exact adjoint of that filtering.
SsimResult ssim(const Image& img, const Image& reference);

/// Value-only variant.
double ssim_value(const Image& img, const Image& reference);

}  // namespace deg
