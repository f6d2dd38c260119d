#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

namespace deg {

/// Adam over a flat parameter vector.
class AdamOptimizer {
public:
    explicit AdamOptimizer(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(std::vector<double>& params, const std::vector<double>& grads) {
        if (m_.size() != params.size()) {
            m_.assign(params.size(), 0.0);
            v_.assign(params.size(), 0.0);
        }
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, t_);
        const double bc2 = 1.0 - std::pow(beta2_, t_);
        for (std::size_t i = 0; i < params.size(); ++i) {
            m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grads[i];
            v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grads[i] * grads[i];
            params[i] -= lr_ * (m_[i] / bc1) / (std::sqrt(v_[i] / bc2) + eps_);
        }
    }

    double lr() const { return lr_; }

private:
    double lr_, beta1_, beta2_, eps_;
    int t_ = 0;
    std::vector<double> m_, v_;
};

/// Adam moments for one octree cell; cells get their own state on first touch.
struct CellMoments {
    std::array<double, 8> m{};
    std::array<double, 8> v{};
};

}  // namespace deg
