#include "deg/ssim.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace deg {

namespace {

constexpr int kRadius = 5;  // 11-tap window
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

const std::vector<double>& kernel() {
    static const std::vector<double> k = [] {
        std::vector<double> v(2 * kRadius + 1);
        double sum = 0.0;
        for (int u = -kRadius; u <= kRadius; ++u) {
            v[static_cast<size_t>(u + kRadius)] = std::exp(-0.5 * u * u / (kSigma * kSigma));
            sum += v[static_cast<size_t>(u + kRadius)];
        }
        for (double& x : v) x /= sum;
        return v;
    }();
    return k;
}

using Plane = std::vector<double>;

// In-bounds kernel weight sums along one axis, for border renormalization.
std::vector<double> axis_weight_sums(int n) {
    const auto& k = kernel();
    std::vector<double> z(static_cast<size_t>(n), 0.0);
    for (int i = 0; i < n; ++i) {
        double s = 0.0;
        for (int u = -kRadius; u <= kRadius; ++u) {
            const int j = i + u;
            if (j >= 0 && j < n) s += k[static_cast<size_t>(u + kRadius)];
        }
        z[static_cast<size_t>(i)] = s;
    }
    return z;
}

void conv_x(const Plane& in, int w, int h, Plane& out) {
    const auto& k = kernel();
    out.assign(in.size(), 0.0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int u = -kRadius; u <= kRadius; ++u) {
                const int j = x + u;
                if (j < 0 || j >= w) continue;
                s += k[static_cast<size_t>(u + kRadius)] * in[static_cast<size_t>(y) * w + j];
            }
            out[static_cast<size_t>(y) * w + x] = s;
        }
    }
}

void conv_y(const Plane& in, int w, int h, Plane& out) {
    const auto& k = kernel();
    out.assign(in.size(), 0.0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int u = -kRadius; u <= kRadius; ++u) {
                const int j = y + u;
                if (j < 0 || j >= h) continue;
                s += k[static_cast<size_t>(u + kRadius)] * in[static_cast<size_t>(j) * w + x];
            }
            out[static_cast<size_t>(y) * w + x] = s;
        }
    }
}

// filtered = Dy Cy Dx Cx, with D the diagonal border renormalizers.
void filter(const Plane& in, int w, int h, const std::vector<double>& zx, const std::vector<double>& zy,
            Plane& out) {
    Plane tmp;
    conv_x(in, w, h, tmp);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) tmp[static_cast<size_t>(y) * w + x] /= zx[static_cast<size_t>(x)];
    conv_y(tmp, w, h, out);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) out[static_cast<size_t>(y) * w + x] /= zy[static_cast<size_t>(y)];
}

// Adjoint of filter(): Cx Dx Cy Dy.
void filter_adjoint(const Plane& in, int w, int h, const std::vector<double>& zx,
                    const std::vector<double>& zy, Plane& out) {
    Plane tmp = in;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) tmp[static_cast<size_t>(y) * w + x] /= zy[static_cast<size_t>(y)];
    Plane tmp2;
    conv_y(tmp, w, h, tmp2);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) tmp2[static_cast<size_t>(y) * w + x] /= zx[static_cast<size_t>(x)];
    conv_x(tmp2, w, h, out);
}

}  // namespace

SsimResult ssim(const Image& img, const Image& reference) {
    if (img.width != reference.width || img.height != reference.height)
        throw std::invalid_argument("ssim: image sizes differ");
    const int w = img.width, h = img.height;
    const std::size_t npix = static_cast<std::size_t>(w) * h;
    const auto zx = axis_weight_sums(w);
    const auto zy = axis_weight_sums(h);

    SsimResult result;
    result.grad = Image(w, h);
    const double inv_count = 1.0 / static_cast<double>(npix * 3);

    Plane x(npix), y(npix), xx(npix), yy(npix), xy(npix);
    Plane mu_x, mu_y, m_xx, m_yy, m_xy;
    Plane d_mu(npix), d_mxx(npix), d_mxy(npix);
    Plane adj;

    for (int c = 0; c < 3; ++c) {
        for (std::size_t p = 0; p < npix; ++p) {
            x[p] = img.pixels[p * 3 + c];
            y[p] = reference.pixels[p * 3 + c];
            xx[p] = x[p] * x[p];
            yy[p] = y[p] * y[p];
            xy[p] = x[p] * y[p];
        }
        filter(x, w, h, zx, zy, mu_x);
        filter(y, w, h, zx, zy, mu_y);
        filter(xx, w, h, zx, zy, m_xx);
        filter(yy, w, h, zx, zy, m_yy);
        filter(xy, w, h, zx, zy, m_xy);

        for (std::size_t p = 0; p < npix; ++p) {
            const double sx = m_xx[p] - mu_x[p] * mu_x[p];
            const double sy = m_yy[p] - mu_y[p] * mu_y[p];
            const double sxy = m_xy[p] - mu_x[p] * mu_y[p];
            const double a1 = 2.0 * mu_x[p] * mu_y[p] + kC1;
            const double a2 = 2.0 * sxy + kC2;
            const double b1 = mu_x[p] * mu_x[p] + mu_y[p] * mu_y[p] + kC1;
            const double b2 = sx + sy + kC2;
            const double inv_b = 1.0 / (b1 * b2);
            const double s = a1 * a2 * inv_b;
            result.value += s * inv_count;

            // Partials w.r.t. mu_x and the raw moments; sxy and sx fold the
            // mu_x dependence back in.
            const double d_a1 = a2 * inv_b;
            const double d_a2 = a1 * inv_b;
            const double d_b1 = -s / b1;
            const double d_b2 = -s / b2;
            d_mu[p] = d_a1 * 2.0 * mu_y[p] + d_a2 * (-2.0 * mu_y[p]) + d_b1 * 2.0 * mu_x[p] +
                      d_b2 * (-2.0 * mu_x[p]);
            d_mxx[p] = d_b2;
            d_mxy[p] = d_a2 * 2.0;
        }

        filter_adjoint(d_mu, w, h, zx, zy, adj);
        for (std::size_t p = 0; p < npix; ++p)
            result.grad.pixels[p * 3 + c] += adj[p] * inv_count;
        filter_adjoint(d_mxx, w, h, zx, zy, adj);
        for (std::size_t p = 0; p < npix; ++p)
            result.grad.pixels[p * 3 + c] += adj[p] * 2.0 * x[p] * inv_count;
        filter_adjoint(d_mxy, w, h, zx, zy, adj);
        for (std::size_t p = 0; p < npix; ++p)
            result.grad.pixels[p * 3 + c] += adj[p] * y[p] * inv_count;
    }
    return result;
}

double ssim_value(const Image& img, const Image& reference) {
    if (img.width != reference.width || img.height != reference.height)
        throw std::invalid_argument("ssim: image sizes differ");
    const int w = img.width, h = img.height;
    const std::size_t npix = static_cast<std::size_t>(w) * h;
    const auto zx = axis_weight_sums(w);
    const auto zy = axis_weight_sums(h);
    const double inv_count = 1.0 / static_cast<double>(npix * 3);

    Plane x(npix), y(npix), xx(npix), yy(npix), xy(npix);
    Plane mu_x, mu_y, m_xx, m_yy, m_xy;
    double value = 0.0;
    for (int c = 0; c < 3; ++c) {
        for (std::size_t p = 0; p < npix; ++p) {
            x[p] = img.pixels[p * 3 + c];
            y[p] = reference.pixels[p * 3 + c];
            xx[p] = x[p] * x[p];
            yy[p] = y[p] * y[p];
            xy[p] = x[p] * y[p];
        }
        filter(x, w, h, zx, zy, mu_x);
        filter(y, w, h, zx, zy, mu_y);
        filter(xx, w, h, zx, zy, m_xx);
        filter(yy, w, h, zx, zy, m_yy);
        filter(xy, w, h, zx, zy, m_xy);
        for (std::size_t p = 0; p < npix; ++p) {
            const double sx = m_xx[p] - mu_x[p] * mu_x[p];
            const double sy = m_yy[p] - mu_y[p] * mu_y[p];
            const double sxy = m_xy[p] - mu_x[p] * mu_y[p];
            const double a1 = 2.0 * mu_x[p] * mu_y[p] + kC1;
            const double a2 = 2.0 * sxy + kC2;
            const double b1 = mu_x[p] * mu_x[p] + mu_y[p] * mu_y[p] + kC1;
            const double b2 = sx + sy + kC2;
            value += a1 * a2 / (b1 * b2) * inv_count;
        }
    }
    return value;
}

}  // namespace deg
