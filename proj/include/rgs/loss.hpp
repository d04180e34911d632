#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "rgs/image.hpp"

namespace rgs {

// 11-tap Gaussian window, sigma 1.5, normalized. Shared by the training loss
// and the evaluation metrics.
template <typename T>
std::vector<T> ssim_window() {
    std::vector<T> w(11);
    T sum = 0;
    for (int i = 0; i < 11; ++i) {
        const double d = i - 5;
        w[i] = static_cast<T>(std::exp(-d * d / (2.0 * 1.5 * 1.5)));
        sum += w[i];
    }
    for (auto& v : w) v /= sum;
    return w;
}

// Separable zero-padded convolution with the SSIM window.
template <typename T>
Image<T> ssim_blur(const Image<T>& img) {
    const auto w = ssim_window<T>();
    Image<T> tmp(img.rows, img.cols), out(img.rows, img.cols);
    for (int r = 0; r < img.rows; ++r)
        for (int c = 0; c < img.cols; ++c) {
            T acc = 0;
            for (int k = -5; k <= 5; ++k) {
                const int cc = c + k;
                if (cc < 0 || cc >= img.cols) continue;
                acc += w[k + 5] * img.at(r, cc);
            }
            tmp.at(r, c) = acc;
        }
    for (int r = 0; r < img.rows; ++r)
        for (int c = 0; c < img.cols; ++c) {
            T acc = 0;
            for (int k = -5; k <= 5; ++k) {
                const int rr = r + k;
                if (rr < 0 || rr >= img.rows) continue;
                acc += w[k + 5] * tmp.at(rr, c);
            }
            out.at(r, c) = acc;
        }
    return out;
}

template <typename T>
T dynamic_range(const Image<T>& target) {
    T lo = target.values.empty() ? T(0) : target.values[0];
    T hi = lo;
    for (T v : target.values) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    return std::max(hi - lo, T(1e-3));
}

// Mean SSIM of pred vs target, optionally with the exact gradient of the
// mean w.r.t. pred (zero-padded window convention throughout).
template <typename T>
T ssim_mean(const Image<T>& pred, const Image<T>& target, Image<T>* grad = nullptr) {
    if (!pred.same_shape(target))
        throw std::invalid_argument("ssim: image dims mismatch");
    const std::size_t n = pred.size();
    if (n == 0) throw std::invalid_argument("ssim: empty image");

    const T range = dynamic_range(target);
    const T c1 = T(0.01) * range * (T(0.01) * range);
    const T c2 = T(0.03) * range * (T(0.03) * range);

    Image<T> x2(pred.rows, pred.cols), y2(pred.rows, pred.cols), xy(pred.rows, pred.cols);
    for (std::size_t i = 0; i < n; ++i) {
        x2.values[i] = pred.values[i] * pred.values[i];
        y2.values[i] = target.values[i] * target.values[i];
        xy.values[i] = pred.values[i] * target.values[i];
    }
    const Image<T> mx = ssim_blur(pred), my = ssim_blur(target);
    const Image<T> mx2 = ssim_blur(x2), my2 = ssim_blur(y2), mxy = ssim_blur(xy);

    T total = 0;
    Image<T> g_mu, g_x2, g_xy;
    if (grad) {
        g_mu = Image<T>(pred.rows, pred.cols);
        g_x2 = Image<T>(pred.rows, pred.cols);
        g_xy = Image<T>(pred.rows, pred.cols);
    }
    for (std::size_t i = 0; i < n; ++i) {
        const T ux = mx.values[i], uy = my.values[i];
        const T sx = mx2.values[i] - ux * ux;
        const T sy = my2.values[i] - uy * uy;
        const T sxy = mxy.values[i] - ux * uy;
        const T a1 = 2 * ux * uy + c1, a2 = 2 * sxy + c2;
        const T b1 = ux * ux + uy * uy + c1, b2 = sx + sy + c2;
        const T s = (a1 * a2) / (b1 * b2);
        total += s;
        if (grad) {
            const T dsda1 = a2 / (b1 * b2);
            const T dsda2 = a1 / (b1 * b2);
            const T dsdb1 = -s / b1;
            const T dsdb2 = -s / b2;
            // Pointwise sensitivities; the 1/N of the mean is applied by the
            // caller through `grad` scaling below.
            g_mu.values[i] = 2 * uy * dsda1 + 2 * ux * dsdb1 - uy * (2 * dsda2) -
                             2 * ux * dsdb2;
            g_x2.values[i] = dsdb2;
            g_xy.values[i] = 2 * dsda2;
        }
    }
    const T mean = total / static_cast<T>(n);
    if (grad) {
        const Image<T> cg_mu = ssim_blur(g_mu);
        const Image<T> cg_x2 = ssim_blur(g_x2);
        const Image<T> cg_xy = ssim_blur(g_xy);
        *grad = Image<T>(pred.rows, pred.cols);
        const T inv_n = T(1) / static_cast<T>(n);
        for (std::size_t i = 0; i < n; ++i)
            grad->values[i] = inv_n * (cg_mu.values[i] +
                                       2 * pred.values[i] * cg_x2.values[i] +
                                       target.values[i] * cg_xy.values[i]);
    }
    return mean;
}

template <typename T>
struct LossResult {
    T loss = 0;
    T l1 = 0;
    T dssim = 0;
    Image<T> grad;  // dL/dpred
};

// (1 - lambda) * L1 + lambda * (1 - SSIM) / 2, with the exact gradient.
// L1 subgradient at zero is 0.
template <typename T>
LossResult<T> compute_loss(const Image<T>& pred, const Image<T>& target, T lambda_ssim) {
    if (!pred.same_shape(target))
        throw std::invalid_argument("compute_loss: image dims mismatch");
    const std::size_t n = pred.size();
    LossResult<T> res;
    res.grad = Image<T>(pred.rows, pred.cols);

    T l1 = 0;
    const T inv_n = T(1) / static_cast<T>(n);
    for (std::size_t i = 0; i < n; ++i) {
        const T d = pred.values[i] - target.values[i];
        l1 += std::abs(d);
        const T sgn = d > T(0) ? T(1) : (d < T(0) ? T(-1) : T(0));
        res.grad.values[i] = (T(1) - lambda_ssim) * sgn * inv_n;
    }
    res.l1 = l1 * inv_n;

    if (lambda_ssim != T(0)) {
        Image<T> ssim_grad;
        const T s = ssim_mean(pred, target, &ssim_grad);
        res.dssim = (T(1) - s) / T(2);
        for (std::size_t i = 0; i < n; ++i)
            res.grad.values[i] += lambda_ssim * T(-0.5) * ssim_grad.values[i];
    }
    res.loss = (T(1) - lambda_ssim) * res.l1 + lambda_ssim * res.dssim;
    return res;
}

}  // namespace rgs
