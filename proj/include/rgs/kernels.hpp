#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "rgs/vec.hpp"

namespace rgs {

// Scale activation bounds, in scene units (mm). 0 < s_min < s_max.
struct ScaleBounds {
    double s_min = 0.2;
    double s_max = 20.0;

    void validate() const {
        if (!(s_min > 0.0) || !(s_min < s_max))
            throw std::invalid_argument("ScaleBounds: require 0 < s_min < s_max");
    }
};

template <typename T>
struct RawKernelParams {
    Vec3<T> position;   // identity activation
    Vec4<T> rotation;   // unnormalized quaternion (w, x, y, z)
    Vec3<T> scale;      // unconstrained, mapped through the bounded activation
};

template <typename T>
struct ActivatedKernel {
    Vec3<T> position;
    Vec4<T> rotation;   // unit quaternion
    Vec3<T> scale;      // in (s_min, s_max)
    Mat3<T> covariance;
    Mat3<T> precision;  // closed-form inverse R diag(1/s^2) R^T
};

template <typename T>
T sigmoid(T v) {
    if (v >= T(0)) {
        T e = std::exp(-v);
        return T(1) / (T(1) + e);
    }
    T e = std::exp(v);
    return e / (T(1) + e);
}

// s = (s_max - s_min) * sigmoid(raw) + s_min, componentwise. The sigmoid
// saturates to exactly 0/1 in finite precision for |raw| large, so the result
// is nudged one ulp inside each bound to keep the open interval strict.
template <typename T>
Vec3<T> activate_scale(const Vec3<T>& raw, const ScaleBounds& b) {
    const T lo = T(b.s_min), hi = T(b.s_max);
    const T inner_lo = std::nextafter(lo, hi);
    const T inner_hi = std::nextafter(hi, lo);
    Vec3<T> s{(hi - lo) * sigmoid(raw.x) + lo,
              (hi - lo) * sigmoid(raw.y) + lo,
              (hi - lo) * sigmoid(raw.z) + lo};
    for (int i = 0; i < 3; ++i) s[i] = std::min(std::max(s[i], inner_lo), inner_hi);
    return s;
}

// d(activate_scale)/d(raw), componentwise.
template <typename T>
Vec3<T> activate_scale_derivative(const Vec3<T>& raw, const ScaleBounds& b) {
    const T range = T(b.s_max - b.s_min);
    Vec3<T> d;
    for (int i = 0; i < 3; ++i) {
        T s = sigmoid(raw[i]);
        d[i] = range * s * (T(1) - s);
    }
    return d;
}

// Inverse of activate_scale. Inputs are clamped 1e-4 of the range inside each
// bound so nearest-neighbor init distances outside (s_min, s_max) stay finite.
template <typename T>
Vec3<T> invert_scale_activation(const Vec3<T>& s, const ScaleBounds& b) {
    const T lo = T(b.s_min), hi = T(b.s_max);
    const T margin = T(1e-4) * (hi - lo);
    Vec3<T> raw;
    for (int i = 0; i < 3; ++i) {
        if (!std::isfinite(static_cast<double>(s[i])))
            throw std::invalid_argument("invert_scale_activation: non-finite input");
        T v = s[i];
        v = std::min(std::max(v, lo + margin), hi - margin);
        T u = (v - lo) / (hi - lo);
        raw[i] = std::log(u / (T(1) - u));
    }
    return raw;
}

template <typename T>
Vec4<T> normalize_quaternion(const Vec4<T>& r) {
    T n = r.norm();
    if (!(n >= T(1e-12)))
        throw std::invalid_argument("quaternion has (near-)zero norm");
    return r / n;
}

// Rotation matrix of a quaternion (normalized internally).
template <typename T>
Mat3<T> quaternion_to_rotation(const Vec4<T>& q_in) {
    Vec4<T> q = normalize_quaternion(q_in);
    const T w = q.w, x = q.x, y = q.y, z = q.z;
    Mat3<T> R;
    R(0, 0) = 1 - 2 * (y * y + z * z);
    R(0, 1) = 2 * (x * y - w * z);
    R(0, 2) = 2 * (x * z + w * y);
    R(1, 0) = 2 * (x * y + w * z);
    R(1, 1) = 1 - 2 * (x * x + z * z);
    R(1, 2) = 2 * (y * z - w * x);
    R(2, 0) = 2 * (x * z - w * y);
    R(2, 1) = 2 * (y * z + w * x);
    R(2, 2) = 1 - 2 * (x * x + y * y);
    return R;
}

template <typename T>
ActivatedKernel<T> activate_kernel(const RawKernelParams<T>& raw, const ScaleBounds& b) {
    ActivatedKernel<T> k;
    k.position = raw.position;
    k.rotation = normalize_quaternion(raw.rotation);
    k.scale = activate_scale(raw.scale, b);
    Mat3<T> R = quaternion_to_rotation(k.rotation);
    Mat3<T> D = Mat3<T>::zero();
    Mat3<T> Dinv = Mat3<T>::zero();
    for (int i = 0; i < 3; ++i) {
        D(i, i) = k.scale[i] * k.scale[i];
        Dinv(i, i) = T(1) / D(i, i);
    }
    k.covariance = R * D * R.transposed();
    k.precision = R * Dinv * R.transposed();
    return k;
}

// rho * exp(-1/2 (x-p)^T Sigma^{-1} (x-p))
template <typename T>
T kernel_response(const ActivatedKernel<T>& k, T rho, const Vec3<T>& x) {
    Vec3<T> d = x - k.position;
    T q = d.dot(k.precision * d);
    return rho * std::exp(T(-0.5) * q);
}

// Optimizable kernel population plus the adaptive-control accumulators.
template <typename T>
struct KernelSet {
    std::vector<RawKernelParams<T>> raw;
    // Eq.-style accumulated attenuation: running sum of rho and iteration count.
    std::vector<double> atten_sum;
    std::vector<std::uint32_t> atten_count;
    // View-space position gradient norms for densification.
    std::vector<double> grad_norm_sum;
    std::vector<std::uint32_t> grad_count;

    std::size_t size() const { return raw.size(); }

    void resize(std::size_t m) {
        raw.resize(m);
        atten_sum.assign(m, 0.0);
        atten_count.assign(m, 0);
        grad_norm_sum.assign(m, 0.0);
        grad_count.assign(m, 0);
    }

    void reset_accumulators() {
        atten_sum.assign(raw.size(), 0.0);
        atten_count.assign(raw.size(), 0);
        grad_norm_sum.assign(raw.size(), 0.0);
        grad_count.assign(raw.size(), 0);
    }

    void check_consistent() const {
        std::size_t m = raw.size();
        if (atten_sum.size() != m || atten_count.size() != m ||
            grad_norm_sum.size() != m || grad_count.size() != m)
            throw std::logic_error("KernelSet: per-kernel array lengths disagree");
    }

    template <typename U>
    KernelSet<U> cast() const {
        KernelSet<U> out;
        out.raw.reserve(raw.size());
        for (const auto& r : raw)
            out.raw.push_back({r.position.template cast<U>(), r.rotation.template cast<U>(),
                               r.scale.template cast<U>()});
        out.atten_sum = atten_sum;
        out.atten_count = atten_count;
        out.grad_norm_sum = grad_norm_sum;
        out.grad_count = grad_count;
        return out;
    }
};

template <typename T>
std::vector<ActivatedKernel<T>> activate_all(const KernelSet<T>& ks, const ScaleBounds& b) {
    std::vector<ActivatedKernel<T>> out;
    out.reserve(ks.size());
    for (const auto& r : ks.raw) out.push_back(activate_kernel(r, b));
    return out;
}

// Eq.-2 style field value: deterministic index-order sum of kernel responses.
template <typename T>
T field_attenuation(const std::vector<ActivatedKernel<T>>& kernels,
                    const std::vector<T>& rho, const Vec3<T>& x) {
    if (kernels.size() != rho.size())
        throw std::invalid_argument("field_attenuation: rho length mismatch");
    T sum = 0;
    for (std::size_t i = 0; i < kernels.size(); ++i)
        sum += kernel_response(kernels[i], rho[i], x);
    return sum;
}

}  // namespace rgs
