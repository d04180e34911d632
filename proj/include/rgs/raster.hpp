#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "rgs/geometry.hpp"
#include "rgs/image.hpp"
#include "rgs/kernels.hpp"
#include "rgs/vec.hpp"

namespace rgs {

struct RasterConfig {
    int tile_size = 16;
    double cutoff_sigmas = 3.0;  // footprint bound radius in kernel sigmas
    bool brute_force = false;    // every kernel against every tile (oracle mode)
};

// Forward splat result. Footprint lists are kept for the paired backward
// pass; per tile, kernel ids appear in increasing order, giving deterministic
// index-order summation.
template <typename T>
struct SplatImage {
    Image<T> values;
    int tile_size = 16;
    int tiles_x = 0;
    int tiles_y = 0;
    std::vector<std::vector<std::uint32_t>> tile_kernels;
    std::vector<std::uint8_t> touched;  // per kernel: has a nonempty footprint
    std::size_t degenerate_skipped = 0; // kernels too close to the source
};

template <typename T>
struct RasterGradients {
    std::vector<T> d_rho;
    std::vector<Vec3<T>> d_raw_position;
    std::vector<Vec4<T>> d_raw_rotation;
    std::vector<Vec3<T>> d_raw_scale;
    // View-space positional gradient norm per kernel (densification statistic)
    // and whether the kernel contributed to this frame at all.
    std::vector<T> view_grad_norm;
    std::vector<std::uint8_t> hit;
};

// Closed-form line integral of a Gaussian kernel along an (infinite) ray:
//   rho * sqrt(2*pi/q) * exp(-1/2 (c - b^2/q))
// with q = d'Pd, b = d'P(o-p), c = (o-p)'P(o-p), P the kernel precision.
template <typename T>
T ray_integral(const ActivatedKernel<T>& k, T rho, const Vec3<T>& origin,
               const Vec3<T>& dir) {
    const Vec3<T> delta = origin - k.position;
    const Vec3<T> Pd = k.precision * dir;
    const T q = dir.dot(Pd);
    const T b = delta.dot(Pd);
    const T c = delta.dot(k.precision * delta);
    return rho * std::sqrt(T(2) * T(kPi) / q) * std::exp(T(-0.5) * (c - b * b / q));
}

template <typename T>
T ray_integral(const ActivatedKernel<T>& k, T rho, const Ray& ray) {
    return ray_integral(k, rho, ray.origin.cast<T>(), ray.direction.cast<T>());
}

namespace detail {

// dR/dq of the unit-quaternion rotation, one 3x3 slice per component.
template <typename T>
void rotation_quaternion_jacobian(const Vec4<T>& q, Mat3<T> J[4]) {
    const T w = q.w, x = q.x, y = q.y, z = q.z;
    J[0].m = {0, -2 * z, 2 * y, 2 * z, 0, -2 * x, -2 * y, 2 * x, 0};
    J[1].m = {0, 2 * y, 2 * z, 2 * y, -4 * x, -2 * w, 2 * z, 2 * w, -4 * x};
    J[2].m = {-4 * y, 2 * x, 2 * w, 2 * x, 0, 2 * z, -2 * w, 2 * z, -4 * y};
    J[3].m = {-4 * z, -2 * w, 2 * x, 2 * w, -4 * z, 2 * y, 2 * x, 2 * y, 0};
}

struct PixelFrame {
    Vec3<double> source;
    Vec3<double> u_axis, v_axis, central;
};

inline PixelFrame frame_basis(const ScanGeometry& geom, const FrameSpec& frame) {
    PixelFrame f;
    f.source = source_position(geom, frame.angle);
    detector_axes(geom, frame.angle, f.u_axis, f.v_axis, f.central);
    return f;
}

// Conservative pixel-rectangle bound of the projected cutoff sphere.
struct Footprint {
    bool visible = false;
    bool degenerate = false;
    int c0 = 0, c1 = -1, r0 = 0, r1 = -1;
};

template <typename T>
Footprint kernel_footprint(const ActivatedKernel<T>& k, const PixelFrame& f,
                           const ScanGeometry& geom, double cutoff_sigmas) {
    Footprint fp;
    const Vec3<double> p{static_cast<double>(k.position.x),
                         static_cast<double>(k.position.y),
                         static_cast<double>(k.position.z)};
    const Vec3<double> rel = p - f.source;
    if (rel.norm() < 1e-6) {
        fp.degenerate = true;
        return fp;
    }
    const double smax = std::max({static_cast<double>(k.scale.x),
                                  static_cast<double>(k.scale.y),
                                  static_cast<double>(k.scale.z)});
    const double radius = cutoff_sigmas * smax;
    const double depth = rel.dot(f.central);
    if (depth - radius <= 1e-6) {
        // Kernel wraps around or sits behind the source: conservative full image.
        fp.visible = true;
        fp.c0 = 0;
        fp.c1 = geom.cols - 1;
        fp.r0 = 0;
        fp.r1 = geom.rows - 1;
        return fp;
    }
    const double sdd = geom.source_to_detector;
    const double u = sdd * rel.dot(f.u_axis) / depth;
    const double v = sdd * rel.dot(f.v_axis) / depth;
    const double proj_r = radius * sdd / (depth - radius);
    const double margin = std::max(geom.du, geom.dv);
    const double cu = u / geom.du - 0.5 + 0.5 * geom.cols;
    const double cv = v / geom.dv - 0.5 + 0.5 * geom.rows;
    fp.c0 = std::max(0, static_cast<int>(std::floor(cu - (proj_r + margin) / geom.du)));
    fp.c1 = std::min(geom.cols - 1,
                     static_cast<int>(std::ceil(cu + (proj_r + margin) / geom.du)));
    fp.r0 = std::max(0, static_cast<int>(std::floor(cv - (proj_r + margin) / geom.dv)));
    fp.r1 = std::min(geom.rows - 1,
                     static_cast<int>(std::ceil(cv + (proj_r + margin) / geom.dv)));
    fp.visible = fp.c0 <= fp.c1 && fp.r0 <= fp.r1;
    return fp;
}

}  // namespace detail

template <typename T>
SplatImage<T> splat_forward(const std::vector<ActivatedKernel<T>>& kernels,
                            const std::vector<T>& rho, const ScanGeometry& geom,
                            const FrameSpec& frame, const RasterConfig& cfg = {}) {
    if (kernels.size() != rho.size())
        throw std::invalid_argument("splat_forward: rho length mismatch");
    SplatImage<T> out;
    out.values = Image<T>(geom.rows, geom.cols);
    out.tile_size = cfg.tile_size;
    out.tiles_x = (geom.cols + cfg.tile_size - 1) / cfg.tile_size;
    out.tiles_y = (geom.rows + cfg.tile_size - 1) / cfg.tile_size;
    out.tile_kernels.assign(static_cast<std::size_t>(out.tiles_x) * out.tiles_y, {});
    out.touched.assign(kernels.size(), 0);

    const detail::PixelFrame basis = detail::frame_basis(geom, frame);

    for (std::uint32_t i = 0; i < kernels.size(); ++i) {
        detail::Footprint fp;
        if (cfg.brute_force) {
            const Vec3<double> rel =
                Vec3<double>{(double)kernels[i].position.x, (double)kernels[i].position.y,
                             (double)kernels[i].position.z} -
                basis.source;
            if (rel.norm() < 1e-6) {
                fp.degenerate = true;
            } else {
                fp.visible = true;
                fp.c0 = 0;
                fp.c1 = geom.cols - 1;
                fp.r0 = 0;
                fp.r1 = geom.rows - 1;
            }
        } else {
            fp = detail::kernel_footprint(kernels[i], basis, geom, cfg.cutoff_sigmas);
        }
        if (fp.degenerate) {
            ++out.degenerate_skipped;
            continue;
        }
        if (!fp.visible) continue;
        out.touched[i] = 1;
        const int t0x = fp.c0 / cfg.tile_size, t1x = fp.c1 / cfg.tile_size;
        const int t0y = fp.r0 / cfg.tile_size, t1y = fp.r1 / cfg.tile_size;
        for (int ty = t0y; ty <= t1y; ++ty)
            for (int tx = t0x; tx <= t1x; ++tx)
                out.tile_kernels[static_cast<std::size_t>(ty) * out.tiles_x + tx]
                    .push_back(i);
    }

    for (int ty = 0; ty < out.tiles_y; ++ty) {
        for (int tx = 0; tx < out.tiles_x; ++tx) {
            const auto& list =
                out.tile_kernels[static_cast<std::size_t>(ty) * out.tiles_x + tx];
            if (list.empty()) continue;
            const int r_end = std::min(geom.rows, (ty + 1) * cfg.tile_size);
            const int c_end = std::min(geom.cols, (tx + 1) * cfg.tile_size);
            for (int r = ty * cfg.tile_size; r < r_end; ++r) {
                for (int c = tx * cfg.tile_size; c < c_end; ++c) {
                    const Ray ray = pixel_ray(geom, frame, r, c);
                    const Vec3<T> o = ray.origin.cast<T>();
                    const Vec3<T> d = ray.direction.cast<T>();
                    T sum = 0;
                    for (std::uint32_t i : list)
                        sum += ray_integral(kernels[i], rho[i], o, d);
                    out.values.at(r, c) = sum;
                }
            }
        }
    }
    return out;
}

// Adjoint of splat_forward over the same footprints. Raw-parameter gradients
// chain through quaternion normalization and the bounded scale activation.
template <typename T>
RasterGradients<T> splat_backward(const KernelSet<T>& raw_set,
                                  const std::vector<ActivatedKernel<T>>& kernels,
                                  const std::vector<T>& rho, const ScaleBounds& bounds,
                                  const ScanGeometry& geom, const FrameSpec& frame,
                                  const SplatImage<T>& fwd, const Image<T>& upstream) {
    if (fwd.tile_kernels.empty() && !kernels.empty() && fwd.values.size() == 0)
        throw std::invalid_argument("splat_backward: missing paired forward state");
    if (!upstream.same_shape(fwd.values))
        throw std::invalid_argument("splat_backward: upstream dims mismatch");
    if (raw_set.size() != kernels.size() || rho.size() != kernels.size())
        throw std::invalid_argument("splat_backward: kernel array length mismatch");

    const std::size_t m = kernels.size();
    RasterGradients<T> g;
    g.d_rho.assign(m, T(0));
    g.d_raw_position.assign(m, Vec3<T>{});
    g.d_raw_rotation.assign(m, Vec4<T>{});
    g.d_raw_scale.assign(m, Vec3<T>{});
    g.view_grad_norm.assign(m, T(0));
    g.hit = fwd.touched;

    // Per-kernel linear accumulators: dL/dp (world), dL/dP (precision, full
    // 3x3 treating entries independent), dL/drho.
    std::vector<Vec3<T>> acc_dp(m);
    std::vector<Mat3<T>> acc_dP(m);

    for (int ty = 0; ty < fwd.tiles_y; ++ty) {
        for (int tx = 0; tx < fwd.tiles_x; ++tx) {
            const auto& list =
                fwd.tile_kernels[static_cast<std::size_t>(ty) * fwd.tiles_x + tx];
            if (list.empty()) continue;
            const int r_end = std::min(geom.rows, (ty + 1) * fwd.tile_size);
            const int c_end = std::min(geom.cols, (tx + 1) * fwd.tile_size);
            for (int r = ty * fwd.tile_size; r < r_end; ++r) {
                for (int c = tx * fwd.tile_size; c < c_end; ++c) {
                    const T u = upstream.at(r, c);
                    if (u == T(0)) continue;
                    const Ray ray = pixel_ray(geom, frame, r, c);
                    const Vec3<T> o = ray.origin.cast<T>();
                    const Vec3<T> d = ray.direction.cast<T>();
                    for (std::uint32_t i : list) {
                        const ActivatedKernel<T>& k = kernels[i];
                        const Vec3<T> delta = o - k.position;
                        const Vec3<T> Pd = k.precision * d;
                        const Vec3<T> Pdel = k.precision * delta;
                        const T q = d.dot(Pd);
                        const T b = delta.dot(Pd);
                        const T cc = delta.dot(Pdel);
                        const T base = std::sqrt(T(2) * T(kPi) / q) *
                                       std::exp(T(-0.5) * (cc - b * b / q));
                        const T I = rho[i] * base;
                        g.d_rho[i] += u * base;
                        const T uI = u * I;
                        // d lnI / dp = P delta - (b/q) P d
                        acc_dp[i] += uI * (Pdel - (b / q) * Pd);
                        // d lnI / dP with entries independent
                        const T dq = T(-0.5) / q - b * b / (T(2) * q * q);
                        const Mat3<T> GP = outer(d, d) * dq + outer(d, delta) * (b / q) +
                                           outer(delta, delta) * T(-0.5);
                        acc_dP[i] = acc_dP[i] + GP * uI;
                    }
                }
            }
        }
    }

    const detail::PixelFrame basis = detail::frame_basis(geom, frame);
    const Vec3<T> u_axis = basis.u_axis.cast<T>();
    const Vec3<T> v_axis = basis.v_axis.cast<T>();

    for (std::size_t i = 0; i < m; ++i) {
        if (!fwd.touched[i]) continue;
        const ActivatedKernel<T>& k = kernels[i];
        const Mat3<T> R = quaternion_to_rotation(k.rotation);
        Mat3<T> Dinv = Mat3<T>::zero();
        for (int a = 0; a < 3; ++a) Dinv(a, a) = T(1) / (k.scale[a] * k.scale[a]);

        // Position: identity activation. View-space statistic uses the
        // detector-plane components of the world gradient.
        g.d_raw_position[i] = acc_dp[i];
        const T gu = acc_dp[i].dot(u_axis);
        const T gv = acc_dp[i].dot(v_axis);
        g.view_grad_norm[i] = std::sqrt(gu * gu + gv * gv);

        // Scale: dL/d s_a = (R' G R)_aa * (-2 / s_a^3), chained through the
        // bounded activation.
        const Mat3<T> RtGR = R.transposed() * acc_dP[i] * R;
        const Vec3<T> act_deriv = activate_scale_derivative(raw_set.raw[i].scale, bounds);
        for (int a = 0; a < 3; ++a) {
            const T ds = RtGR(a, a) * (T(-2) / (k.scale[a] * k.scale[a] * k.scale[a]));
            g.d_raw_scale[i][a] = ds * act_deriv[a];
        }

        // Rotation: dL/dR = (G + G') R Dinv, contracted with dR/dq, then
        // projected through quaternion normalization.
        const Mat3<T> dR = (acc_dP[i] + acc_dP[i].transposed()) * R * Dinv;
        Mat3<T> J[4];
        detail::rotation_quaternion_jacobian(k.rotation, J);
        Vec4<T> dq;
        for (int a = 0; a < 4; ++a) {
            T s = 0;
            for (int e = 0; e < 9; ++e) s += dR.m[e] * J[a].m[e];
            dq[a] = s;
        }
        const T n = raw_set.raw[i].rotation.norm();
        const T proj = dq.dot(k.rotation);
        g.d_raw_rotation[i] = (dq - k.rotation * proj) / n;
    }
    return g;
}

}  // namespace rgs
