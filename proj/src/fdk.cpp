#include "rgs/fdk.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace rgs {

namespace {

int next_pow2(int n) {
    int p = 1;
    while (p < n) p <<= 1;
    return p;
}

// Ramp * hann filter of one projection, rows filtered independently along
// the detector-column axis. `da` is the column spacing rescaled to the
// isocenter plane.
Image<double> filter_projection(const Image<double>& proj, double da) {
    const int W = proj.cols;
    const int P = next_pow2(2 * W);
    const int K = P / 2 + 1;

    std::vector<double> real(P);
    std::vector<fftw_complex> freq(K);
    fftw_plan fwd = fftw_plan_dft_r2c_1d(P, real.data(), freq.data(), FFTW_ESTIMATE);
    fftw_plan bwd = fftw_plan_dft_c2r_1d(P, freq.data(), real.data(), FFTW_ESTIMATE);

    const double nyquist = 1.0 / (2.0 * da);
    std::vector<double> response(K);
    for (int k = 0; k < K; ++k) {
        const double nu = static_cast<double>(k) / (P * da);
        const double hann = 0.5 * (1.0 + std::cos(kPi * nu / nyquist));
        response[k] = nu * hann;
    }

    Image<double> out(proj.rows, proj.cols);
    for (int r = 0; r < proj.rows; ++r) {
        std::fill(real.begin(), real.end(), 0.0);
        for (int c = 0; c < W; ++c) real[c] = proj.at(r, c);
        fftw_execute(fwd);
        for (int k = 0; k < K; ++k) {
            freq[k][0] *= response[k];
            freq[k][1] *= response[k];
        }
        fftw_execute(bwd);
        // FFTW's c2r is unnormalized; 1/P restores the inverse transform.
        for (int c = 0; c < W; ++c) out.at(r, c) = real[c] / P;
    }
    fftw_destroy_plan(fwd);
    fftw_destroy_plan(bwd);
    return out;
}

}  // namespace

AttenuationVolume fdk_reconstruct(const ProjectionDataset& dataset, const VolumeSpec& grid) {
    dataset.validate();
    const ScanGeometry& g = dataset.geometry;
    if (dataset.frames.size() < 2)
        throw std::invalid_argument("fdk_reconstruct: need at least 2 frames");

    const double sod = g.source_to_object;
    const double mag = sod / g.source_to_detector;
    const double da = g.du * mag;  // detector rescaled to the isocenter plane
    const double db = g.dv * mag;
    const int W = g.cols, H = g.rows;

    AttenuationVolume vol;
    vol.dims = grid.dims;
    vol.spacing = grid.spacing;
    vol.origin = grid.origin;
    vol.allocate();
    std::vector<double> accum(vol.values.size(), 0.0);

    const double dbeta = deg2rad(g.angular_range) / (dataset.frames.size() - 1);

    for (std::size_t j = 0; j < dataset.frames.size(); ++j) {
        const FrameSpec& frame = dataset.frames[j];
        // Cosine weighting in isocenter-plane coordinates.
        Image<double> weighted(H, W);
        for (int r = 0; r < H; ++r) {
            const double b = (r + 0.5 - 0.5 * H) * db;
            for (int c = 0; c < W; ++c) {
                const double a = (c + 0.5 - 0.5 * W) * da;
                weighted.at(r, c) = dataset.images[j].at(r, c) * sod /
                                    std::sqrt(sod * sod + a * a + b * b);
            }
        }
        Image<double> q = filter_projection(weighted, da);

        const double theta = deg2rad(frame.angle) * g.spin;
        const double ct = std::cos(theta), st = std::sin(theta);
        for (int iz = 0; iz < vol.dims[2]; ++iz) {
            const double z = vol.origin.z + (iz + 0.5) * vol.spacing.z;
            for (int iy = 0; iy < vol.dims[1]; ++iy) {
                const double y = vol.origin.y + (iy + 0.5) * vol.spacing.y;
                for (int ix = 0; ix < vol.dims[0]; ++ix) {
                    const double x = vol.origin.x + (ix + 0.5) * vol.spacing.x;
                    const double U = sod - (x * ct + y * st);
                    if (U <= 1e-6) continue;
                    const double a = sod * (-x * st + y * ct) / U;
                    const double b = sod * z / U;
                    const double fc = a / da - 0.5 + 0.5 * W;
                    const double fr = b / db - 0.5 + 0.5 * H;
                    const int c0 = static_cast<int>(std::floor(fc));
                    const int r0 = static_cast<int>(std::floor(fr));
                    const double wc = fc - c0, wr = fr - r0;
                    double val = 0.0;
                    for (int dr = 0; dr < 2; ++dr)
                        for (int dc = 0; dc < 2; ++dc) {
                            const int rr = r0 + dr, cc = c0 + dc;
                            if (rr < 0 || rr >= H || cc < 0 || cc >= W) continue;
                            val += (dr ? wr : 1.0 - wr) * (dc ? wc : 1.0 - wc) * q.at(rr, cc);
                        }
                    accum[vol.index(ix, iy, iz)] += (sod / U) * (sod / U) * val;
                }
            }
        }
    }

    const double scale = 0.5 * dbeta;
    for (std::size_t i = 0; i < accum.size(); ++i)
        vol.values[i] = static_cast<float>(std::max(accum[i] * scale, 0.0));
    return vol;
}

namespace {

// Exact nearest-neighbor distances via a uniform grid bucket index.
std::vector<double> nearest_neighbor_distances(const std::vector<Vec3<double>>& pts) {
    const std::size_t n = pts.size();
    std::vector<double> out(n, 0.0);
    if (n < 2) return out;

    Vec3<double> lo = pts[0], hi = pts[0];
    for (const auto& p : pts)
        for (int a = 0; a < 3; ++a) {
            lo[a] = std::min(lo[a], p[a]);
            hi[a] = std::max(hi[a], p[a]);
        }
    const double extent = std::max({hi.x - lo.x, hi.y - lo.y, hi.z - lo.z, 1e-9});
    const int cells = std::max(1, static_cast<int>(std::cbrt(static_cast<double>(n))));
    const double cell = extent / cells;

    auto cell_of = [&](const Vec3<double>& p, int a) {
        int c = static_cast<int>((p[a] - lo[a]) / cell);
        return std::clamp(c, 0, cells - 1);
    };
    std::vector<std::vector<std::uint32_t>> buckets(
        static_cast<std::size_t>(cells) * cells * cells);
    auto bucket_index = [&](int cx, int cy, int cz) {
        return (static_cast<std::size_t>(cz) * cells + cy) * cells + cx;
    };
    for (std::uint32_t i = 0; i < n; ++i)
        buckets[bucket_index(cell_of(pts[i], 0), cell_of(pts[i], 1), cell_of(pts[i], 2))]
            .push_back(i);

    for (std::uint32_t i = 0; i < n; ++i) {
        const int cx = cell_of(pts[i], 0), cy = cell_of(pts[i], 1), cz = cell_of(pts[i], 2);
        double best = std::numeric_limits<double>::max();
        // Expand rings until the found distance is certified by the ring bound.
        for (int ring = 0; ring < cells || best == std::numeric_limits<double>::max();
             ++ring) {
            for (int dz = -ring; dz <= ring; ++dz)
                for (int dy = -ring; dy <= ring; ++dy)
                    for (int dx = -ring; dx <= ring; ++dx) {
                        if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != ring)
                            continue;
                        const int bx = cx + dx, by = cy + dy, bz = cz + dz;
                        if (bx < 0 || bx >= cells || by < 0 || by >= cells || bz < 0 ||
                            bz >= cells)
                            continue;
                        for (std::uint32_t k : buckets[bucket_index(bx, by, bz)]) {
                            if (k == i) continue;
                            best = std::min(best, (pts[i] - pts[k]).norm());
                        }
                    }
            if (best <= ring * cell) break;  // no closer point can exist outside
            if (ring >= cells) break;
        }
        out[i] = best;
    }
    return out;
}

}  // namespace

KernelSet<float> sample_initial_kernels(const AttenuationVolume& volume, double delta,
                                        std::size_t m, const ScaleBounds& bounds,
                                        std::uint64_t seed) {
    volume.validate();
    bounds.validate();
    if (m == 0) throw std::invalid_argument("sample_initial_kernels: M must be > 0");

    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < volume.values.size(); ++i)
        if (volume.values[i] > delta) candidates.push_back(i);
    if (candidates.empty())
        throw std::runtime_error(
            "sample_initial_kernels: no voxel above delta; lower the threshold");

    std::mt19937_64 rng(seed);
    std::vector<std::size_t> chosen;
    chosen.reserve(m);
    if (candidates.size() <= m) {
        chosen = candidates;
        std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
        while (chosen.size() < m) chosen.push_back(candidates[pick(rng)]);
    } else {
        // Partial Fisher-Yates: the first m entries become the sample.
        for (std::size_t k = 0; k < m; ++k) {
            std::uniform_int_distribution<std::size_t> pick(k, candidates.size() - 1);
            std::swap(candidates[k], candidates[pick(rng)]);
            chosen.push_back(candidates[k]);
        }
    }

    std::uniform_real_distribution<double> jitter(-0.5, 0.5);
    std::vector<Vec3<double>> positions;
    positions.reserve(m);
    const int nx = volume.dims[0], ny = volume.dims[1];
    for (std::size_t flat : chosen) {
        const int ix = static_cast<int>(flat % nx);
        const int iy = static_cast<int>((flat / nx) % ny);
        const int iz = static_cast<int>(flat / (static_cast<std::size_t>(nx) * ny));
        Vec3<double> p = volume.voxel_center(ix, iy, iz);
        p.x += jitter(rng) * volume.spacing.x;
        p.y += jitter(rng) * volume.spacing.y;
        p.z += jitter(rng) * volume.spacing.z;
        positions.push_back(p);
    }

    const std::vector<double> nn = nearest_neighbor_distances(positions);

    KernelSet<float> ks;
    ks.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
        ks.raw[i].position = positions[i].cast<float>();
        ks.raw[i].rotation = {1.0f, 0.0f, 0.0f, 0.0f};
        const double d = std::clamp(nn[i], bounds.s_min, bounds.s_max);
        const Vec3<float> s{static_cast<float>(d), static_cast<float>(d),
                            static_cast<float>(d)};
        ks.raw[i].scale = invert_scale_activation(s, bounds);
    }
    return ks;
}

}  // namespace rgs
