#include "rgs/volmesh.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>

namespace rgs {

namespace mc {
extern const int edge_table[256];
extern const int tri_table[256][16];
}  // namespace mc

AttenuationVolume voxelize(const KernelSet<float>& kernels, const DnafModel<float>& dnaf,
                           double t, const VolumeSpec& grid, const ScaleBounds& bounds,
                           double cutoff_sigmas) {
    AttenuationVolume vol;
    vol.dims = grid.dims;
    vol.spacing = grid.spacing;
    vol.origin = grid.origin;
    vol.allocate();
    std::vector<double> accum(vol.values.size(), 0.0);

    for (std::size_t i = 0; i < kernels.size(); ++i) {
        const auto k = activate_kernel(kernels.raw[i], bounds);
        const float rho =
            dnaf_forward_one(dnaf, kernels.raw[i].position, static_cast<float>(t));
        if (rho <= 0.0f) continue;
        const double radius =
            cutoff_sigmas * std::max({k.scale.x, k.scale.y, k.scale.z});
        int lo[3], hi[3];
        for (int a = 0; a < 3; ++a) {
            const double center = k.position[a];
            lo[a] = std::max(0, static_cast<int>(std::floor(
                                    (center - radius - grid.origin[a]) / grid.spacing[a] -
                                    0.5)));
            hi[a] = std::min(grid.dims[a] - 1,
                             static_cast<int>(std::ceil(
                                 (center + radius - grid.origin[a]) / grid.spacing[a] -
                                 0.5)));
        }
        for (int iz = lo[2]; iz <= hi[2]; ++iz)
            for (int iy = lo[1]; iy <= hi[1]; ++iy)
                for (int ix = lo[0]; ix <= hi[0]; ++ix) {
                    const Vec3<double> x = vol.voxel_center(ix, iy, iz);
                    accum[vol.index(ix, iy, iz)] +=
                        kernel_response(k, rho, x.cast<float>());
                }
    }
    for (std::size_t i = 0; i < accum.size(); ++i)
        vol.values[i] = static_cast<float>(std::max(accum[i], 0.0));
    return vol;
}

AttenuationVolume average_volume(const KernelSet<float>& kernels,
                                 const DnafModel<float>& dnaf, int frame_count,
                                 const VolumeSpec& grid, const ScaleBounds& bounds,
                                 double cutoff_sigmas) {
    if (frame_count < 1)
        throw std::invalid_argument("average_volume: frame_count must be >= 1");
    std::vector<double> accum(
        static_cast<std::size_t>(grid.dims[0]) * grid.dims[1] * grid.dims[2], 0.0);
    AttenuationVolume out;
    for (int j = 1; j <= frame_count; ++j) {
        const double t = static_cast<double>(j) / frame_count;
        AttenuationVolume v = voxelize(kernels, dnaf, t, grid, bounds, cutoff_sigmas);
        for (std::size_t i = 0; i < accum.size(); ++i) accum[i] += v.values[i];
        if (j == frame_count) out = std::move(v);
    }
    for (std::size_t i = 0; i < accum.size(); ++i)
        out.values[i] = static_cast<float>(accum[i] / frame_count);
    return out;
}

namespace {

Vec3<double> edge_interp(const Vec3<double>& pa, const Vec3<double>& pb, double va,
                         double vb, double iso) {
    const double denom = vb - va;
    double s = std::abs(denom) > 1e-30 ? (iso - va) / denom : 0.5;
    s = std::clamp(s, 0.0, 1.0);
    return pa + (pb - pa) * s;
}

double triangle_area(const Vec3<double>& a, const Vec3<double>& b, const Vec3<double>& c) {
    return 0.5 * (b - a).cross(c - a).norm();
}

}  // namespace

TriangleMesh marching_cubes(const AttenuationVolume& volume, double iso) {
    volume.validate();
    if (volume.dims[0] < 2 || volume.dims[1] < 2 || volume.dims[2] < 2)
        throw std::invalid_argument("marching_cubes: dims must be >= 2 per axis");

    // Cube corner offsets in the conventional order.
    static const int off[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                                  {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
    static const int edge_corners[12][2] = {{0, 1}, {1, 2}, {2, 3}, {3, 0},
                                            {4, 5}, {5, 6}, {6, 7}, {7, 4},
                                            {0, 4}, {1, 5}, {2, 6}, {3, 7}};

    TriangleMesh mesh;
    for (int iz = 0; iz + 1 < volume.dims[2]; ++iz)
        for (int iy = 0; iy + 1 < volume.dims[1]; ++iy)
            for (int ix = 0; ix + 1 < volume.dims[0]; ++ix) {
                double val[8];
                Vec3<double> pos[8];
                int cube = 0;
                for (int c = 0; c < 8; ++c) {
                    const int px = ix + off[c][0], py = iy + off[c][1], pz = iz + off[c][2];
                    val[c] = volume.at(px, py, pz);
                    pos[c] = volume.voxel_center(px, py, pz);
                    if (val[c] > iso) cube |= 1 << c;
                }
                const int edges = mc::edge_table[cube];
                if (edges == 0) continue;
                Vec3<double> ev[12];
                for (int e = 0; e < 12; ++e)
                    if (edges & (1 << e))
                        ev[e] = edge_interp(pos[edge_corners[e][0]], pos[edge_corners[e][1]],
                                            val[edge_corners[e][0]], val[edge_corners[e][1]],
                                            iso);
                for (int tpos = 0; mc::tri_table[cube][tpos] != -1; tpos += 3) {
                    const Vec3<double> a = ev[mc::tri_table[cube][tpos]];
                    const Vec3<double> b = ev[mc::tri_table[cube][tpos + 1]];
                    const Vec3<double> c = ev[mc::tri_table[cube][tpos + 2]];
                    if (triangle_area(a, b, c) <= 1e-12) continue;
                    const int base = static_cast<int>(mesh.vertices.size());
                    mesh.vertices.push_back(a);
                    mesh.vertices.push_back(b);
                    mesh.vertices.push_back(c);
                    mesh.triangles.push_back({base, base + 1, base + 2});
                }
            }
    return mesh;
}

namespace {

// Uniform grid for exact nearest-point queries (expanding chebyshev rings
// with a distance certificate).
class PointGrid {
public:
    explicit PointGrid(const std::vector<Vec3<double>>& pts) : pts_(pts) {
        lo_ = hi_ = pts.at(0);
        for (const auto& p : pts)
            for (int a = 0; a < 3; ++a) {
                lo_[a] = std::min(lo_[a], p[a]);
                hi_[a] = std::max(hi_[a], p[a]);
            }
        const double extent = std::max({hi_.x - lo_.x, hi_.y - lo_.y, hi_.z - lo_.z, 1e-9});
        cells_ = std::max(1, static_cast<int>(std::cbrt(static_cast<double>(pts.size()))));
        cell_ = extent / cells_;
        buckets_.resize(static_cast<std::size_t>(cells_) * cells_ * cells_);
        for (std::uint32_t i = 0; i < pts.size(); ++i)
            buckets_[bucket(cell_of(pts[i], 0), cell_of(pts[i], 1), cell_of(pts[i], 2))]
                .push_back(i);
    }

    double nearest_distance(const Vec3<double>& q) const {
        const int cx = cell_of(q, 0), cy = cell_of(q, 1), cz = cell_of(q, 2);
        double best = std::numeric_limits<double>::max();
        // Points outside rings 0..r are at least (r * cell) away from q when
        // q lies inside its own cell, minus the offset of q to the grid.
        const int max_ring = 2 * cells_ + 2;
        for (int ring = 0; ring <= max_ring; ++ring) {
            for (int dz = -ring; dz <= ring; ++dz)
                for (int dy = -ring; dy <= ring; ++dy)
                    for (int dx = -ring; dx <= ring; ++dx) {
                        if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != ring)
                            continue;
                        const int bx = cx + dx, by = cy + dy, bz = cz + dz;
                        if (bx < 0 || bx >= cells_ || by < 0 || by >= cells_ || bz < 0 ||
                            bz >= cells_)
                            continue;
                        for (std::uint32_t k : buckets_[bucket(bx, by, bz)])
                            best = std::min(best, (q - pts_[k]).norm());
                    }
            if (best <= ring * cell_) break;
        }
        return best;
    }

private:
    int cell_of(const Vec3<double>& p, int a) const {
        return std::clamp(static_cast<int>((p[a] - lo_[a]) / cell_), 0, cells_ - 1);
    }
    std::size_t bucket(int x, int y, int z) const {
        return (static_cast<std::size_t>(z) * cells_ + y) * cells_ + x;
    }
    const std::vector<Vec3<double>>& pts_;
    Vec3<double> lo_, hi_;
    int cells_ = 1;
    double cell_ = 1.0;
    std::vector<std::vector<std::uint32_t>> buckets_;
};

std::vector<Vec3<double>> sample_surface(const TriangleMesh& mesh, std::size_t n,
                                         std::mt19937_64& rng) {
    std::vector<double> areas(mesh.triangles.size());
    for (std::size_t i = 0; i < mesh.triangles.size(); ++i) {
        const auto& t = mesh.triangles[i];
        areas[i] = triangle_area(mesh.vertices[t[0]], mesh.vertices[t[1]],
                                 mesh.vertices[t[2]]);
    }
    std::discrete_distribution<std::size_t> pick(areas.begin(), areas.end());
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::vector<Vec3<double>> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& t = mesh.triangles[pick(rng)];
        double u = uni(rng), v = uni(rng);
        if (u + v > 1.0) {
            u = 1.0 - u;
            v = 1.0 - v;
        }
        out.push_back(mesh.vertices[t[0]] * (1.0 - u - v) + mesh.vertices[t[1]] * u +
                      mesh.vertices[t[2]] * v);
    }
    return out;
}

void directed_distances(const std::vector<Vec3<double>>& from,
                        const std::vector<Vec3<double>>& to, double& mean, double& max) {
    PointGrid grid(to);
    double sum = 0.0;
    max = 0.0;
    for (const auto& p : from) {
        const double d = grid.nearest_distance(p);
        sum += d;
        max = std::max(max, d);
    }
    mean = sum / from.size();
}

}  // namespace

std::pair<double, double> chamfer_hausdorff(const TriangleMesh& a, const TriangleMesh& b,
                                            std::size_t samples, std::uint64_t seed) {
    if (a.empty() || b.empty())
        throw std::invalid_argument("chamfer_hausdorff: empty mesh");
    if (samples == 0) throw std::invalid_argument("chamfer_hausdorff: samples must be > 0");
    std::mt19937_64 rng_a(seed), rng_b(seed);
    const auto pa = sample_surface(a, samples, rng_a);
    const auto pb = sample_surface(b, samples, rng_b);
    double mean_ab, max_ab, mean_ba, max_ba;
    directed_distances(pa, pb, mean_ab, max_ab);
    directed_distances(pb, pa, mean_ba, max_ba);
    return {0.5 * (mean_ab + mean_ba), std::max(max_ab, max_ba)};
}

void save_obj(const TriangleMesh& mesh, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    os.precision(10);
    for (const auto& v : mesh.vertices)
        os << "v " << v.x << " " << v.y << " " << v.z << "\n";
    for (const auto& t : mesh.triangles)
        os << "f " << t[0] + 1 << " " << t[1] + 1 << " " << t[2] + 1 << "\n";
    if (!os) throw std::runtime_error("failed writing " + path);
}

TriangleMesh load_obj(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open " + path);
    TriangleMesh mesh;
    std::string line;
    while (std::getline(is, line)) {
        std::istringstream ls(line);
        std::string tag;
        if (!(ls >> tag)) continue;
        if (tag == "v") {
            Vec3<double> v;
            ls >> v.x >> v.y >> v.z;
            mesh.vertices.push_back(v);
        } else if (tag == "f") {
            std::array<int, 3> t;
            ls >> t[0] >> t[1] >> t[2];
            mesh.triangles.push_back({t[0] - 1, t[1] - 1, t[2] - 1});
        }
    }
    return mesh;
}

}  // namespace rgs
