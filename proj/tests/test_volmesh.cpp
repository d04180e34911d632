#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <map>
#include <random>
#include <set>

#include "rgs/volmesh.hpp"

using namespace rgs;

namespace {

const ScaleBounds kBounds{0.2, 20.0};

DnafModel<float> constant_dnaf(float rho) {
    DnafModel<float> m;
    m.cfg3 = {3, 2, 256, 2, 4.0, 1.5};
    m.cfg4 = {4, 2, 256, 2, 2.0, 1.4};
    m.initialize(1);
    std::fill(m.tables3.begin(), m.tables3.end(), 0.0f);
    std::fill(m.tables4.begin(), m.tables4.end(), 0.0f);
    std::fill(m.w1.begin(), m.w1.end(), 0.0f);
    std::fill(m.b1.begin(), m.b1.end(), 0.0f);
    std::fill(m.w2.begin(), m.w2.end(), 0.0f);
    m.b2 = rho;
    return m;
}

KernelSet<float> random_kernels(std::mt19937_64& rng, std::size_t m) {
    std::uniform_real_distribution<float> pos(-24.0f, 24.0f);
    std::uniform_real_distribution<float> rot(-1.0f, 1.0f);
    std::uniform_real_distribution<float> sc(-1.0f, 1.0f);
    KernelSet<float> ks;
    ks.resize(m);
    for (auto& r : ks.raw) {
        r.position = {pos(rng), pos(rng), pos(rng)};
        do {
            r.rotation = {rot(rng), rot(rng), rot(rng), rot(rng)};
        } while (r.rotation.norm() < 0.1f);
        r.scale = {sc(rng), sc(rng), sc(rng)};
    }
    return ks;
}

AttenuationVolume sphere_volume(double radius) {
    AttenuationVolume vol;
    vol.dims = {40, 40, 40};
    vol.spacing = {1.0, 1.0, 1.0};
    vol.origin = {-20.0, -20.0, -20.0};
    vol.allocate();
    for (int iz = 0; iz < 40; ++iz)
        for (int iy = 0; iy < 40; ++iy)
            for (int ix = 0; ix < 40; ++ix)
                vol.at(ix, iy, iz) =
                    static_cast<float>(radius - vol.voxel_center(ix, iy, iz).norm());
    return vol;
}

TriangleMesh unit_square_at(double z) {
    TriangleMesh m;
    m.vertices = {{0, 0, z}, {1, 0, z}, {1, 1, z}, {0, 1, z}};
    m.triangles = {{0, 1, 2}, {0, 2, 3}};
    return m;
}

}  // namespace

TEST_CASE("voxelize matches the brute-force field") {
    std::mt19937_64 rng(51);
    const VolumeSpec grid{{8, 8, 8}, {6.0, 6.0, 6.0}, {-24.0, -24.0, -24.0}};
    const DnafModel<float> dnaf = constant_dnaf(0.04f);

    // Zero kernels.
    KernelSet<float> none;
    none.resize(0);
    const AttenuationVolume empty = voxelize(none, dnaf, 0.5, grid, kBounds);
    for (float v : empty.values) CHECK(v == 0.0f);

    // Single kernel: the voxel at its center carries rho.
    KernelSet<float> one;
    one.resize(1);
    one.raw[0].position = {static_cast<float>(grid.origin.x + 3.5 * grid.spacing.x),
                           static_cast<float>(grid.origin.y + 3.5 * grid.spacing.y),
                           static_cast<float>(grid.origin.z + 3.5 * grid.spacing.z)};
    one.raw[0].rotation = {1, 0, 0, 0};
    one.raw[0].scale = invert_scale_activation(Vec3<float>{3.0f, 3.0f, 3.0f}, kBounds);
    const AttenuationVolume single = voxelize(one, dnaf, 0.5, grid, kBounds);
    CHECK(single.at(3, 3, 3) == doctest::Approx(0.04).epsilon(1e-5));

    // Random set vs the uncut brute-force sum.
    KernelSet<float> ks = random_kernels(rng, 10);
    const AttenuationVolume got = voxelize(ks, dnaf, 0.5, grid, kBounds);
    const auto activated = activate_all(ks, kBounds);
    double rho_total = 10 * 0.04;
    const double bound = rho_total * std::exp(-4.5);
    for (int iz = 0; iz < 8; ++iz)
        for (int iy = 0; iy < 8; ++iy)
            for (int ix = 0; ix < 8; ++ix) {
                const Vec3<double> x = got.voxel_center(ix, iy, iz);
                double want = 0.0;
                for (const auto& k : activated) {
                    const Vec3<float> d = x.cast<float>() - k.position;
                    want += 0.04 * std::exp(-0.5 * d.dot(k.precision * d));
                }
                CHECK(std::abs(got.at(ix, iy, iz) - want) <= bound + 1e-6);
            }
}

TEST_CASE("average_volume is the mean of per-frame volumes") {
    std::mt19937_64 rng(52);
    const VolumeSpec grid{{6, 6, 6}, {8.0, 8.0, 8.0}, {-24.0, -24.0, -24.0}};
    KernelSet<float> ks = random_kernels(rng, 6);

    // Time-constant field: the average equals any single frame.
    const DnafModel<float> constant = constant_dnaf(0.03f);
    const AttenuationVolume avg_c = average_volume(ks, constant, 5, grid, kBounds);
    const AttenuationVolume one_c = voxelize(ks, constant, 0.4, grid, kBounds);
    for (std::size_t i = 0; i < avg_c.values.size(); ++i)
        CHECK(avg_c.values[i] == doctest::Approx(one_c.values[i]).epsilon(1e-6));

    // Time-varying field: equality with the explicitly computed mean.
    DnafModel<float> varying = constant_dnaf(0.03f);
    varying.initialize(53);
    const int T = 7;
    const AttenuationVolume avg = average_volume(ks, varying, T, grid, kBounds);
    std::vector<double> mean(avg.values.size(), 0.0);
    for (int j = 1; j <= T; ++j) {
        const AttenuationVolume v =
            voxelize(ks, varying, static_cast<double>(j) / T, grid, kBounds);
        for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += v.values[i];
    }
    for (std::size_t i = 0; i < mean.size(); ++i)
        CHECK(avg.values[i] == doctest::Approx(mean[i] / T).epsilon(1e-6));
}

TEST_CASE("marching cubes recovers an analytic sphere") {
    const double radius = 11.0;
    const AttenuationVolume vol = sphere_volume(radius);
    const TriangleMesh mesh = marching_cubes(vol, 0.0);
    REQUIRE_FALSE(mesh.empty());

    // Vertices sit on the radius within a voxel.
    for (const auto& v : mesh.vertices)
        CHECK(std::abs(v.norm() - radius) <= 1.0);

    // Watertight: Euler characteristic V - E + F = 2 for a sphere.
    std::map<std::array<long long, 3>, int> vmap;
    auto key = [](const Vec3<double>& v) {
        return std::array<long long, 3>{static_cast<long long>(std::llround(v.x * 1e6)),
                                        static_cast<long long>(std::llround(v.y * 1e6)),
                                        static_cast<long long>(std::llround(v.z * 1e6))};
    };
    std::vector<int> remap(mesh.vertices.size());
    int unique = 0;
    for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
        auto k = key(mesh.vertices[i]);
        auto it = vmap.find(k);
        if (it == vmap.end()) {
            vmap[k] = unique;
            remap[i] = unique++;
        } else {
            remap[i] = it->second;
        }
    }
    std::set<std::pair<int, int>> edges;
    for (const auto& t : mesh.triangles) {
        const int a = remap[t[0]], b = remap[t[1]], c = remap[t[2]];
        edges.insert({std::min(a, b), std::max(a, b)});
        edges.insert({std::min(b, c), std::max(b, c)});
        edges.insert({std::min(a, c), std::max(a, c)});
    }
    const long long euler = static_cast<long long>(unique) -
                            static_cast<long long>(edges.size()) +
                            static_cast<long long>(mesh.triangles.size());
    CHECK(euler == 2);

    // No degenerate triangles.
    for (const auto& t : mesh.triangles) {
        const Vec3<double> e1 = mesh.vertices[t[1]] - mesh.vertices[t[0]];
        const Vec3<double> e2 = mesh.vertices[t[2]] - mesh.vertices[t[0]];
        CHECK(0.5 * e1.cross(e2).norm() > 1e-12);
    }
}

TEST_CASE("marching cubes edge cases") {
    AttenuationVolume vol;
    vol.dims = {4, 4, 4};
    vol.spacing = {1.0, 1.0, 1.0};
    vol.allocate();
    std::fill(vol.values.begin(), vol.values.end(), 0.001f);
    CHECK(marching_cubes(vol, 0.008).empty());

    AttenuationVolume thin;
    thin.dims = {1, 4, 4};
    thin.spacing = {1.0, 1.0, 1.0};
    thin.allocate();
    CHECK_THROWS_AS(marching_cubes(thin, 0.5), std::invalid_argument);
}

TEST_CASE("chamfer and hausdorff distances") {
    const TriangleMesh a = unit_square_at(0.0);

    // Identical meshes with identical sampling.
    const auto same = chamfer_hausdorff(a, a, 20000, 9);
    CHECK(same.first == 0.0);
    CHECK(same.second == 0.0);

    // Parallel planes offset by d.
    const double d = 0.37;
    const TriangleMesh b = unit_square_at(d);
    const auto off = chamfer_hausdorff(a, b, 100000, 10);
    CHECK(off.first == doctest::Approx(d).epsilon(0.02));
    CHECK(off.second == doctest::Approx(d).epsilon(0.02));

    // Symmetry.
    const auto swapped = chamfer_hausdorff(b, a, 100000, 10);
    CHECK(off.first == doctest::Approx(swapped.first).epsilon(1e-12));
    CHECK(off.second == doctest::Approx(swapped.second).epsilon(1e-12));

    TriangleMesh empty;
    CHECK_THROWS_AS(chamfer_hausdorff(a, empty, 100, 1), std::invalid_argument);
}

TEST_CASE("obj round trip") {
    const AttenuationVolume vol = sphere_volume(8.0);
    const TriangleMesh mesh = marching_cubes(vol, 0.0);
    const std::string path = "test_mesh_roundtrip.obj";
    save_obj(mesh, path);
    const TriangleMesh back = load_obj(path);
    std::remove(path.c_str());
    REQUIRE(back.vertices.size() == mesh.vertices.size());
    REQUIRE(back.triangles.size() == mesh.triangles.size());
    for (std::size_t i = 0; i < mesh.vertices.size(); ++i)
        CHECK((back.vertices[i] - mesh.vertices[i]).norm() < 1e-5);
    for (std::size_t i = 0; i < mesh.triangles.size(); ++i)
        CHECK(back.triangles[i] == mesh.triangles[i]);
}
