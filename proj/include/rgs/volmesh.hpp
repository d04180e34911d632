#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "rgs/dnaf.hpp"
#include "rgs/fdk.hpp"
#include "rgs/kernels.hpp"
#include "rgs/volume.hpp"

namespace rgs {

struct TriangleMesh {
    std::vector<Vec3<double>> vertices;
    std::vector<std::array<int, 3>> triangles;

    bool empty() const { return triangles.empty(); }
};

// Kernel field sampled on a voxel grid at one timestamp; per-kernel central
// attenuation from the DNAF. Kernels contribute inside their 3-sigma box
// (same cutoff convention as the rasterizer footprints).
AttenuationVolume voxelize(const KernelSet<float>& kernels, const DnafModel<float>& dnaf,
                           double t, const VolumeSpec& grid, const ScaleBounds& bounds,
                           double cutoff_sigmas = 3.0);

// Mean of voxelize over the complete frame timestamps t_j = j / T.
AttenuationVolume average_volume(const KernelSet<float>& kernels,
                                 const DnafModel<float>& dnaf, int frame_count,
                                 const VolumeSpec& grid, const ScaleBounds& bounds,
                                 double cutoff_sigmas = 3.0);

// Standard 256-case marching cubes with linear edge interpolation. An iso
// value outside the volume's range yields an empty mesh.
TriangleMesh marching_cubes(const AttenuationVolume& volume, double iso);

// Symmetric Chamfer / Hausdorff distances from area-weighted uniform surface
// samples (seeded). CD is the mean of the two directed mean NN distances;
// HD the max of the two directed maxima.
std::pair<double, double> chamfer_hausdorff(const TriangleMesh& a, const TriangleMesh& b,
                                            std::size_t samples, std::uint64_t seed);

// ASCII OBJ, v/f lines only.
void save_obj(const TriangleMesh& mesh, const std::string& path);
TriangleMesh load_obj(const std::string& path);

}  // namespace rgs
