#pragma once

#include <cstdint>

#include "rgs/dataset.hpp"
#include "rgs/kernels.hpp"
#include "rgs/volume.hpp"

namespace rgs {

struct VolumeSpec {
    std::array<int, 3> dims{64, 64, 64};
    Vec3<double> spacing{2.0, 2.0, 2.0};
    Vec3<double> origin{-64.0, -64.0, -64.0};
};

// Feldkamp reconstruction: cosine weighting, frequency-domain ramp filter
// with a hann window (zero-padded to the next power of two >= 2W), and
// voxel-driven backprojection with (SOD/U)^2 weighting. No short-scan
// redundancy weighting; on a 198-degree arc the result is a coarse
// initializer, not a quantitative reconstruction.
AttenuationVolume fdk_reconstruct(const ProjectionDataset& dataset, const VolumeSpec& grid);

// Seed kernels from voxels above `delta`: positions jittered inside the
// voxel, activated scales from exact nearest-neighbor distances, raw
// rotations [1,0,0,0].
KernelSet<float> sample_initial_kernels(const AttenuationVolume& volume, double delta,
                                        std::size_t m, const ScaleBounds& bounds,
                                        std::uint64_t seed);

}  // namespace rgs
