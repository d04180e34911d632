#pragma once

#include <array>
#include <string>
#include <vector>

#include "rgs/vec.hpp"

namespace rgs {

// Regular voxel grid of attenuation values. Origin is the corner of the
// grid; voxel centers sit at origin + (i + 0.5) * spacing.
struct AttenuationVolume {
    std::array<int, 3> dims{1, 1, 1};          // nx, ny, nz
    Vec3<double> spacing{1.0, 1.0, 1.0};       // mm
    Vec3<double> origin{0.0, 0.0, 0.0};        // mm, grid corner
    std::vector<float> values;                 // x-fastest order

    void allocate() {
        values.assign(static_cast<std::size_t>(dims[0]) * dims[1] * dims[2], 0.0f);
    }
    std::size_t index(int ix, int iy, int iz) const {
        return (static_cast<std::size_t>(iz) * dims[1] + iy) * dims[0] + ix;
    }
    float& at(int ix, int iy, int iz) { return values[index(ix, iy, iz)]; }
    float at(int ix, int iy, int iz) const { return values[index(ix, iy, iz)]; }

    Vec3<double> voxel_center(int ix, int iy, int iz) const {
        return {origin.x + (ix + 0.5) * spacing.x,
                origin.y + (iy + 0.5) * spacing.y,
                origin.z + (iz + 0.5) * spacing.z};
    }

    void validate() const;

    // Trilinear interpolation at a world point; zero outside the grid.
    double sample(const Vec3<double>& x) const;
};

// Shared raw-f32 + text-sidecar format. `path` is the .f32 file; the sidecar
// replaces the extension with .txt and carries dims/spacing/origin.
void save_volume(const AttenuationVolume& vol, const std::string& path);
AttenuationVolume load_volume(const std::string& path);

}  // namespace rgs
