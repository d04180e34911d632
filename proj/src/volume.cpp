#include "rgs/volume.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace rgs {

void AttenuationVolume::validate() const {
    if (dims[0] < 1 || dims[1] < 1 || dims[2] < 1)
        throw std::invalid_argument("volume: dims must be >= 1");
    if (!(spacing.x > 0.0) || !(spacing.y > 0.0) || !(spacing.z > 0.0))
        throw std::invalid_argument("volume: spacing must be positive");
    if (values.size() != static_cast<std::size_t>(dims[0]) * dims[1] * dims[2])
        throw std::invalid_argument("volume: value count does not match dims");
    for (float v : values)
        if (!std::isfinite(v)) throw std::invalid_argument("volume: non-finite value");
}

double AttenuationVolume::sample(const Vec3<double>& x) const {
    // Continuous voxel coordinates with centers at integer positions.
    const double fx = (x.x - origin.x) / spacing.x - 0.5;
    const double fy = (x.y - origin.y) / spacing.y - 0.5;
    const double fz = (x.z - origin.z) / spacing.z - 0.5;
    const int ix = static_cast<int>(std::floor(fx));
    const int iy = static_cast<int>(std::floor(fy));
    const int iz = static_cast<int>(std::floor(fz));
    const double wx = fx - ix, wy = fy - iy, wz = fz - iz;
    double acc = 0.0;
    for (int dz = 0; dz < 2; ++dz)
        for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
                const int px = ix + dx, py = iy + dy, pz = iz + dz;
                if (px < 0 || px >= dims[0] || py < 0 || py >= dims[1] ||
                    pz < 0 || pz >= dims[2])
                    continue;
                const double w = (dx ? wx : 1.0 - wx) * (dy ? wy : 1.0 - wy) *
                                 (dz ? wz : 1.0 - wz);
                acc += w * at(px, py, pz);
            }
    return acc;
}

static std::string sidecar_path(const std::string& path) {
    auto dot = path.find_last_of('.');
    return (dot == std::string::npos ? path : path.substr(0, dot)) + ".txt";
}

void save_volume(const AttenuationVolume& vol, const std::string& path) {
    vol.validate();
    std::ofstream raw(path, std::ios::binary);
    if (!raw) throw std::runtime_error("cannot open " + path + " for writing");
    raw.write(reinterpret_cast<const char*>(vol.values.data()),
              static_cast<std::streamsize>(vol.values.size() * sizeof(float)));
    if (!raw) throw std::runtime_error("failed writing " + path);

    std::ofstream side(sidecar_path(path));
    side.precision(17);
    side << "nx " << vol.dims[0] << "\nny " << vol.dims[1] << "\nnz " << vol.dims[2]
         << "\nsx " << vol.spacing.x << "\nsy " << vol.spacing.y << "\nsz " << vol.spacing.z
         << "\nox " << vol.origin.x << "\noy " << vol.origin.y << "\noz " << vol.origin.z
         << "\n";
    if (!side) throw std::runtime_error("failed writing sidecar for " + path);
}

AttenuationVolume load_volume(const std::string& path) {
    AttenuationVolume vol;
    std::ifstream side(sidecar_path(path));
    if (!side) throw std::runtime_error("missing volume sidecar for " + path);
    std::string key;
    double val;
    while (side >> key >> val) {
        if (key == "nx") vol.dims[0] = static_cast<int>(val);
        else if (key == "ny") vol.dims[1] = static_cast<int>(val);
        else if (key == "nz") vol.dims[2] = static_cast<int>(val);
        else if (key == "sx") vol.spacing.x = val;
        else if (key == "sy") vol.spacing.y = val;
        else if (key == "sz") vol.spacing.z = val;
        else if (key == "ox") vol.origin.x = val;
        else if (key == "oy") vol.origin.y = val;
        else if (key == "oz") vol.origin.z = val;
        else throw std::runtime_error("volume sidecar: unknown key '" + key + "'");
    }
    vol.allocate();
    std::ifstream raw(path, std::ios::binary);
    if (!raw) throw std::runtime_error("cannot open " + path);
    raw.read(reinterpret_cast<char*>(vol.values.data()),
             static_cast<std::streamsize>(vol.values.size() * sizeof(float)));
    if (raw.gcount() != static_cast<std::streamsize>(vol.values.size() * sizeof(float)))
        throw std::runtime_error("volume file shorter than sidecar dims: " + path);
    vol.validate();
    return vol;
}

}  // namespace rgs
