#pragma once

#include <optional>
#include <string>
#include <vector>

#include "rgs/geometry.hpp"
#include "rgs/image.hpp"
#include "rgs/volume.hpp"

namespace rgs {

// DSA projection stack with its acquisition geometry. Directory layout:
//   manifest.txt            geometry keys + one "frame <j> <angle> <t>" line each
//   frames/frame_0001.f32   row-major little-endian f32, rows x cols
//   gt_volume.f32/.txt      optional ground-truth volume
struct ProjectionDataset {
    ScanGeometry geometry;
    std::vector<FrameSpec> frames;
    std::vector<Image<float>> images;
    std::optional<AttenuationVolume> ground_truth;

    void validate() const;
};

void save_dataset(const ProjectionDataset& ds, const std::string& dir);
ProjectionDataset load_dataset(const std::string& dir);

}  // namespace rgs
