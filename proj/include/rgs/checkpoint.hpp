#pragma once

#include <string>

#include "rgs/dnaf.hpp"
#include "rgs/kernels.hpp"

namespace rgs {

// Binary checkpoint, little-endian. Layout:
//   char[4]  magic "4DRG"
//   u32      version (currently 1)
//   u64      M (kernel count)
//   f64 x2   scale bounds s_min, s_max
//   f32 x10  per kernel: raw position (3), raw rotation (w,x,y,z), raw scale (3)
// followed by the attenuation-field section:
//   u32 x12  two encoding configs, each: input_dim, levels, log2(table_size),
//            feature_dim, base_resolution*1000, growth_factor*1000
//   f64 x6   scene box min, box max
//   u64      parameter count P
//   f32 xP   tables3 | tables4 | w1 | b1 | w2 | b2
struct Checkpoint {
    KernelSet<float> kernels;
    DnafModel<float> dnaf;
    ScaleBounds bounds;
};

void save_checkpoint(const Checkpoint& ck, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace rgs
