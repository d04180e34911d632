#include "rgs/metrics.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "rgs/loss.hpp"

namespace rgs {

namespace {
constexpr double kPsnrCap = 99.0;
}

EvalResult eval_images(const std::vector<Image<float>>& pred,
                       const std::vector<Image<float>>& gt,
                       const std::vector<int>& frame_indices) {
    if (pred.size() != gt.size())
        throw std::invalid_argument("eval_images: frame count mismatch");
    if (!frame_indices.empty() && frame_indices.size() != pred.size())
        throw std::invalid_argument("eval_images: frame index count mismatch");

    EvalResult res;
    res.frames.reserve(pred.size());
    for (std::size_t f = 0; f < pred.size(); ++f) {
        if (!pred[f].same_shape(gt[f]))
            throw std::invalid_argument("eval_images: image dims mismatch");
        const Image<double> p = pred[f].cast<double>();
        const Image<double> g = gt[f].cast<double>();
        const std::size_t n = p.size();
        if (n == 0) throw std::invalid_argument("eval_images: empty image");

        double mse = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double d = p.values[i] - g.values[i];
            mse += d * d;
        }
        mse /= static_cast<double>(n);
        const double range = dynamic_range(g);
        FrameMetrics fm;
        fm.frame_index = frame_indices.empty() ? static_cast<int>(f + 1) : frame_indices[f];
        fm.psnr_db = mse == 0.0
                         ? kPsnrCap
                         : std::min(kPsnrCap, 10.0 * std::log10(range * range / mse));
        fm.ssim = ssim_mean(p, g);
        res.frames.push_back(fm);
        res.mean_psnr_db += fm.psnr_db;
        res.mean_ssim += fm.ssim;
    }
    if (!res.frames.empty()) {
        res.mean_psnr_db /= static_cast<double>(res.frames.size());
        res.mean_ssim /= static_cast<double>(res.frames.size());
    }
    return res;
}

std::string metrics_to_csv(const EvalResult& result) {
    std::ostringstream os;
    os.precision(10);
    os << "frame_index,psnr_db,ssim\n";
    for (const auto& fm : result.frames)
        os << fm.frame_index << ',' << fm.psnr_db << ',' << fm.ssim << '\n';
    return os.str();
}

}  // namespace rgs
