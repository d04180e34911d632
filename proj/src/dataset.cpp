#include "rgs/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace rgs {

void ProjectionDataset::validate() const {
    geometry.validate();
    if (static_cast<int>(frames.size()) != geometry.frame_count)
        throw std::invalid_argument("dataset: frame count does not match manifest");
    if (images.size() != frames.size())
        throw std::invalid_argument("dataset: image count does not match frames");
    for (const auto& img : images) {
        if (img.rows != geometry.rows || img.cols != geometry.cols)
            throw std::invalid_argument("dataset: image dims do not match manifest");
        for (float v : img.values)
            if (!std::isfinite(v) || v < 0.0f)
                throw std::invalid_argument("dataset: image values must be finite and >= 0");
    }
}

static std::string frame_filename(int j) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "frame_%04d.f32", j);
    return buf;
}

void save_dataset(const ProjectionDataset& ds, const std::string& dir) {
    ds.validate();
    fs::create_directories(fs::path(dir) / "frames");
    std::ofstream man(fs::path(dir) / "manifest.txt");
    if (!man) throw std::runtime_error("cannot write manifest in " + dir);
    man << geometry_to_manifest(ds.geometry);
    man.precision(17);
    for (const auto& f : ds.frames)
        man << "frame " << f.index << " " << f.angle << " " << f.timestamp << "\n";
    for (std::size_t i = 0; i < ds.images.size(); ++i) {
        const auto path = fs::path(dir) / "frames" / frame_filename(ds.frames[i].index);
        std::ofstream raw(path, std::ios::binary);
        raw.write(reinterpret_cast<const char*>(ds.images[i].values.data()),
                  static_cast<std::streamsize>(ds.images[i].values.size() * sizeof(float)));
        if (!raw) throw std::runtime_error("failed writing " + path.string());
    }
    if (ds.ground_truth)
        save_volume(*ds.ground_truth, (fs::path(dir) / "gt_volume.f32").string());
}

ProjectionDataset load_dataset(const std::string& dir) {
    std::ifstream man(fs::path(dir) / "manifest.txt");
    if (!man) throw std::runtime_error("missing manifest.txt in " + dir);
    std::stringstream buffer;
    buffer << man.rdbuf();
    const std::string text = buffer.str();

    ProjectionDataset ds;
    ds.geometry = geometry_from_manifest_text(text);

    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        std::istringstream ls(line);
        std::string key;
        if (!(ls >> key) || key != "frame") continue;
        FrameSpec f;
        if (!(ls >> f.index >> f.angle >> f.timestamp))
            throw std::runtime_error("manifest: malformed frame line: " + line);
        ds.frames.push_back(f);
    }
    if (static_cast<int>(ds.frames.size()) != ds.geometry.frame_count)
        throw std::runtime_error("manifest: frame lines disagree with 'frames' key");

    ds.images.reserve(ds.frames.size());
    const std::size_t n = static_cast<std::size_t>(ds.geometry.rows) * ds.geometry.cols;
    for (const auto& f : ds.frames) {
        const auto path = fs::path(dir) / "frames" / frame_filename(f.index);
        std::ifstream raw(path, std::ios::binary);
        if (!raw) throw std::runtime_error("missing frame file " + path.string());
        Image<float> img(ds.geometry.rows, ds.geometry.cols);
        raw.read(reinterpret_cast<char*>(img.values.data()),
                 static_cast<std::streamsize>(n * sizeof(float)));
        if (raw.gcount() != static_cast<std::streamsize>(n * sizeof(float)))
            throw std::runtime_error("frame file truncated: " + path.string());
        ds.images.push_back(std::move(img));
    }
    const auto gt = fs::path(dir) / "gt_volume.f32";
    if (fs::exists(gt)) ds.ground_truth = load_volume(gt.string());
    ds.validate();
    return ds;
}

}  // namespace rgs
