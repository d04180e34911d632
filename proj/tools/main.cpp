// rgs4d: sparse-view dynamic DSA reconstruction with 4D radiative Gaussian
// kernels. Subcommands wrap the library modules; every run writes a
// reproducibility record (seed, config hash, version) next to its outputs.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rgs/checkpoint.hpp"
#include "rgs/dataset.hpp"
#include "rgs/fdk.hpp"
#include "rgs/geometry.hpp"
#include "rgs/metrics.hpp"
#include "rgs/phantom.hpp"
#include "rgs/raster.hpp"
#include "rgs/trainer.hpp"
#include "rgs/volmesh.hpp"
#include "rgs/volume.hpp"

namespace fs = std::filesystem;
using namespace rgs;

namespace {

constexpr const char* kVersion = "1.0.0";

std::string read_text_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open: " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

// Reproducibility record written next to each subcommand's outputs.
void write_run_record(const fs::path& path, const std::string& command,
                      std::uint64_t seed, const std::string& config_text) {
    std::ofstream os(path);
    os << "command " << command << "\n"
       << "version " << kVersion << "\n"
       << "seed " << seed << "\n"
       << "config_hash " << std::hex << fnv1a(config_text) << std::dec << "\n";
}

void save_frame_f32(const Image<float>& img, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for write: " + path);
    os.write(reinterpret_cast<const char*>(img.values.data()),
             static_cast<std::streamsize>(img.values.size() * sizeof(float)));
}

struct CommonOpts {
    std::string config;
    std::string out;
    std::uint64_t seed = 0;
    int threads = 1;
};

void add_common(CLI::App* cmd, CommonOpts& o, bool out_required = true) {
    cmd->add_option("--config", o.config, "text key-value config file");
    auto* opt = cmd->add_option("--out", o.out, "output path");
    if (out_required) opt->required();
    cmd->add_option("--seed", o.seed, "random seed");
    cmd->add_option("--threads", o.threads, "parallelism degree (1 = sequential)");
}

VolumeSpec grid_from_flags(int dims, double spacing) {
    VolumeSpec grid;
    grid.dims = {dims, dims, dims};
    grid.spacing = {spacing, spacing, spacing};
    const double half = 0.5 * dims * spacing;
    grid.origin = {-half, -half, -half};
    return grid;
}

Image<float> render_frame(const KernelSet<float>& kernels, const DnafModel<float>& dnaf,
                          const ScaleBounds& bounds, const ScanGeometry& geom,
                          const FrameSpec& frame) {
    const auto activated = activate_all(kernels, bounds);
    std::vector<float> rho(kernels.size());
    for (std::size_t i = 0; i < kernels.size(); ++i)
        rho[i] = dnaf_forward_one(dnaf, kernels.raw[i].position,
                                  static_cast<float>(frame.timestamp));
    return splat_forward(activated, rho, geom, frame).values;
}

int cmd_phantom(const CommonOpts& o, bool noise) {
    ScanGeometry geom;
    std::string cfg_text;
    if (!o.config.empty()) {
        cfg_text = read_text_file(o.config);
        geom = geometry_from_manifest_text(cfg_text);
    }
    geom.validate();
    SynthesisConfig syn;
    syn.poisson_noise = noise;
    syn.seed = o.seed;
    syn.quadrature_step = 0.5;  // quarter of the default 2 mm voxel
    const VesselPhantom phantom = default_phantom();
    ProjectionDataset ds = synthesize_dsa_dataset(phantom, geom, syn);
    const VolumeSpec grid;
    ds.ground_truth = phantom_ground_truth(phantom, grid.dims, grid.spacing, grid.origin);
    fs::create_directories(o.out);
    save_dataset(ds, o.out);
    write_run_record(fs::path(o.out) / "run.txt", "phantom", o.seed, cfg_text);
    std::cout << "wrote " << ds.frames.size() << " frames to " << o.out << "\n";
    return 0;
}

int cmd_fdk(const CommonOpts& o, const std::string& dataset_dir, int views, int dims,
            double spacing) {
    ProjectionDataset ds = load_dataset(dataset_dir);
    if (views > 0) {
        const auto idx = subsample_views(static_cast<int>(ds.frames.size()), views);
        ProjectionDataset sub;
        sub.geometry = ds.geometry;
        for (int j : idx) {
            sub.frames.push_back(ds.frames[j - 1]);
            sub.images.push_back(ds.images[j - 1]);
        }
        sub.geometry.frame_count = static_cast<int>(sub.frames.size());
        ds = std::move(sub);
    }
    const VolumeSpec grid = grid_from_flags(dims, spacing);
    const AttenuationVolume vol = fdk_reconstruct(ds, grid);
    save_volume(vol, o.out);
    write_run_record(fs::path(o.out).replace_extension(".run.txt"), "fdk", o.seed, "");
    std::cout << "wrote volume " << o.out << "\n";
    return 0;
}

int cmd_train(const CommonOpts& o, const std::string& dataset_dir, int views, bool fast,
              std::size_t m, double delta, int table_bits) {
    ProjectionDataset ds = load_dataset(dataset_dir);
    const int total = static_cast<int>(ds.frames.size());
    const std::vector<int> train_views = subsample_views(total, views);

    TrainConfig cfg;
    std::string cfg_text;
    if (!o.config.empty()) {
        cfg_text = read_text_file(o.config);
        cfg = parse_train_config(cfg_text);
    }
    if (fast) cfg.set_fast_mode();
    if (o.seed != 0) cfg.seed = o.seed;
    cfg.validate();

    // FDK initialization from the training views only.
    ProjectionDataset sub;
    sub.geometry = ds.geometry;
    for (int j : train_views) {
        sub.frames.push_back(ds.frames[j - 1]);
        sub.images.push_back(ds.images[j - 1]);
    }
    sub.geometry.frame_count = static_cast<int>(sub.frames.size());
    const VolumeSpec grid;
    const AttenuationVolume init_vol = fdk_reconstruct(sub, grid);

    ScaleBounds bounds{0.1 * grid.spacing.x, 10.0 * grid.spacing.x};
    KernelSet<float> kernels = sample_initial_kernels(init_vol, delta, m, bounds, cfg.seed);

    DnafModel<float> dnaf;
    dnaf.cfg3.table_size = std::size_t(1) << table_bits;
    dnaf.cfg4.table_size = std::size_t(1) << table_bits;
    dnaf.box_min = grid.origin;
    dnaf.box_max = grid.origin + Vec3<double>{grid.dims[0] * grid.spacing.x,
                                              grid.dims[1] * grid.spacing.y,
                                              grid.dims[2] * grid.spacing.z};
    dnaf.initialize(cfg.seed);

    fs::create_directories(o.out);
    std::ofstream log(fs::path(o.out) / "log.jsonl");
    TrainCallbacks cb;
    cb.log_line = [&log](const std::string& line) { log << line << "\n"; };
    cb.checkpoint = [&o, &bounds](int iter, const KernelSet<float>& ks,
                                  const DnafModel<float>& dn) {
        std::ostringstream name;
        name << "ck_" << iter << ".bin";
        save_checkpoint({ks, dn, bounds}, (fs::path(o.out) / name.str()).string());
    };

    const TrainResult result = train(ds, train_views, std::move(kernels), std::move(dnaf),
                                     bounds, cfg, cb);
    save_checkpoint({result.kernels, result.dnaf, bounds},
                    (fs::path(o.out) / "final.bin").string());
    {
        std::ofstream cf(fs::path(o.out) / "train_config.txt");
        cf << train_config_to_text(cfg);
    }
    write_run_record(fs::path(o.out) / "run.txt", "train", cfg.seed,
                     train_config_to_text(cfg));
    std::cout << "final loss " << result.final_loss << ", kernels "
              << result.kernels.size() << ", checkpoint " << o.out << "/final.bin\n";
    return 0;
}

int cmd_render(const CommonOpts& o, const std::string& ck_path,
               const std::string& dataset_dir, int frame_idx,
               std::optional<double> angle, std::optional<double> time) {
    const Checkpoint ck = load_checkpoint(ck_path);
    const ProjectionDataset ds = load_dataset(dataset_dir);
    FrameSpec frame;
    if (frame_idx > 0) {
        if (frame_idx > static_cast<int>(ds.frames.size()))
            throw std::runtime_error("frame index out of range");
        frame = ds.frames[frame_idx - 1];
    } else if (angle && time) {
        frame = FrameSpec{0, *angle, *time};
    } else {
        throw std::runtime_error("render: give --frame or both --angle and --time");
    }
    const Image<float> img = render_frame(ck.kernels, ck.dnaf, ck.bounds, ds.geometry, frame);
    save_frame_f32(img, o.out);
    write_run_record(fs::path(o.out).replace_extension(".run.txt"), "render", o.seed, "");
    std::cout << "wrote " << img.rows << "x" << img.cols << " frame " << o.out << "\n";
    return 0;
}

int cmd_voxelize(const CommonOpts& o, const std::string& ck_path, double time,
                 bool average, int frames, int dims, double spacing) {
    const Checkpoint ck = load_checkpoint(ck_path);
    const VolumeSpec grid = grid_from_flags(dims, spacing);
    const AttenuationVolume vol =
        average ? average_volume(ck.kernels, ck.dnaf, frames, grid, ck.bounds)
                : voxelize(ck.kernels, ck.dnaf, time, grid, ck.bounds);
    save_volume(vol, o.out);
    write_run_record(fs::path(o.out).replace_extension(".run.txt"), "voxelize", o.seed, "");
    std::cout << "wrote volume " << o.out << "\n";
    return 0;
}

int cmd_mesh(const CommonOpts& o, const std::string& vol_path, double iso) {
    const AttenuationVolume vol = load_volume(vol_path);
    const TriangleMesh mesh = marching_cubes(vol, iso);
    save_obj(mesh, o.out);
    write_run_record(fs::path(o.out).replace_extension(".run.txt"), "mesh", o.seed, "");
    std::cout << "wrote " << mesh.triangles.size() << " triangles to " << o.out << "\n";
    return 0;
}

int cmd_eval(const CommonOpts& o, const std::string& ck_path,
             const std::string& dataset_dir, int views, bool train_set) {
    const Checkpoint ck = load_checkpoint(ck_path);
    const ProjectionDataset ds = load_dataset(dataset_dir);
    const int total = static_cast<int>(ds.frames.size());
    const std::vector<int> train_views = subsample_views(total, views);
    std::vector<std::uint8_t> is_train(total + 1, 0);
    for (int j : train_views) is_train[j] = 1;

    std::vector<Image<float>> pred, gt;
    std::vector<int> idx;
    for (int j = 1; j <= total; ++j) {
        if (static_cast<bool>(is_train[j]) != train_set) continue;
        pred.push_back(render_frame(ck.kernels, ck.dnaf, ck.bounds, ds.geometry,
                                    ds.frames[j - 1]));
        gt.push_back(ds.images[j - 1]);
        idx.push_back(j);
    }
    const EvalResult res = eval_images(pred, gt, idx);
    {
        std::ofstream os(o.out);
        os << metrics_to_csv(res);
    }
    write_run_record(fs::path(o.out).replace_extension(".run.txt"), "eval", o.seed, "");
    std::cout << "frames " << res.frames.size() << ", mean PSNR " << res.mean_psnr_db
              << " dB, mean SSIM " << res.mean_ssim << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"4D radiative Gaussian splatting for sparse-view dynamic DSA"};
    app.require_subcommand(1);

    CommonOpts o_phantom, o_fdk, o_train, o_render, o_vox, o_mesh, o_eval;

    auto* phantom = app.add_subcommand("phantom", "synthesize a DSA phantom dataset");
    bool noise = false;
    add_common(phantom, o_phantom);
    phantom->add_flag("--noise", noise, "Poisson noise on raw intensities");

    auto* fdk = app.add_subcommand("fdk", "FDK baseline reconstruction");
    std::string fdk_dataset;
    int fdk_views = 0, fdk_dims = 64;
    double fdk_spacing = 2.0;
    add_common(fdk, o_fdk);
    fdk->add_option("--dataset", fdk_dataset, "dataset directory")->required();
    fdk->add_option("--views", fdk_views, "subsample to N training views (0 = all)");
    fdk->add_option("--dims", fdk_dims, "cubic grid dimension");
    fdk->add_option("--spacing", fdk_spacing, "voxel spacing, mm");

    auto* tr = app.add_subcommand("train", "optimize kernels + attenuation field");
    std::string tr_dataset;
    int tr_views = 30, tr_table_bits = 19;
    bool tr_fast = false;
    std::size_t tr_kernels = 30000;
    double tr_delta = 0.016;
    add_common(tr, o_train);
    tr->add_option("--dataset", tr_dataset, "dataset directory")->required();
    tr->add_option("--views", tr_views, "training view count N");
    tr->add_flag("--fast", tr_fast, "10k iterations, adaptive control ends at 5k");
    tr->add_option("--kernels", tr_kernels, "initial kernel count M");
    tr->add_option("--delta", tr_delta, "FDK seeding attenuation threshold");
    tr->add_option("--table-bits", tr_table_bits, "hash table size = 2^bits");

    auto* rd = app.add_subcommand("render", "synthesize a DSA image from a checkpoint");
    std::string rd_ck, rd_dataset;
    int rd_frame = 0;
    std::optional<double> rd_angle, rd_time;
    add_common(rd, o_render);
    rd->add_option("--checkpoint", rd_ck, "checkpoint file")->required();
    rd->add_option("--dataset", rd_dataset, "dataset directory (geometry source)")->required();
    rd->add_option("--frame", rd_frame, "1-based dataset frame index");
    rd->add_option("--angle", rd_angle, "view angle, degrees");
    rd->add_option("--time", rd_time, "normalized timestamp");

    auto* vx = app.add_subcommand("voxelize", "sample the kernel field on a grid");
    std::string vx_ck;
    double vx_time = 1.0;
    bool vx_average = false;
    int vx_frames = 133, vx_dims = 64;
    double vx_spacing = 2.0;
    add_common(vx, o_vox);
    vx->add_option("--checkpoint", vx_ck, "checkpoint file")->required();
    vx->add_option("--time", vx_time, "timestamp for a single-time volume");
    vx->add_flag("--average", vx_average, "average over all frame timestamps");
    vx->add_option("--frames", vx_frames, "frame count T for averaging");
    vx->add_option("--dims", vx_dims, "cubic grid dimension");
    vx->add_option("--spacing", vx_spacing, "voxel spacing, mm");

    auto* ms = app.add_subcommand("mesh", "marching cubes surface extraction");
    std::string ms_vol;
    double ms_iso = 0.008;
    add_common(ms, o_mesh);
    ms->add_option("--volume", ms_vol, "input .f32 volume")->required();
    ms->add_option("--iso", ms_iso, "iso threshold");

    auto* ev = app.add_subcommand("eval", "PSNR/SSIM over held-out frames");
    std::string ev_ck, ev_dataset;
    int ev_views = 30;
    bool ev_train_set = false;
    add_common(ev, o_eval);
    ev->add_option("--checkpoint", ev_ck, "checkpoint file")->required();
    ev->add_option("--dataset", ev_dataset, "dataset directory")->required();
    ev->add_option("--views", ev_views, "training view count N (test = complement)");
    ev->add_flag("--train-set", ev_train_set, "evaluate the training views instead");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return e.get_exit_code() == 0 ? 0 : 2;
    }

    try {
        if (phantom->parsed()) return cmd_phantom(o_phantom, noise);
        if (fdk->parsed()) return cmd_fdk(o_fdk, fdk_dataset, fdk_views, fdk_dims, fdk_spacing);
        if (tr->parsed())
            return cmd_train(o_train, tr_dataset, tr_views, tr_fast, tr_kernels, tr_delta,
                             tr_table_bits);
        if (rd->parsed()) return cmd_render(o_render, rd_ck, rd_dataset, rd_frame, rd_angle, rd_time);
        if (vx->parsed())
            return cmd_voxelize(o_vox, vx_ck, vx_time, vx_average, vx_frames, vx_dims, vx_spacing);
        if (ms->parsed()) return cmd_mesh(o_mesh, ms_vol, ms_iso);
        if (ev->parsed()) return cmd_eval(o_eval, ev_ck, ev_dataset, ev_views, ev_train_set);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
