#include "rgs/checkpoint.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace rgs {

namespace {

constexpr char kMagic[4] = {'4', 'D', 'R', 'G'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
    T v;
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw std::runtime_error("checkpoint: truncated file");
    return v;
}

std::uint32_t log2_of(std::size_t v) {
    std::uint32_t l = 0;
    while ((std::size_t(1) << l) < v) ++l;
    return l;
}

void write_encoding(std::ostream& os, const HashEncodingConfig& cfg) {
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(cfg.input_dim));
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(cfg.levels));
    write_pod<std::uint32_t>(os, log2_of(cfg.table_size));
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(cfg.feature_dim));
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(std::lround(cfg.base_resolution * 1000.0)));
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(std::lround(cfg.growth_factor * 1000.0)));
}

HashEncodingConfig read_encoding(std::istream& is) {
    HashEncodingConfig cfg;
    cfg.input_dim = static_cast<int>(read_pod<std::uint32_t>(is));
    cfg.levels = static_cast<int>(read_pod<std::uint32_t>(is));
    cfg.table_size = std::size_t(1) << read_pod<std::uint32_t>(is);
    cfg.feature_dim = static_cast<int>(read_pod<std::uint32_t>(is));
    cfg.base_resolution = read_pod<std::uint32_t>(is) / 1000.0;
    cfg.growth_factor = read_pod<std::uint32_t>(is) / 1000.0;
    cfg.validate();
    return cfg;
}

}  // namespace

void save_checkpoint(const Checkpoint& ck, const std::string& path) {
    ck.kernels.check_consistent();
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("checkpoint: cannot open for write: " + path);

    os.write(kMagic, 4);
    write_pod<std::uint32_t>(os, kVersion);
    write_pod<std::uint64_t>(os, ck.kernels.size());
    write_pod<double>(os, ck.bounds.s_min);
    write_pod<double>(os, ck.bounds.s_max);
    for (const auto& r : ck.kernels.raw) {
        float buf[10] = {r.position.x, r.position.y, r.position.z,
                         r.rotation.w, r.rotation.x, r.rotation.y, r.rotation.z,
                         r.scale.x, r.scale.y, r.scale.z};
        os.write(reinterpret_cast<const char*>(buf), sizeof(buf));
    }

    write_encoding(os, ck.dnaf.cfg3);
    write_encoding(os, ck.dnaf.cfg4);
    for (int a = 0; a < 3; ++a) write_pod<double>(os, ck.dnaf.box_min[a]);
    for (int a = 0; a < 3; ++a) write_pod<double>(os, ck.dnaf.box_max[a]);
    const std::uint64_t count = ck.dnaf.tables3.size() + ck.dnaf.tables4.size() +
                                ck.dnaf.w1.size() + ck.dnaf.b1.size() +
                                ck.dnaf.w2.size() + 1;
    write_pod<std::uint64_t>(os, count);
    auto write_blob = [&os](const std::vector<float>& v) {
        if (!v.empty())
            os.write(reinterpret_cast<const char*>(v.data()),
                     static_cast<std::streamsize>(v.size() * sizeof(float)));
    };
    write_blob(ck.dnaf.tables3);
    write_blob(ck.dnaf.tables4);
    write_blob(ck.dnaf.w1);
    write_blob(ck.dnaf.b1);
    write_blob(ck.dnaf.w2);
    write_pod<float>(os, ck.dnaf.b2);
    if (!os) throw std::runtime_error("checkpoint: write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open: " + path);

    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("checkpoint: bad magic");
    const std::uint32_t version = read_pod<std::uint32_t>(is);
    if (version != kVersion) throw std::runtime_error("checkpoint: unsupported version");

    Checkpoint ck;
    const std::uint64_t m = read_pod<std::uint64_t>(is);
    ck.bounds.s_min = read_pod<double>(is);
    ck.bounds.s_max = read_pod<double>(is);
    ck.bounds.validate();
    ck.kernels.resize(static_cast<std::size_t>(m));
    for (auto& r : ck.kernels.raw) {
        float buf[10];
        is.read(reinterpret_cast<char*>(buf), sizeof(buf));
        if (!is) throw std::runtime_error("checkpoint: truncated kernel block");
        r.position = {buf[0], buf[1], buf[2]};
        r.rotation = {buf[3], buf[4], buf[5], buf[6]};
        r.scale = {buf[7], buf[8], buf[9]};
    }

    ck.dnaf.cfg3 = read_encoding(is);
    ck.dnaf.cfg4 = read_encoding(is);
    for (int a = 0; a < 3; ++a) ck.dnaf.box_min[a] = read_pod<double>(is);
    for (int a = 0; a < 3; ++a) ck.dnaf.box_max[a] = read_pod<double>(is);
    const std::uint64_t count = read_pod<std::uint64_t>(is);
    const int in = ck.dnaf.feature_count();
    const std::size_t n3 = ck.dnaf.cfg3.parameter_count();
    const std::size_t n4 = ck.dnaf.cfg4.parameter_count();
    const std::size_t nw1 = static_cast<std::size_t>(DnafModel<float>::kHidden) * in;
    const std::size_t nb1 = DnafModel<float>::kHidden;
    const std::size_t nw2 = DnafModel<float>::kHidden;
    if (count != n3 + n4 + nw1 + nb1 + nw2 + 1)
        throw std::runtime_error("checkpoint: parameter count disagrees with config");
    auto read_blob = [&is](std::vector<float>& v, std::size_t n) {
        v.resize(n);
        is.read(reinterpret_cast<char*>(v.data()),
                static_cast<std::streamsize>(n * sizeof(float)));
        if (!is) throw std::runtime_error("checkpoint: truncated parameter blob");
    };
    read_blob(ck.dnaf.tables3, n3);
    read_blob(ck.dnaf.tables4, n4);
    read_blob(ck.dnaf.w1, nw1);
    read_blob(ck.dnaf.b1, nb1);
    read_blob(ck.dnaf.w2, nw2);
    ck.dnaf.b2 = read_pod<float>(is);
    return ck;
}

}  // namespace rgs
