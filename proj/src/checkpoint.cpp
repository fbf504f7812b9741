#include "seqdiff/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace seqdiff {

namespace {

constexpr char kMagic[4] = {'S', 'Q', 'D', 'C'};
constexpr uint32_t kVersion = 1;

void write_u32(std::ostream& os, uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }
void write_u64(std::ostream& os, uint64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); }
void write_f64(std::ostream& os, double v) { os.write(reinterpret_cast<const char*>(&v), 8); }

void write_string(std::ostream& os, const std::string& s) {
    write_u64(os, s.size());
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void write_matrix(std::ostream& os, const ad::Matrix& m) {
    write_u64(os, static_cast<uint64_t>(m.rows()));
    write_u64(os, static_cast<uint64_t>(m.cols()));
    os.write(reinterpret_cast<const char*>(m.data()),
             static_cast<std::streamsize>(sizeof(double) * m.size()));
}

uint32_t read_u32(std::istream& is) { uint32_t v; is.read(reinterpret_cast<char*>(&v), 4); return v; }
uint64_t read_u64(std::istream& is) { uint64_t v; is.read(reinterpret_cast<char*>(&v), 8); return v; }
double read_f64(std::istream& is) { double v; is.read(reinterpret_cast<char*>(&v), 8); return v; }

std::string read_string(std::istream& is) {
    uint64_t n = read_u64(is);
    std::string s(n, '\0');
    is.read(s.data(), static_cast<std::streamsize>(n));
    return s;
}

void read_matrix_into(std::istream& is, ad::Matrix& m, const std::string& name) {
    uint64_t r = read_u64(is), c = read_u64(is);
    if (static_cast<Eigen::Index>(r) != m.rows() ||
        static_cast<Eigen::Index>(c) != m.cols()) {
        throw std::runtime_error("checkpoint tensor shape mismatch: " + name);
    }
    is.read(reinterpret_cast<char*>(m.data()),
            static_cast<std::streamsize>(sizeof(double) * m.size()));
}

}  // namespace

void save_checkpoint(const std::string& path, const std::string& config_text,
                     const Denoiser& denoiser, const EmbeddingTable& table,
                     Trainer& trainer) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write checkpoint: " + path);
    os.write(kMagic, 4);
    write_u32(os, kVersion);
    write_string(os, config_text);
    write_u64(os, trainer.step());
    write_string(os, trainer.rng().serialize());
    write_string(os, trainer.time_sampler().rng().serialize());
    write_f64(os, trainer.time_sampler().t_min());

    const auto& clip = trainer.clipping();
    write_f64(os, clip.delta_sq);
    write_f64(os, clip.sigma_min);
    write_u64(os, clip.step_computed);

    write_u64(os, denoiser.params().size() + 1);
    for (const auto& [name, var] : denoiser.params()) {
        write_string(os, name);
        write_matrix(os, var->value);
    }
    write_string(os, "embed");
    write_matrix(os, table.matrix());

    auto& opt = trainer.optimizer();
    write_u64(os, opt.steps_taken());
    write_u64(os, opt.moments_m().size());
    for (const auto& m : opt.moments_m()) write_matrix(os, m);
    for (const auto& v : opt.moments_v()) write_matrix(os, v);
    if (!os) throw std::runtime_error("checkpoint write failed: " + path);
}

std::string load_checkpoint(const std::string& path, Denoiser& denoiser,
                            EmbeddingTable& table, Trainer& trainer) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot read checkpoint: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0) {
        throw std::runtime_error("not a checkpoint file: " + path);
    }
    uint32_t version = read_u32(is);
    if (version != kVersion) {
        throw std::runtime_error("unsupported checkpoint format version " +
                                 std::to_string(version));
    }
    std::string config_text = read_string(is);
    trainer.set_step(read_u64(is));
    trainer.rng().deserialize(read_string(is));
    trainer.time_sampler().rng().deserialize(read_string(is));
    trainer.time_sampler().set_t_min(read_f64(is));

    ClippingEstimate est;
    est.delta_sq = read_f64(is);
    est.sigma_min = read_f64(is);
    est.step_computed = read_u64(is);
    trainer.clipping_tracker().set_cache(est);

    uint64_t n_tensors = read_u64(is);
    if (n_tensors != denoiser.params().size() + 1) {
        throw std::runtime_error("checkpoint tensor count mismatch");
    }
    for (const auto& [name, var] : denoiser.params()) {
        std::string stored = read_string(is);
        if (stored != name) {
            throw std::runtime_error("checkpoint tensor order mismatch: expected " +
                                     name + ", got " + stored);
        }
        read_matrix_into(is, var->value, name);
    }
    std::string stored = read_string(is);
    if (stored != "embed") throw std::runtime_error("checkpoint missing embedding table");
    read_matrix_into(is, table.matrix(), "embed");

    auto& opt = trainer.optimizer();
    opt.set_steps_taken(read_u64(is));
    uint64_t n_m = read_u64(is);
    if (n_m != opt.moments_m().size()) {
        throw std::runtime_error("checkpoint optimizer state mismatch");
    }
    for (auto& m : opt.moments_m()) read_matrix_into(is, m, "adam.m");
    for (auto& v : opt.moments_v()) read_matrix_into(is, v, "adam.v");
    if (!is) throw std::runtime_error("truncated checkpoint: " + path);
    return config_text;
}

}  // namespace seqdiff
