#pragma once

#include <cstdint>
#include <cmath>
#include <random>
#include <sstream>
#include <string>

namespace seqdiff {

// Deterministic random stream. Uniform and normal draws are generated by
// hand (Box-Muller) instead of std::*_distribution so that seeded streams
// are identical across standard library implementations.
class Rng {
public:
    explicit Rng(uint64_t seed = 0) : engine_(seed) {}

    // Derive an independent stream from (base seed, stream index).
    static Rng derive(uint64_t base_seed, uint64_t stream) {
        uint64_t x = base_seed * 0x9e3779b97f4a7c15ull + stream + 1;
        x ^= x >> 30; x *= 0xbf58476d1ce4e5b9ull;
        x ^= x >> 27; x *= 0x94d049bb133111ebull;
        x ^= x >> 31;
        return Rng(x);
    }

    // Uniform on [0, 1).
    double uniform() {
        return (engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform();
    }

    // Standard normal via Box-Muller.
    double normal() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        double u1;
        do { u1 = uniform(); } while (u1 <= 0.0);
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * M_PI * u2;
        cached_ = r * std::sin(a);
        has_cached_ = true;
        return r * std::cos(a);
    }

    uint64_t next_u64() { return engine_(); }

    // Integer in [0, n).
    uint64_t below(uint64_t n) { return engine_() % n; }

    std::string serialize() const {
        std::ostringstream os;
        os << engine_ << ' ' << (has_cached_ ? 1 : 0) << ' ' << cached_;
        return os.str();
    }

    void deserialize(const std::string& s) {
        std::istringstream is(s);
        int flag = 0;
        is >> engine_ >> flag >> cached_;
        has_cached_ = flag != 0;
    }

private:
    std::mt19937_64 engine_;
    bool has_cached_ = false;
    double cached_ = 0.0;
};

}  // namespace seqdiff
