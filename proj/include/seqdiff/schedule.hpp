#pragma once

#include <string>

#include "seqdiff/rng.hpp"

namespace seqdiff {

// Variance-preserving noise schedule sigma(t) on [0, 1] with
// alpha(t) = sqrt(1 - sigma^2(t)). Two kinds are supported:
//   linear: sigma(t) = t
//   sqrt:   sigma(t) = t^0.25
struct NoiseSchedule {
    enum class Kind { linear, sqrt };

    Kind kind = Kind::linear;

    static NoiseSchedule parse(const std::string& name);
    const char* name() const { return kind == Kind::linear ? "linear" : "sqrt"; }

    double sigma(double t) const;
    double alpha(double t) const;
    double sigma_inverse(double s) const;

    // d sigma / d t; diverges at t = 0 for the sqrt kind.
    double sigma_prime(double t) const;

    // beta(t) = -2 d log alpha / dt = 2 sigma sigma' / (1 - sigma^2).
    // Derived accessor only; the samplers never consume it.
    double beta(double t) const;
};

// Weight relating uniform-time training under `from` to uniform-sigma
// training expressed on `to`'s time axis:
//   w'(sigma) = (dt/dsigma under from) / (dt/dsigma under to)
// with unit base weight and uniform time sampler.
double effective_weight(const NoiseSchedule& from, const NoiseSchedule& to,
                        double sigma_value);

// Draws training timesteps uniformly from [t_min, 1]. t_min is kept in sync
// with the current clipping threshold by the embedding module; t_min = 0 is
// the unclipped baseline.
class ClippedTimeSampler {
public:
    explicit ClippedTimeSampler(const NoiseSchedule& schedule, uint64_t seed,
                                double t_min = 0.0)
        : schedule_(schedule), rng_(seed), t_min_(t_min) {}

    double sample();

    double t_min() const { return t_min_; }
    void set_t_min(double t_min);
    const NoiseSchedule& schedule() const { return schedule_; }

    Rng& rng() { return rng_; }

private:
    NoiseSchedule schedule_;
    Rng rng_;
    double t_min_;
};

}  // namespace seqdiff
