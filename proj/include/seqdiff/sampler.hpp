#pragma once

#include <functional>
#include <vector>

#include "seqdiff/denoiser.hpp"
#include "seqdiff/diffusion.hpp"
#include "seqdiff/embedding.hpp"
#include "seqdiff/schedule.hpp"

namespace seqdiff {

struct SamplerConfig {
    enum class Mode { ddim, cedi };

    int steps = 20;             // M
    Mode mode = Mode::cedi;
    double tau_sigma = 0.99;    // sigma(tau_M) for the CeDi model-facing grid
    double t_terminal = 0.0;    // T, trajectory endpoint
    int length_beam = 5;        // LB
    int mbr_samples = 1;
    uint64_t seed = 0;

    static Mode parse_mode(const std::string& s);
};

// z0 estimator for one step: (z_t, model_t, self_cond or nullptr) -> n x D.
// Lets tests inject oracle denoisers.
using DenoiseFn = std::function<ad::Matrix(const ad::Matrix&, double,
                                           const ad::Matrix*)>;

// M+1 points uniformly spaced from 1 down to `lo`, endpoints inclusive.
std::vector<double> time_grid(double lo, int steps);

// One deterministic DDIM update: extract eps_hat at t_prev, re-noise at t_next.
ad::Matrix ddim_step(const ad::Matrix& z_prev, const ad::Matrix& z0_hat,
                     double t_prev, double t_next, const NoiseSchedule& schedule);

// One CeDi update: the model-facing timestep and the eps_hat denominator use
// tau_prev; the trajectory re-noising uses t_next. Returns (z_next, z0_hat).
std::pair<ad::Matrix, ad::Matrix> cedi_step(const ad::Matrix& z_prev,
                                            const DenoiseFn& denoise,
                                            double t_prev, double t_next,
                                            double tau_prev,
                                            const NoiseSchedule& schedule,
                                            const ad::Matrix* self_cond);

// Full sampling loop for one target length: draw z ~ N(0, I), iterate M
// steps (DDIM mode uses the trajectory grid as the model-facing grid), round
// the final estimate to tokens. Deterministic given rng state.
std::vector<int> sample_tokens(const DenoiseFn& denoise, const EmbeddingTable& table,
                               int target_len, const SamplerConfig& cfg,
                               const NoiseSchedule& schedule, Rng& rng);

std::vector<int> sample(const Denoiser& denoiser, const EmbeddingTable& table,
                        const std::vector<int>& source, int target_len,
                        const SamplerConfig& cfg, const NoiseSchedule& schedule,
                        Rng& rng);

// Top-LB distinct predicted target lengths, each >= 1.
std::vector<int> length_beam(const Denoiser& denoiser,
                             const std::vector<int>& source, int lb);

// argmax_i mean_{j != i} utility(c_i, c_j) with smoothed sentence BLEU;
// single candidate -> 0, ties -> lowest index.
int mbr_select(const std::vector<std::vector<int>>& candidates);

struct Candidate {
    std::vector<int> tokens;
    int length = 0;
    int sample_index = 0;
};

struct CandidateSet {
    std::vector<Candidate> candidates;
    ad::Matrix utility;  // pairwise, utility(i, j) = bleu(c_i vs ref c_j)
    int selected = 0;
};

// LB x MBR decoding: sample `mbr_samples` candidates per beam length with
// independent seeds per (length, sample) pair, pool them, select by MBR.
CandidateSet decode(const Denoiser& denoiser, const EmbeddingTable& table,
                    const std::vector<int>& source, const SamplerConfig& cfg,
                    const NoiseSchedule& schedule);

}  // namespace seqdiff
