#pragma once

#include <vector>

#include "seqdiff/autodiff.hpp"
#include "seqdiff/denoiser.hpp"
#include "seqdiff/embedding.hpp"
#include "seqdiff/rng.hpp"
#include "seqdiff/schedule.hpp"

namespace seqdiff {

struct SeqPair {
    std::vector<int> src;
    std::vector<int> tgt;
};

// z_t = alpha(t) z0 + sigma(t) eps.
ad::Matrix forward_diffuse(const ad::Matrix& z0, double t, const ad::Matrix& eps,
                           const NoiseSchedule& schedule);

// Mean over unmasked positions of ||z_hat_i - z0_i||^2 (sum over D).
// mask == nullptr means all positions count.
double diffusion_loss(const ad::Matrix& z_hat, const ad::Matrix& z0,
                      const Eigen::VectorXd* mask = nullptr);

// Mean per-position NLL of `tokens` under distance-softmax logits
// -||z0_i - e_v||^2 over non-pad vocabulary.
double reconstruction_loss(const EmbeddingTable& table, const ad::Matrix& z0,
                           const std::vector<int>& tokens);

struct LossBreakdown {
    double diffusion_mse = 0.0;
    double reconstruction_nll = 0.0;
    double length_nll = 0.0;  // already carries its loss weight
    double total = 0.0;
};

struct OptimizerConfig {
    double lr = 3e-4;
    uint64_t warmup_steps = 1000;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
    double clip_norm = 1.0;
};

// Adam with decoupled weight decay, linear warmup, and global-norm gradient
// clipping. Holds first/second moment state per parameter.
class AdamW {
public:
    AdamW(std::vector<ad::Var> params, const OptimizerConfig& cfg);

    void zero_grad();
    void step();

    uint64_t steps_taken() const { return t_; }

    // Checkpoint access: moments in parameter order.
    std::vector<ad::Matrix>& moments_m() { return m_; }
    std::vector<ad::Matrix>& moments_v() { return v_; }
    void set_steps_taken(uint64_t t) { t_ = t; }

private:
    std::vector<ad::Var> params_;
    OptimizerConfig cfg_;
    std::vector<ad::Matrix> m_, v_;
    uint64_t t_ = 0;
};

struct TrainConfig {
    NoiseSchedule schedule;
    bool noise_clipping = true;
    uint64_t clip_refresh_every = 100;
    double self_cond_prob = 0.5;
    double length_loss_weight = 0.1;
    OptimizerConfig optimizer;
};

// One training step = Alg.-style loop body: embed targets, sample clipped
// timesteps, corrupt, optionally self-condition, descend the combined loss.
class Trainer {
public:
    Trainer(Denoiser& denoiser, EmbeddingTable& table, const TrainConfig& cfg,
            uint64_t seed);

    LossBreakdown train_step(const std::vector<SeqPair>& batch);

    // Injected randomness for one step; lets tests pin t/eps/self-cond.
    struct StepDraws {
        std::vector<double> t;               // one per sequence
        std::vector<ad::Matrix> eps;         // n_i x D each
        std::vector<ad::Matrix> self_cond;   // empty matrix = none
    };

    StepDraws draw(const std::vector<SeqPair>& batch);

    // Pure given draws; returns the scalar loss Var for backward().
    ad::Var compute_losses(ad::Tape& tape, const std::vector<SeqPair>& batch,
                           const StepDraws& draws, LossBreakdown* breakdown) const;

    ClippedTimeSampler& time_sampler() { return time_sampler_; }
    const ClippingEstimate& clipping() const { return tracker_.current(); }
    ClippingTracker& clipping_tracker() { return tracker_; }
    AdamW& optimizer() { return opt_; }
    uint64_t step() const { return step_; }
    void set_step(uint64_t s) { step_ = s; }
    Rng& rng() { return rng_; }
    const TrainConfig& config() const { return cfg_; }

private:
    Denoiser& denoiser_;
    EmbeddingTable& table_;
    TrainConfig cfg_;
    ClippedTimeSampler time_sampler_;
    ClippingTracker tracker_;
    AdamW opt_;
    Rng rng_;
    uint64_t step_ = 0;
};

}  // namespace seqdiff
