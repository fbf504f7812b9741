#pragma once

#include <set>
#include <vector>

#include "seqdiff/autodiff.hpp"
#include "seqdiff/rng.hpp"
#include "seqdiff/schedule.hpp"
#include "seqdiff/vocab.hpp"

namespace seqdiff {

// Learnable V x D token embedding table for the diffusion (target) side.
// The matrix lives in an autodiff leaf so it trains jointly with the
// denoiser through both the diffusion and reconstruction terms.
class EmbeddingTable {
public:
    EmbeddingTable() = default;

    // i.i.d. N(0, 1/D) initialization.
    EmbeddingTable(int vocab_size, int dim, Rng& rng);

    explicit EmbeddingTable(ad::Matrix m) : rows_(ad::leaf(std::move(m))) {}

    int vocab_size() const { return static_cast<int>(rows_->value.rows()); }
    int dim() const { return static_cast<int>(rows_->value.cols()); }

    const ad::Matrix& matrix() const { return rows_->value; }
    ad::Matrix& matrix() { return rows_->value; }
    const ad::Var& var() const { return rows_; }

    // z0 = Emb(tokens); Dirac, no added noise. Returns an n x D matrix.
    ad::Matrix embed(const std::vector<int>& tokens) const;

    // Nearest non-excluded token per row, ties broken by lowest id.
    std::vector<int> round_to_tokens(const ad::Matrix& z,
                                     const std::set<int>& exclude = {Vocabulary::kPad}) const;

private:
    ad::Var rows_;
};

// Dimension-normalized mean nearest-neighbor squared distance over
// non-excluded rows: (1 / (V' D)) sum_i min_{j != i} ||e_i - e_j||^2.
double min_pairwise_delta_sq(const EmbeddingTable& table,
                             const std::set<int>& exclude = {Vocabulary::kPad});

// Clipping threshold from delta^2: (1/delta^2 + 1)^(-1/2).
// Returns 0 for delta^2 = 0 (collapsed embeddings).
double sigma_min_from_delta_sq(double delta_sq);

double sigma_min(const EmbeddingTable& table,
                 const std::set<int>& exclude = {Vocabulary::kPad});

struct ClippingEstimate {
    double delta_sq = 0.0;
    double sigma_min = 0.0;
    uint64_t step_computed = 0;
};

// Recomputes the clipping estimate every `refresh_every` steps and keeps the
// sampler's t_min in sync; otherwise returns the cached estimate. With
// clipping disabled the sampler stays at t_min = 0.
class ClippingTracker {
public:
    ClippingTracker(bool enabled, uint64_t refresh_every)
        : enabled_(enabled), refresh_every_(refresh_every) {
        if (refresh_every_ < 1) throw std::invalid_argument("refresh_every < 1");
    }

    ClippingEstimate refresh(const EmbeddingTable& table,
                             const NoiseSchedule& schedule,
                             ClippedTimeSampler& sampler, uint64_t current_step);

    const ClippingEstimate& current() const { return cache_; }
    bool enabled() const { return enabled_; }

    // Checkpoint restore: reinstates a mid-interval cache.
    void set_cache(const ClippingEstimate& est) {
        cache_ = est;
        have_cache_ = true;
    }

private:
    bool enabled_;
    uint64_t refresh_every_;
    ClippingEstimate cache_;
    bool have_cache_ = false;
};

}  // namespace seqdiff
