#pragma once

#include <functional>
#include <string>
#include <vector>

#include "seqdiff/denoiser.hpp"
#include "seqdiff/diffusion.hpp"
#include "seqdiff/embedding.hpp"
#include "seqdiff/schedule.hpp"

namespace seqdiff {

// 50 uniform points on (0, 1).
std::vector<double> default_sigma_grid();

struct NnRecoveryRow {
    double sigma = 0.0;
    double accuracy = 0.0;
};

// Draws V standard-Gaussian embeddings in D dimensions; for each sigma,
// corrupts uniformly chosen rows with z_t = sqrt(1 - sigma^2) z0 + sigma eps
// and reports the fraction recovered by nearest neighbor.
std::vector<NnRecoveryRow> nn_recovery_experiment(int V, int D,
                                                  const std::vector<double>& sigma_grid,
                                                  int samples_per_sigma,
                                                  uint64_t seed);

// Same experiment over a caller-provided table (one embedding per row).
std::vector<NnRecoveryRow> nn_recovery_experiment(const ad::Matrix& table,
                                                  const std::vector<double>& sigma_grid,
                                                  int samples_per_sigma,
                                                  uint64_t seed);

struct LossProfileRow {
    double sigma = 0.0;
    double mean_loss = 0.0;
};

// Mean diffusion loss when validation targets are corrupted at exactly each
// noise scale on the grid. `max_pairs` caps the per-point evaluation cost.
std::vector<LossProfileRow> loss_vs_sigma_profile(const Denoiser& denoiser,
                                                  const EmbeddingTable& table,
                                                  const std::vector<SeqPair>& dataset,
                                                  const std::vector<double>& sigma_grid,
                                                  const NoiseSchedule& schedule,
                                                  uint64_t seed,
                                                  int max_pairs = 64);

struct ProbeRow {
    double t = 0.0;
    double mse_truth_tau_t = 0.0;      // tau = t
    double mse_neg_tau_t = 0.0;
    double mse_truth_tau_fixed = 0.0;  // tau = tau_fixed
    double mse_neg_tau_fixed = 0.0;
};

// Condition-reliance probe: corrupt a mismatched same-length target y' at
// noise sigma(t), denoise under tau = t and tau = tau_fixed, and measure the
// squared distance of the estimate to Emb(y) (truth) and Emb(y') (negative).
std::vector<ProbeRow> condition_reliance_probe(const Denoiser& denoiser,
                                               const EmbeddingTable& table,
                                               const std::vector<SeqPair>& dataset,
                                               const std::vector<double>& t_grid,
                                               const NoiseSchedule& schedule,
                                               double tau_fixed,
                                               uint64_t seed,
                                               int max_pairs = 64);

struct EquivalenceResult {
    double lhs = 0.0;  // E_{t ~ U(0,1)} loss under `from`
    double rhs = 0.0;  // E_{sigma ~ U(0,1)} weight * loss
    double relative_gap = 0.0;
};

// Monte-Carlo check that uniform-time training under `from` equals
// reweighted uniform-sigma training. `loss(sigma, rng)` evaluates a frozen
// model on one sample corrupted at that noise scale; both sides share draws.
EquivalenceResult schedule_equivalence_check(
    const NoiseSchedule& from, const NoiseSchedule& to,
    const std::function<double(double, Rng&)>& loss, int n_samples, uint64_t seed);

// Frozen linear estimator z0_hat = A z_t over a fixed Gaussian table; cheap
// stand-in model for the equivalence check.
class FrozenLinearModel {
public:
    FrozenLinearModel(int vocab, int dim, uint64_t seed);

    // One-sample diffusion loss at noise scale sigma.
    double loss(double sigma, Rng& rng) const;

private:
    ad::Matrix table_;
    ad::Matrix map_;
};

// Simple polyline SVG, one series per y-vector.
void write_line_plot_svg(const std::string& path, const std::vector<double>& xs,
                         const std::vector<std::vector<double>>& series,
                         const std::vector<std::string>& labels,
                         const std::string& title);

}  // namespace seqdiff
