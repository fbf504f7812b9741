#include "seqdiff/sampler.hpp"

#include <cmath>
#include <stdexcept>

#include "seqdiff/bleu.hpp"

namespace seqdiff {

using ad::Matrix;

SamplerConfig::Mode SamplerConfig::parse_mode(const std::string& s) {
    if (s == "ddim") return Mode::ddim;
    if (s == "cedi") return Mode::cedi;
    throw std::invalid_argument("unknown sampler mode: " + s);
}

std::vector<double> time_grid(double lo, int steps) {
    if (steps < 1) throw std::invalid_argument("steps must be >= 1");
    if (!(lo >= 0.0 && lo < 1.0)) throw std::invalid_argument("grid endpoint outside [0, 1)");
    std::vector<double> g(static_cast<size_t>(steps) + 1);
    for (int i = 0; i <= steps; ++i) {
        g[static_cast<size_t>(i)] = 1.0 - (1.0 - lo) * i / steps;
    }
    return g;
}

Matrix ddim_step(const Matrix& z_prev, const Matrix& z0_hat, double t_prev,
                 double t_next, const NoiseSchedule& schedule) {
    double s_prev = schedule.sigma(t_prev);
    if (s_prev <= 0.0) throw std::domain_error("ddim_step: sigma(t_prev) = 0");
    Matrix eps_hat = (z_prev - schedule.alpha(t_prev) * z0_hat) / s_prev;
    return schedule.alpha(t_next) * z0_hat + schedule.sigma(t_next) * eps_hat;
}

std::pair<Matrix, Matrix> cedi_step(const Matrix& z_prev, const DenoiseFn& denoise,
                                    double t_prev, double t_next, double tau_prev,
                                    const NoiseSchedule& schedule,
                                    const Matrix* self_cond) {
    (void)t_prev;  // the trajectory grid enters only through t_next
    double s_tau = schedule.sigma(tau_prev);
    if (s_tau <= 0.0) throw std::domain_error("cedi_step: sigma(tau_prev) = 0");
    Matrix z0_hat = denoise(z_prev, tau_prev, self_cond);
    Matrix eps_hat = (z_prev - schedule.alpha(tau_prev) * z0_hat) / s_tau;
    Matrix z_next = schedule.alpha(t_next) * z0_hat + schedule.sigma(t_next) * eps_hat;
    return {std::move(z_next), std::move(z0_hat)};
}

std::vector<int> sample_tokens(const DenoiseFn& denoise, const EmbeddingTable& table,
                               int target_len, const SamplerConfig& cfg,
                               const NoiseSchedule& schedule, Rng& rng) {
    if (target_len < 1) throw std::invalid_argument("target length must be >= 1");
    const int D = table.dim(), M = cfg.steps;

    std::vector<double> ts = time_grid(cfg.t_terminal, M);
    std::vector<double> taus = cfg.mode == SamplerConfig::Mode::cedi
                                   ? time_grid(schedule.sigma_inverse(cfg.tau_sigma), M)
                                   : ts;

    Matrix z(target_len, D);
    for (int i = 0; i < target_len; ++i)
        for (int j = 0; j < D; ++j) z(i, j) = rng.normal();

    Matrix self_cond;  // previous iteration's z0 estimate; zeros at step 1
    for (int i = 1; i <= M; ++i) {
        const Matrix* sc = self_cond.size() > 0 ? &self_cond : nullptr;
        auto [z_next, z0_hat] =
            cedi_step(z, denoise, ts[i - 1], ts[i], taus[i - 1], schedule, sc);
        z = std::move(z_next);
        self_cond = std::move(z0_hat);
    }
    return table.round_to_tokens(z);
}

std::vector<int> sample(const Denoiser& denoiser, const EmbeddingTable& table,
                        const std::vector<int>& source, int target_len,
                        const SamplerConfig& cfg, const NoiseSchedule& schedule,
                        Rng& rng) {
    DenoiseFn fn = [&](const Matrix& z_t, double model_t, const Matrix* sc) {
        return denoiser.denoise(source, z_t, model_t, sc);
    };
    return sample_tokens(fn, table, target_len, cfg, schedule, rng);
}

std::vector<int> length_beam(const Denoiser& denoiser,
                             const std::vector<int>& source, int lb) {
    if (lb < 1) throw std::invalid_argument("length beam must be >= 1");
    auto dist = denoiser.predict_length(source);
    return dist.top_lengths(lb, static_cast<int>(source.size()));
}

int mbr_select(const std::vector<std::vector<int>>& candidates) {
    if (candidates.empty()) throw std::invalid_argument("mbr_select: no candidates");
    if (candidates.size() == 1) return 0;
    int best = 0;
    double best_score = -1.0;
    for (size_t i = 0; i < candidates.size(); ++i) {
        double sum = 0.0;
        for (size_t j = 0; j < candidates.size(); ++j) {
            if (j == i) continue;
            sum += sentence_bleu_smoothed(candidates[i], candidates[j]);
        }
        double mean = sum / static_cast<double>(candidates.size() - 1);
        if (mean > best_score + 1e-12) {
            best_score = mean;
            best = static_cast<int>(i);
        }
    }
    return best;
}

CandidateSet decode(const Denoiser& denoiser, const EmbeddingTable& table,
                    const std::vector<int>& source, const SamplerConfig& cfg,
                    const NoiseSchedule& schedule) {
    CandidateSet set;
    std::vector<int> lengths = length_beam(denoiser, source, cfg.length_beam);
    for (int len : lengths) {
        for (int s = 0; s < cfg.mbr_samples; ++s) {
            Rng rng = Rng::derive(cfg.seed, (static_cast<uint64_t>(len) << 20) |
                                                static_cast<uint64_t>(s));
            Candidate c;
            c.length = len;
            c.sample_index = s;
            c.tokens = sample(denoiser, table, source, len, cfg, schedule, rng);
            set.candidates.push_back(std::move(c));
        }
    }

    const size_t n = set.candidates.size();
    set.utility = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    std::vector<std::vector<int>> toks;
    toks.reserve(n);
    for (const auto& c : set.candidates) toks.push_back(c.tokens);
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j)
            if (i != j)
                set.utility(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                    sentence_bleu_smoothed(toks[i], toks[j]);
    set.selected = mbr_select(toks);
    return set;
}

}  // namespace seqdiff
