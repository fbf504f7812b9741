#include "seqdiff/diffusion.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace seqdiff {

using ad::Matrix;
using ad::Tape;
using ad::Var;

Matrix forward_diffuse(const Matrix& z0, double t, const Matrix& eps,
                       const NoiseSchedule& schedule) {
    if (z0.rows() != eps.rows() || z0.cols() != eps.cols()) {
        throw std::invalid_argument("forward_diffuse: shape mismatch");
    }
    return schedule.alpha(t) * z0 + schedule.sigma(t) * eps;
}

double diffusion_loss(const Matrix& z_hat, const Matrix& z0,
                      const Eigen::VectorXd* mask) {
    if (z_hat.rows() != z0.rows() || z_hat.cols() != z0.cols()) {
        throw std::invalid_argument("diffusion_loss: shape mismatch");
    }
    Eigen::VectorXd sq = (z_hat - z0).rowwise().squaredNorm();
    if (!mask) return sq.mean();
    if (mask->size() != sq.size()) {
        throw std::invalid_argument("diffusion_loss: mask length mismatch");
    }
    double count = mask->sum();
    if (count <= 0.0) throw std::invalid_argument("diffusion_loss: all positions masked");
    return sq.dot(*mask) / count;
}

double reconstruction_loss(const EmbeddingTable& table, const Matrix& z0,
                           const std::vector<int>& tokens) {
    Tape tape;
    Var z = tape.constant(z0);
    Var logits = ad::neg_sqdist_logits(tape, z, table.var());
    Matrix pad_mask = Matrix::Zero(z0.rows(), table.vocab_size());
    pad_mask.col(Vocabulary::kPad).setConstant(-1e30);
    Var masked = ad::add_const(tape, logits, pad_mask);
    Eigen::VectorXd w =
        Eigen::VectorXd::Constant(z0.rows(), 1.0 / static_cast<double>(z0.rows()));
    return ad::cross_entropy_rows(tape, masked, tokens, w)->value(0, 0);
}

AdamW::AdamW(std::vector<ad::Var> params, const OptimizerConfig& cfg)
    : params_(std::move(params)), cfg_(cfg) {
    for (const auto& p : params_) {
        m_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
        v_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    }
}

void AdamW::zero_grad() {
    for (auto& p : params_) p->zero_grad();
}

void AdamW::step() {
    ++t_;
    double lr = cfg_.lr;
    if (cfg_.warmup_steps > 0 && t_ < cfg_.warmup_steps) {
        lr *= static_cast<double>(t_) / static_cast<double>(cfg_.warmup_steps);
    }

    double sq_norm = 0.0;
    for (const auto& p : params_) sq_norm += p->grad.squaredNorm();
    double norm = std::sqrt(sq_norm);
    double clip = (cfg_.clip_norm > 0.0 && norm > cfg_.clip_norm)
                      ? cfg_.clip_norm / norm
                      : 1.0;

    double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (size_t i = 0; i < params_.size(); ++i) {
        auto& p = params_[i];
        Matrix g = clip * p->grad;
        m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
        v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
        Matrix mhat = m_[i] / bc1;
        Matrix vhat = v_[i] / bc2;
        p->value -= lr * (mhat.array() / (vhat.array().sqrt() + cfg_.eps)).matrix();
        if (cfg_.weight_decay > 0.0) p->value *= (1.0 - lr * cfg_.weight_decay);
        if (!p->value.allFinite()) {
            throw std::runtime_error("optimizer produced non-finite parameters");
        }
    }
}

Trainer::Trainer(Denoiser& denoiser, EmbeddingTable& table,
                 const TrainConfig& cfg, uint64_t seed)
    : denoiser_(denoiser), table_(table), cfg_(cfg),
      time_sampler_(cfg.schedule, Rng::derive(seed, 1).next_u64()),
      tracker_(cfg.noise_clipping, cfg.clip_refresh_every),
      opt_([&] {
          std::vector<ad::Var> ps;
          for (const auto& [name, v] : denoiser.params()) ps.push_back(v);
          ps.push_back(table.var());
          return ps;
      }(), cfg.optimizer),
      rng_(Rng::derive(seed, 2)) {}

Trainer::StepDraws Trainer::draw(const std::vector<SeqPair>& batch) {
    StepDraws d;
    const int D = table_.dim();
    for (const auto& pair : batch) {
        if (pair.tgt.empty()) throw std::invalid_argument("empty target sequence");
        double t = time_sampler_.sample();
        d.t.push_back(t);
        Matrix eps(static_cast<Eigen::Index>(pair.tgt.size()), D);
        for (Eigen::Index i = 0; i < eps.rows(); ++i)
            for (int j = 0; j < D; ++j) eps(i, j) = rng_.normal();
        d.eps.push_back(std::move(eps));
        d.self_cond.emplace_back();  // filled by train_step when the coin hits
    }
    return d;
}

Var Trainer::compute_losses(Tape& tape, const std::vector<SeqPair>& batch,
                            const StepDraws& draws,
                            LossBreakdown* breakdown) const {
    if (batch.empty()) throw std::invalid_argument("empty batch");
    const int K = denoiser_.config().length_offset_k;

    Var diff_sum, recon_sum, len_sum;
    double n_positions = 0.0;

    for (size_t b = 0; b < batch.size(); ++b) {
        const auto& pair = batch[b];
        const double t = draws.t[b];
        const double a = cfg_.schedule.alpha(t), s = cfg_.schedule.sigma(t);

        auto enc = denoiser_.encode(tape, pair.src);

        Var z0 = ad::gather_rows(tape, table_.var(), pair.tgt);
        Var z_t = ad::add_const(tape, ad::scale(tape, z0, a), s * draws.eps[b]);

        const Matrix* sc =
            draws.self_cond[b].size() > 0 ? &draws.self_cond[b] : nullptr;
        Var z0_hat = denoiser_.denoise_var(tape, enc, z_t, t, sc);

        Eigen::VectorXd ones = Eigen::VectorXd::Ones(z0->value.rows());
        Var d = ad::weighted_sq_error(tape, z0_hat, z0, ones);
        diff_sum = diff_sum ? ad::add(tape, diff_sum, d) : d;
        n_positions += static_cast<double>(pair.tgt.size());

        Var logits = ad::neg_sqdist_logits(tape, z0, table_.var());
        Matrix pad_mask = Matrix::Zero(logits->value.rows(), logits->value.cols());
        pad_mask.col(Vocabulary::kPad).setConstant(-1e30);
        Var r = ad::cross_entropy_rows(tape, ad::add_const(tape, logits, pad_mask),
                                       pair.tgt, ones);
        recon_sum = recon_sum ? ad::add(tape, recon_sum, r) : r;

        int offset = static_cast<int>(pair.tgt.size()) - static_cast<int>(pair.src.size());
        offset = std::max(-K, std::min(K, offset));
        Var llog = denoiser_.length_logits_var(tape, enc);
        Var l = ad::cross_entropy_rows(tape, llog, {offset + K},
                                       Eigen::VectorXd::Ones(1));
        len_sum = len_sum ? ad::add(tape, len_sum, l) : l;
    }

    Var diffusion = ad::scale(tape, diff_sum, 1.0 / n_positions);
    Var reconstruction = ad::scale(tape, recon_sum, 1.0 / n_positions);
    Var length = ad::scale(tape, len_sum,
                           cfg_.length_loss_weight / static_cast<double>(batch.size()));
    Var total = ad::add(tape, ad::add(tape, diffusion, reconstruction), length);

    if (breakdown) {
        breakdown->diffusion_mse = diffusion->value(0, 0);
        breakdown->reconstruction_nll = reconstruction->value(0, 0);
        breakdown->length_nll = length->value(0, 0);
        breakdown->total = total->value(0, 0);
    }
    return total;
}

LossBreakdown Trainer::train_step(const std::vector<SeqPair>& batch) {
    tracker_.refresh(table_, cfg_.schedule, time_sampler_, step_);

    StepDraws draws = draw(batch);

    // Clipping contract: the loss is never evaluated below sigma_min.
    if (cfg_.noise_clipping) {
        for (double t : draws.t) {
            if (cfg_.schedule.sigma(t) < tracker_.current().sigma_min - 1e-9) {
                throw std::logic_error("sampled noise scale below sigma_min");
            }
        }
    }

    // Detached first pass for self-conditioning, per sequence.
    for (size_t b = 0; b < batch.size(); ++b) {
        if (rng_.uniform() < cfg_.self_cond_prob) {
            const auto& pair = batch[b];
            Matrix z0 = table_.embed(pair.tgt);
            Matrix z_t = forward_diffuse(z0, draws.t[b], draws.eps[b], cfg_.schedule);
            draws.self_cond[b] = denoiser_.denoise(pair.src, z_t, draws.t[b]);
        }
    }

    opt_.zero_grad();
    Tape tape;
    LossBreakdown breakdown;
    Var total = compute_losses(tape, batch, draws, &breakdown);

    if (!std::isfinite(breakdown.total)) {
        std::ostringstream os;
        os << "non-finite loss at step " << step_ << "; t/sigma:";
        for (double t : draws.t) os << " (" << t << ", " << cfg_.schedule.sigma(t) << ")";
        throw std::runtime_error(os.str());
    }

    tape.backward(total);
    opt_.step();
    ++step_;
    return breakdown;
}

}  // namespace seqdiff
