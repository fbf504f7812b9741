#include "seqdiff/denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace seqdiff {

using ad::Matrix;
using ad::Tape;
using ad::Var;

namespace {

Matrix randn(Eigen::Index r, Eigen::Index c, double stddev, Rng& rng) {
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < c; ++j) m(i, j) = stddev * rng.normal();
    return m;
}

constexpr double kMaskNegInf = -1e9;

}  // namespace

Denoiser::Denoiser(const DenoiserConfig& cfg, Rng& rng) : cfg_(cfg) {
    if (cfg.width % cfg.heads != 0) {
        throw std::invalid_argument("width must be divisible by heads");
    }
    if (cfg.width % 2 != 0) throw std::invalid_argument("width must be even");
    const int H = cfg.width, D = cfg.embed_dim, F = cfg.ffn_width;
    const double sH = 1.0 / std::sqrt(static_cast<double>(H));

    auto reg = [&](const std::string& name, Matrix m) {
        Var v = ad::leaf(std::move(m));
        params_.emplace_back(name, v);
        return v;
    };

    src_embed_ = reg("src_embed", randn(cfg.vocab_size, H, sH, rng));
    in_w_ = reg("in_w", randn(2 * D, H, 1.0 / std::sqrt(2.0 * D), rng));
    in_b_ = reg("in_b", Matrix::Zero(1, H));
    time_w_ = reg("time_w", randn(H, H, sH, rng));
    time_b_ = reg("time_b", Matrix::Zero(1, H));

    auto make_attn = [&](const std::string& p) {
        AttnBlock b;
        b.wq = reg(p + ".wq", randn(H, H, sH, rng));
        b.bq = reg(p + ".bq", Matrix::Zero(1, H));
        b.wk = reg(p + ".wk", randn(H, H, sH, rng));
        b.bk = reg(p + ".bk", Matrix::Zero(1, H));
        b.wv = reg(p + ".wv", randn(H, H, sH, rng));
        b.bv = reg(p + ".bv", Matrix::Zero(1, H));
        b.wo = reg(p + ".wo", randn(H, H, sH, rng));
        b.bo = reg(p + ".bo", Matrix::Zero(1, H));
        b.ln_g = reg(p + ".ln_g", Matrix::Ones(1, H));
        b.ln_b = reg(p + ".ln_b", Matrix::Zero(1, H));
        return b;
    };
    auto make_ffn = [&](const std::string& p) {
        FfnBlock b;
        b.w1 = reg(p + ".w1", randn(H, F, sH, rng));
        b.b1 = reg(p + ".b1", Matrix::Zero(1, F));
        b.w2 = reg(p + ".w2", randn(F, H, 1.0 / std::sqrt(static_cast<double>(F)), rng));
        b.b2 = reg(p + ".b2", Matrix::Zero(1, H));
        b.ln_g = reg(p + ".ln_g", Matrix::Ones(1, H));
        b.ln_b = reg(p + ".ln_b", Matrix::Zero(1, H));
        return b;
    };

    for (int l = 0; l < cfg.layers; ++l) {
        std::string p = "enc." + std::to_string(l);
        enc_.push_back({make_attn(p + ".self"), make_ffn(p + ".ffn")});
    }
    for (int l = 0; l < cfg.layers; ++l) {
        std::string p = "dec." + std::to_string(l);
        dec_.push_back({make_attn(p + ".self"), make_attn(p + ".cross"),
                        make_ffn(p + ".ffn")});
    }
    enc_ln_g_ = reg("enc_ln_g", Matrix::Ones(1, H));
    enc_ln_b_ = reg("enc_ln_b", Matrix::Zero(1, H));
    dec_ln_g_ = reg("dec_ln_g", Matrix::Ones(1, H));
    dec_ln_b_ = reg("dec_ln_b", Matrix::Zero(1, H));
    out_w_ = reg("out_w", randn(H, D, sH, rng));
    out_b_ = reg("out_b", Matrix::Zero(1, D));
    // Small init keeps the untrained length distribution near uniform.
    len_w_ = reg("len_w", randn(H, cfg.n_offsets(), 0.01 * sH, rng));
    len_b_ = reg("len_b", Matrix::Zero(1, cfg.n_offsets()));
}

Var Denoiser::param(const std::string& name) const {
    for (const auto& [n, v] : params_)
        if (n == name) return v;
    throw std::out_of_range("no parameter named " + name);
}

size_t Denoiser::param_count() const {
    size_t n = 0;
    for (const auto& [name, v] : params_) n += static_cast<size_t>(v->value.size());
    return n;
}

Matrix Denoiser::positional_encoding(Eigen::Index n) const {
    const int H = cfg_.width;
    Matrix pe(n, H);
    for (Eigen::Index pos = 0; pos < n; ++pos) {
        for (int i = 0; i < H / 2; ++i) {
            double freq = std::pow(10000.0, -2.0 * i / H);
            pe(pos, 2 * i) = std::sin(pos * freq);
            pe(pos, 2 * i + 1) = std::cos(pos * freq);
        }
    }
    return pe;
}

Matrix Denoiser::time_features(double t) const {
    if (!(t >= 0.0 && t <= 1.0)) throw std::domain_error("t outside [0, 1]");
    const int H = cfg_.width;
    Matrix f(1, H);
    const double w_min = 1.0, w_max = 100.0;
    for (int i = 0; i < H / 2; ++i) {
        double frac = H == 2 ? 0.0 : static_cast<double>(i) / (H / 2 - 1);
        double w = w_min * std::pow(w_max / w_min, frac);
        f(0, 2 * i) = std::sin(w * t);
        f(0, 2 * i + 1) = std::cos(w * t);
    }
    return f;
}

Matrix Denoiser::time_embedding(double t) const {
    return time_features(t) * time_w_->value + time_b_->value;
}

Var Denoiser::attention(Tape& tape, const AttnBlock& blk, const Var& x,
                        const Var& kv, const Eigen::VectorXd& key_mask) const {
    const int H = cfg_.width, nh = cfg_.heads, dh = H / nh;
    Var h = ad::layernorm_rows(tape, x, blk.ln_g, blk.ln_b);
    // Cross-attention keys/values use the encoder memory as-is (it already
    // carries the encoder's final layer norm).
    Var hk = kv ? kv : h;
    Var q = ad::add_rowvec(tape, ad::matmul(tape, h, blk.wq), blk.bq);
    Var k = ad::add_rowvec(tape, ad::matmul(tape, hk, blk.wk), blk.bk);
    Var v = ad::add_rowvec(tape, ad::matmul(tape, hk, blk.wv), blk.bv);

    Matrix mask(q->value.rows(), k->value.rows());
    for (Eigen::Index i = 0; i < mask.rows(); ++i)
        for (Eigen::Index j = 0; j < mask.cols(); ++j)
            mask(i, j) = key_mask(j) > 0.5 ? 0.0 : kMaskNegInf;

    std::vector<Var> heads;
    heads.reserve(nh);
    for (int hd = 0; hd < nh; ++hd) {
        Var qh = ad::slice_cols(tape, q, hd * dh, dh);
        Var kh = ad::slice_cols(tape, k, hd * dh, dh);
        Var vh = ad::slice_cols(tape, v, hd * dh, dh);
        Var scores = ad::scale(tape, ad::matmul_nt(tape, qh, kh),
                               1.0 / std::sqrt(static_cast<double>(dh)));
        Var attn = ad::softmax_rows(tape, scores, &mask);
        heads.push_back(ad::matmul(tape, attn, vh));
    }
    Var merged = nh == 1 ? heads[0] : ad::concat_cols(tape, heads);
    Var out = ad::add_rowvec(tape, ad::matmul(tape, merged, blk.wo), blk.bo);
    return ad::add(tape, x, out);
}

Var Denoiser::ffn(Tape& tape, const FfnBlock& blk, const Var& x) const {
    Var h = ad::layernorm_rows(tape, x, blk.ln_g, blk.ln_b);
    h = ad::gelu(tape, ad::add_rowvec(tape, ad::matmul(tape, h, blk.w1), blk.b1));
    h = ad::add_rowvec(tape, ad::matmul(tape, h, blk.w2), blk.b2);
    return ad::add(tape, x, h);
}

Denoiser::Encoded Denoiser::encode(Tape& tape, const std::vector<int>& source) const {
    if (source.empty()) throw std::invalid_argument("empty source");
    Eigen::VectorXd mask(static_cast<Eigen::Index>(source.size()));
    for (size_t i = 0; i < source.size(); ++i)
        mask(static_cast<Eigen::Index>(i)) = source[i] == Vocabulary::kPad ? 0.0 : 1.0;
    if (mask.sum() < 0.5) throw std::invalid_argument("all-pad source");

    Var x = ad::gather_rows(tape, src_embed_, source);
    x = ad::add_const(tape, x, positional_encoding(x->value.rows()));
    for (const auto& layer : enc_) {
        x = attention(tape, layer.self_attn, x, nullptr, mask);
        x = ffn(tape, layer.ffn, x);
    }
    x = ad::layernorm_rows(tape, x, enc_ln_g_, enc_ln_b_);
    return {x, mask};
}

Var Denoiser::denoise_var(Tape& tape, const Encoded& enc, const Var& z_t,
                          double t, const Matrix* self_cond,
                          const Eigen::VectorXd* target_mask) const {
    if (!(t >= 0.0 && t <= 1.0)) throw std::domain_error("t outside [0, 1]");
    if (!z_t->value.allFinite()) throw std::invalid_argument("non-finite z_t");
    const Eigen::Index n = z_t->value.rows();
    if (z_t->value.cols() != cfg_.embed_dim) {
        throw std::invalid_argument("z_t has wrong embedding dimension");
    }
    if (n == 0) return tape.constant(Matrix::Zero(0, cfg_.embed_dim));

    Eigen::VectorXd tmask = target_mask ? *target_mask : Eigen::VectorXd::Ones(n);

    Matrix sc = self_cond ? *self_cond : Matrix::Zero(n, cfg_.embed_dim);
    if (sc.rows() != n || sc.cols() != cfg_.embed_dim) {
        throw std::invalid_argument("self_cond shape mismatch");
    }
    Var inp = ad::concat_cols(tape, {z_t, tape.constant(sc)});
    Var x = ad::add_rowvec(tape, ad::matmul(tape, inp, in_w_), in_b_);
    x = ad::add_const(tape, x, positional_encoding(n));

    Var tfeat = tape.constant(time_features(t));
    Var temb = ad::add_rowvec(tape, ad::matmul(tape, tfeat, time_w_), time_b_);

    for (const auto& layer : dec_) {
        x = ad::add(tape, x, ad::broadcast_row(tape, temb, n));
        x = attention(tape, layer.self_attn, x, nullptr, tmask);
        x = attention(tape, layer.cross_attn, x, enc.memory, enc.token_mask);
        x = ffn(tape, layer.ffn, x);
    }
    x = ad::layernorm_rows(tape, x, dec_ln_g_, dec_ln_b_);
    return ad::add_rowvec(tape, ad::matmul(tape, x, out_w_), out_b_);
}

Var Denoiser::length_logits_var(Tape& tape, const Encoded& enc) const {
    Var pooled = ad::weighted_mean_rows(tape, enc.memory, enc.token_mask);
    return ad::add_rowvec(tape, ad::matmul(tape, pooled, len_w_), len_b_);
}

Matrix Denoiser::denoise(const std::vector<int>& source, const Matrix& z_t,
                         double t, const Matrix* self_cond) const {
    Tape tape;
    Encoded enc = encode(tape, source);
    Var z = tape.constant(z_t);
    return denoise_var(tape, enc, z, t, self_cond)->value;
}

Denoiser::LengthDistribution Denoiser::predict_length(
    const std::vector<int>& source) const {
    Tape tape;
    Encoded enc = encode(tape, source);
    Eigen::ArrayXd logits = length_logits_var(tape, enc)->value.row(0).array();
    double m = logits.maxCoeff();
    Eigen::ArrayXd e = (logits - m).exp();
    LengthDistribution d;
    d.offset_k = cfg_.length_offset_k;
    d.log_probs = (logits - m - std::log(e.sum())).matrix();
    return d;
}

std::vector<int> Denoiser::LengthDistribution::top_lengths(int n,
                                                           int source_len) const {
    std::vector<int> order(static_cast<size_t>(log_probs.size()));
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return log_probs(a) > log_probs(b);
    });
    std::vector<int> lengths;
    for (int idx : order) {
        int len = std::max(1, source_len + (idx - offset_k));
        if (std::find(lengths.begin(), lengths.end(), len) == lengths.end()) {
            lengths.push_back(len);
        }
        if (static_cast<int>(lengths.size()) == n) break;
    }
    return lengths;
}

}  // namespace seqdiff
