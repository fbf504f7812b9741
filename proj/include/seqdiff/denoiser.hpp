#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "seqdiff/autodiff.hpp"
#include "seqdiff/rng.hpp"
#include "seqdiff/vocab.hpp"

namespace seqdiff {

struct DenoiserConfig {
    int vocab_size = 0;
    int embed_dim = 16;    // D, diffusion embedding dimension
    int width = 256;       // H, model width
    int layers = 4;        // E, encoder and decoder depth
    int heads = 4;
    int ffn_width = 1024;
    int length_offset_k = 32;  // offsets in [-K, K]
    int max_len = 256;

    int n_offsets() const { return 2 * length_offset_k + 1; }
};

// Non-autoregressive encoder-decoder estimating z0 from (z_t, x, t), plus a
// length-offset head over pooled encoder states. Decoder self-attention is
// full (no causal mask); the time embedding is added to every decoder-layer
// input.
class Denoiser {
public:
    Denoiser(const DenoiserConfig& cfg, Rng& rng);

    const DenoiserConfig& config() const { return cfg_; }

    // All learnable leaves in a fixed order (for the optimizer/checkpoint).
    const std::vector<std::pair<std::string, ad::Var>>& params() const {
        return params_;
    }
    ad::Var param(const std::string& name) const;
    size_t param_count() const;

    struct Encoded {
        ad::Var memory;              // m x H
        Eigen::VectorXd token_mask;  // 1 for real source tokens, 0 for pad
    };

    Encoded encode(ad::Tape& tape, const std::vector<int>& source) const;

    // z0_hat (n x D). `self_cond` is a detached previous estimate or absent
    // (zeros). `target_mask` flags real target positions; defaults to all
    // ones. The estimate at masked rows is unspecified.
    ad::Var denoise_var(ad::Tape& tape, const Encoded& enc, const ad::Var& z_t,
                        double t, const ad::Matrix* self_cond = nullptr,
                        const Eigen::VectorXd* target_mask = nullptr) const;

    // Length-offset logits (1 x (2K+1)) from pooled encoder states.
    ad::Var length_logits_var(ad::Tape& tape, const Encoded& enc) const;

    // Sinusoidal time features at geometric frequencies, pre-projection.
    ad::Matrix time_features(double t) const;
    // Projected H-dim time embedding (no-grad convenience).
    ad::Matrix time_embedding(double t) const;

    // --- no-grad conveniences ----------------------------------------------
    ad::Matrix denoise(const std::vector<int>& source, const ad::Matrix& z_t,
                       double t, const ad::Matrix* self_cond = nullptr) const;

    struct LengthDistribution {
        int offset_k;                  // offsets span [-K, K]
        Eigen::VectorXd log_probs;     // normalized, size 2K+1
        // Top-n distinct predicted lengths (source length + offset, >= 1).
        std::vector<int> top_lengths(int n, int source_len) const;
    };

    LengthDistribution predict_length(const std::vector<int>& source) const;

private:
    struct AttnBlock {
        ad::Var wq, bq, wk, bk, wv, bv, wo, bo, ln_g, ln_b;
    };
    struct FfnBlock {
        ad::Var w1, b1, w2, b2, ln_g, ln_b;
    };
    struct EncLayer { AttnBlock self_attn; FfnBlock ffn; };
    struct DecLayer { AttnBlock self_attn; AttnBlock cross_attn; FfnBlock ffn; };

    ad::Var attention(ad::Tape& tape, const AttnBlock& blk, const ad::Var& x,
                      const ad::Var& kv, const Eigen::VectorXd& key_mask) const;
    ad::Var ffn(ad::Tape& tape, const FfnBlock& blk, const ad::Var& x) const;

    ad::Matrix positional_encoding(Eigen::Index n) const;

    DenoiserConfig cfg_;
    ad::Var src_embed_;                 // V x H
    ad::Var in_w_, in_b_;               // 2D x H projection of [z_t ; self_cond]
    ad::Var time_w_, time_b_;           // H x H projection of time features
    std::vector<EncLayer> enc_;
    std::vector<DecLayer> dec_;
    ad::Var enc_ln_g_, enc_ln_b_, dec_ln_g_, dec_ln_b_;
    ad::Var out_w_, out_b_;             // H x D
    ad::Var len_w_, len_b_;             // H x (2K+1)
    std::vector<std::pair<std::string, ad::Var>> params_;
};

}  // namespace seqdiff
