#include "seqdiff/embedding.hpp"

#include <cmath>
#include <iostream>
#include <limits>
#include <stdexcept>

namespace seqdiff {

EmbeddingTable::EmbeddingTable(int vocab_size, int dim, Rng& rng) {
    if (vocab_size < 2 || dim < 1) {
        throw std::invalid_argument("embedding table needs V >= 2, D >= 1");
    }
    ad::Matrix m(vocab_size, dim);
    double s = 1.0 / std::sqrt(static_cast<double>(dim));
    for (int i = 0; i < vocab_size; ++i)
        for (int j = 0; j < dim; ++j) m(i, j) = s * rng.normal();
    rows_ = ad::leaf(std::move(m));
}

ad::Matrix EmbeddingTable::embed(const std::vector<int>& tokens) const {
    ad::Matrix z(static_cast<Eigen::Index>(tokens.size()), dim());
    for (size_t i = 0; i < tokens.size(); ++i) {
        if (tokens[i] < 0 || tokens[i] >= vocab_size()) {
            throw std::out_of_range("embed: token id out of range");
        }
        z.row(static_cast<Eigen::Index>(i)) = rows_->value.row(tokens[i]);
    }
    return z;
}

std::vector<int> EmbeddingTable::round_to_tokens(const ad::Matrix& z,
                                                 const std::set<int>& exclude) const {
    if (z.cols() != dim()) throw std::invalid_argument("round_to_tokens: dim mismatch");
    const ad::Matrix& e = rows_->value;
    // argmin ||z - e_v||^2 = argmax (2 z.e_v - ||e_v||^2); computed via one
    // GEMM against the table. Ties resolved to the lowest token id by strict
    // improvement scanning in id order.
    Eigen::VectorXd en = e.rowwise().squaredNorm();
    ad::Matrix score = 2.0 * (z * e.transpose());
    score.rowwise() -= en.transpose();
    std::vector<int> out(static_cast<size_t>(z.rows()));
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        int best = -1;
        double best_score = -std::numeric_limits<double>::infinity();
        for (int v = 0; v < vocab_size(); ++v) {
            if (exclude.count(v)) continue;
            if (score(i, v) > best_score) {
                best_score = score(i, v);
                best = v;
            }
        }
        out[static_cast<size_t>(i)] = best;
    }
    return out;
}

double min_pairwise_delta_sq(const EmbeddingTable& table,
                             const std::set<int>& exclude) {
    const ad::Matrix& e = table.matrix();
    std::vector<int> keep;
    for (int v = 0; v < table.vocab_size(); ++v)
        if (!exclude.count(v)) keep.push_back(v);
    const int n = static_cast<int>(keep.size());
    if (n < 2) throw std::invalid_argument("delta_sq needs at least 2 rows");

    // Pairwise squared distances via the Gram matrix; exact, O(V'^2 D).
    // Row blocks keep peak memory at block x V' instead of V' x V'.
    ad::Matrix sub(n, table.dim());
    for (int i = 0; i < n; ++i) sub.row(i) = e.row(keep[i]);
    Eigen::VectorXd sq = sub.rowwise().squaredNorm();

    double total = 0.0;
    const int block = 1024;
    for (int i0 = 0; i0 < n; i0 += block) {
        const int bn = std::min(block, n - i0);
        ad::Matrix gram = sub.middleRows(i0, bn) * sub.transpose();
        for (int bi = 0; bi < bn; ++bi) {
            const int i = i0 + bi;
            double best = std::numeric_limits<double>::infinity();
            for (int j = 0; j < n; ++j) {
                if (j == i) continue;
                double d2 = sq(i) + sq(j) - 2.0 * gram(bi, j);
                if (d2 < best) best = d2;
            }
            total += std::max(0.0, best);
        }
    }
    return total / (static_cast<double>(n) * table.dim());
}

double sigma_min_from_delta_sq(double delta_sq) {
    if (delta_sq < 0.0) throw std::domain_error("delta_sq < 0");
    if (delta_sq == 0.0) {
        std::cerr << "warning: collapsed embeddings (delta^2 = 0); sigma_min = 0\n";
        return 0.0;
    }
    return 1.0 / std::sqrt(1.0 / delta_sq + 1.0);
}

double sigma_min(const EmbeddingTable& table, const std::set<int>& exclude) {
    return sigma_min_from_delta_sq(min_pairwise_delta_sq(table, exclude));
}

ClippingEstimate ClippingTracker::refresh(const EmbeddingTable& table,
                                          const NoiseSchedule& schedule,
                                          ClippedTimeSampler& sampler,
                                          uint64_t current_step) {
    if (!enabled_) {
        sampler.set_t_min(0.0);
        cache_ = ClippingEstimate{0.0, 0.0, current_step};
        return cache_;
    }
    if (!have_cache_ || current_step % refresh_every_ == 0) {
        ClippingEstimate est;
        est.delta_sq = min_pairwise_delta_sq(table);
        est.sigma_min = sigma_min_from_delta_sq(est.delta_sq);
        est.step_computed = current_step;
        cache_ = est;
        have_cache_ = true;
        sampler.set_t_min(schedule.sigma_inverse(std::min(est.sigma_min, 0.999999)));
    }
    return cache_;
}

}  // namespace seqdiff
