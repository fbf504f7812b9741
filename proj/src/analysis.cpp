#include "seqdiff/analysis.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace seqdiff {

using ad::Matrix;

std::vector<double> default_sigma_grid() {
    std::vector<double> g;
    for (int i = 1; i <= 50; ++i) g.push_back(i / 51.0);
    return g;
}

std::vector<NnRecoveryRow> nn_recovery_experiment(int V, int D,
                                                  const std::vector<double>& sigma_grid,
                                                  int samples_per_sigma,
                                                  uint64_t seed) {
    if (V < 2 || D < 1) throw std::invalid_argument("need V >= 2, D >= 1");
    Rng table_rng = Rng::derive(seed, 0);
    Matrix table(V, D);
    for (int i = 0; i < V; ++i)
        for (int j = 0; j < D; ++j) table(i, j) = table_rng.normal();
    return nn_recovery_experiment(table, sigma_grid, samples_per_sigma, seed);
}

std::vector<NnRecoveryRow> nn_recovery_experiment(const Matrix& table,
                                                  const std::vector<double>& sigma_grid,
                                                  int samples_per_sigma,
                                                  uint64_t seed) {
    const int V = static_cast<int>(table.rows());
    const int D = static_cast<int>(table.cols());
    if (V < 2 || D < 1) throw std::invalid_argument("need V >= 2, D >= 1");
    Eigen::VectorXd half_sq = 0.5 * table.rowwise().squaredNorm();

    std::vector<NnRecoveryRow> rows;
    for (size_t gi = 0; gi < sigma_grid.size(); ++gi) {
        double sigma = sigma_grid[gi];
        double a = std::sqrt(std::max(0.0, 1.0 - sigma * sigma));
        Rng rng = Rng::derive(seed, gi + 1);
        int correct = 0;
        const int chunk = 512;
        for (int done = 0; done < samples_per_sigma; done += chunk) {
            int n = std::min(chunk, samples_per_sigma - done);
            Matrix z(n, D);
            std::vector<int> truth(static_cast<size_t>(n));
            for (int i = 0; i < n; ++i) {
                int idx = static_cast<int>(rng.below(static_cast<uint64_t>(V)));
                truth[static_cast<size_t>(i)] = idx;
                for (int j = 0; j < D; ++j)
                    z(i, j) = a * table(idx, j) + sigma * rng.normal();
            }
            // argmin ||z - e||^2 = argmax (z.e - ||e||^2 / 2)
            Matrix score = z * table.transpose();
            score.rowwise() -= half_sq.transpose();
            for (int i = 0; i < n; ++i) {
                Eigen::Index best;
                score.row(i).maxCoeff(&best);
                if (static_cast<int>(best) == truth[static_cast<size_t>(i)]) ++correct;
            }
        }
        rows.push_back({sigma, static_cast<double>(correct) / samples_per_sigma});
    }
    return rows;
}

std::vector<LossProfileRow> loss_vs_sigma_profile(const Denoiser& denoiser,
                                                  const EmbeddingTable& table,
                                                  const std::vector<SeqPair>& dataset,
                                                  const std::vector<double>& sigma_grid,
                                                  const NoiseSchedule& schedule,
                                                  uint64_t seed,
                                                  int max_pairs) {
    if (dataset.empty()) throw std::invalid_argument("empty dataset");
    const int n_pairs = std::min<int>(max_pairs, static_cast<int>(dataset.size()));

    std::vector<LossProfileRow> rows;
    for (size_t gi = 0; gi < sigma_grid.size(); ++gi) {
        double sigma = sigma_grid[gi];
        double t = schedule.sigma_inverse(sigma);
        Rng rng = Rng::derive(seed, gi + 1);
        double total = 0.0;
        for (int k = 0; k < n_pairs; ++k) {
            const SeqPair& p = dataset[static_cast<size_t>(k)];
            Matrix z0 = table.embed(p.tgt);
            Matrix eps(z0.rows(), z0.cols());
            for (Eigen::Index i = 0; i < eps.size(); ++i) eps(i) = rng.normal();
            Matrix z_t = forward_diffuse(z0, t, eps, schedule);
            Matrix z_hat = denoiser.denoise(p.src, z_t, t);
            total += diffusion_loss(z_hat, z0);
        }
        rows.push_back({sigma, total / n_pairs});
    }
    return rows;
}

std::vector<ProbeRow> condition_reliance_probe(const Denoiser& denoiser,
                                               const EmbeddingTable& table,
                                               const std::vector<SeqPair>& dataset,
                                               const std::vector<double>& t_grid,
                                               const NoiseSchedule& schedule,
                                               double tau_fixed,
                                               uint64_t seed,
                                               int max_pairs) {
    // Negative y' for (x, y): another dataset target of the same length.
    std::vector<std::pair<const SeqPair*, const std::vector<int>*>> probes;
    for (size_t i = 0; i < dataset.size() && static_cast<int>(probes.size()) < max_pairs; ++i) {
        for (size_t j = 0; j < dataset.size(); ++j) {
            if (i == j) continue;
            if (dataset[j].tgt.size() == dataset[i].tgt.size() &&
                dataset[j].tgt != dataset[i].tgt) {
                probes.emplace_back(&dataset[i], &dataset[j].tgt);
                break;
            }
        }
    }
    if (probes.empty()) {
        throw std::invalid_argument("no equal-length negative targets available");
    }

    std::vector<ProbeRow> rows;
    for (size_t gi = 0; gi < t_grid.size(); ++gi) {
        double t = t_grid[gi];
        Rng rng = Rng::derive(seed, gi + 1);
        ProbeRow row;
        row.t = t;
        for (auto& [pair, neg] : probes) {
            Matrix z_truth = table.embed(pair->tgt);
            Matrix z_neg = table.embed(*neg);
            Matrix eps(z_neg.rows(), z_neg.cols());
            for (Eigen::Index i = 0; i < eps.size(); ++i) eps(i) = rng.normal();
            Matrix z_t = forward_diffuse(z_neg, t, eps, schedule);

            Matrix pred_t = denoiser.denoise(pair->src, z_t, t);
            Matrix pred_fixed = denoiser.denoise(pair->src, z_t, tau_fixed);
            row.mse_truth_tau_t += diffusion_loss(pred_t, z_truth);
            row.mse_neg_tau_t += diffusion_loss(pred_t, z_neg);
            row.mse_truth_tau_fixed += diffusion_loss(pred_fixed, z_truth);
            row.mse_neg_tau_fixed += diffusion_loss(pred_fixed, z_neg);
        }
        double n = static_cast<double>(probes.size());
        row.mse_truth_tau_t /= n;
        row.mse_neg_tau_t /= n;
        row.mse_truth_tau_fixed /= n;
        row.mse_neg_tau_fixed /= n;
        rows.push_back(row);
    }
    return rows;
}

EquivalenceResult schedule_equivalence_check(
    const NoiseSchedule& from, const NoiseSchedule& to,
    const std::function<double(double, Rng&)>& loss, int n_samples, uint64_t seed) {
    if (n_samples < 1) throw std::invalid_argument("n_samples < 1");
    double lhs = 0.0, rhs = 0.0;
    for (int k = 0; k < n_samples; ++k) {
        Rng draw = Rng::derive(seed, static_cast<uint64_t>(2 * k));
        double u = draw.uniform();
        if (u <= 0.0 || u >= 1.0) continue;
        // Shared sample noise: both sides see the same (z0, eps) stream.
        Rng noise_lhs = Rng::derive(seed, static_cast<uint64_t>(2 * k + 1));
        Rng noise_rhs = noise_lhs;
        lhs += loss(from.sigma(u), noise_lhs);
        rhs += effective_weight(from, to, u) * loss(u, noise_rhs);
    }
    EquivalenceResult r;
    r.lhs = lhs / n_samples;
    r.rhs = rhs / n_samples;
    r.relative_gap = r.lhs != 0.0 ? std::abs(r.lhs - r.rhs) / std::abs(r.lhs) : 0.0;
    return r;
}

FrozenLinearModel::FrozenLinearModel(int vocab, int dim, uint64_t seed) {
    Rng rng = Rng::derive(seed, 77);
    table_.resize(vocab, dim);
    for (Eigen::Index i = 0; i < table_.size(); ++i) table_(i) = rng.normal();
    map_.resize(dim, dim);
    double s = 1.0 / std::sqrt(static_cast<double>(dim));
    for (Eigen::Index i = 0; i < map_.size(); ++i) map_(i) = s * rng.normal();
}

double FrozenLinearModel::loss(double sigma, Rng& rng) const {
    int idx = static_cast<int>(rng.below(static_cast<uint64_t>(table_.rows())));
    Eigen::RowVectorXd z0 = table_.row(idx);
    Eigen::RowVectorXd eps(table_.cols());
    for (Eigen::Index j = 0; j < eps.size(); ++j) eps(j) = rng.normal();
    double a = std::sqrt(std::max(0.0, 1.0 - sigma * sigma));
    Eigen::RowVectorXd z_t = a * z0 + sigma * eps;
    Eigen::RowVectorXd z_hat = z_t * map_;
    return (z_hat - z0).squaredNorm();
}

void write_line_plot_svg(const std::string& path, const std::vector<double>& xs,
                         const std::vector<std::vector<double>>& series,
                         const std::vector<std::string>& labels,
                         const std::string& title) {
    if (series.empty() || xs.empty()) throw std::invalid_argument("empty plot data");
    const double W = 640, H = 420, ml = 60, mr = 20, mt = 40, mb = 40;
    double xmin = xs.front(), xmax = xs.front();
    for (double x : xs) { xmin = std::min(xmin, x); xmax = std::max(xmax, x); }
    double ymin = series[0][0], ymax = series[0][0];
    for (const auto& s : series)
        for (double y : s) { ymin = std::min(ymin, y); ymax = std::max(ymax, y); }
    if (xmax == xmin) xmax = xmin + 1;
    if (ymax == ymin) ymax = ymin + 1;
    auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (W - ml - mr); };
    auto py = [&](double y) { return H - mb - (y - ymin) / (ymax - ymin) * (H - mt - mb); };

    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                   "#ff7f0e", "#8c564b"};
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H
      << "'>\n<rect width='100%' height='100%' fill='white'/>\n";
    f << "<text x='" << W / 2 << "' y='20' text-anchor='middle' font-size='14'>"
      << title << "</text>\n";
    f << "<line x1='" << ml << "' y1='" << H - mb << "' x2='" << W - mr << "' y2='"
      << H - mb << "' stroke='black'/>\n";
    f << "<line x1='" << ml << "' y1='" << mt << "' x2='" << ml << "' y2='" << H - mb
      << "' stroke='black'/>\n";
    f << "<text x='" << ml << "' y='" << H - mb + 16 << "' font-size='10'>" << xmin
      << "</text>\n<text x='" << W - mr - 20 << "' y='" << H - mb + 16
      << "' font-size='10'>" << xmax << "</text>\n";
    f << "<text x='4' y='" << H - mb << "' font-size='10'>" << ymin
      << "</text>\n<text x='4' y='" << mt << "' font-size='10'>" << ymax << "</text>\n";
    for (size_t s = 0; s < series.size(); ++s) {
        f << "<polyline fill='none' stroke='" << colors[s % 6] << "' points='";
        for (size_t i = 0; i < xs.size() && i < series[s].size(); ++i) {
            f << px(xs[i]) << "," << py(series[s][i]) << " ";
        }
        f << "'/>\n";
        if (s < labels.size()) {
            f << "<text x='" << W - mr - 150 << "' y='" << mt + 14 * (s + 1)
              << "' font-size='11' fill='" << colors[s % 6] << "'>" << labels[s]
              << "</text>\n";
        }
    }
    f << "</svg>\n";
}

}  // namespace seqdiff
