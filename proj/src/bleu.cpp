#include "seqdiff/bleu.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>

namespace seqdiff {

namespace {

constexpr int kMaxOrder = 4;

using NgramCounts = std::map<std::vector<int>, int>;

NgramCounts count_ngrams(const std::vector<int>& s, int n) {
    NgramCounts counts;
    if (static_cast<int>(s.size()) >= n) {
        for (size_t i = 0; i + n <= s.size(); ++i) {
            counts[std::vector<int>(s.begin() + i, s.begin() + i + n)]++;
        }
    }
    return counts;
}

// Clipped matches and hypothesis n-gram total for one sentence pair.
void accumulate(const std::vector<int>& hyp, const std::vector<int>& ref, int n,
                int64_t& matched, int64_t& total) {
    NgramCounts h = count_ngrams(hyp, n);
    NgramCounts r = count_ngrams(ref, n);
    for (const auto& [gram, c] : h) {
        total += c;
        auto it = r.find(gram);
        if (it != r.end()) matched += std::min(c, it->second);
    }
}

}  // namespace

double corpus_bleu(const std::vector<std::vector<int>>& hypotheses,
                   const std::vector<std::vector<int>>& references) {
    if (hypotheses.size() != references.size()) {
        throw std::invalid_argument("corpus_bleu: list length mismatch");
    }
    if (hypotheses.empty()) throw std::invalid_argument("corpus_bleu: empty corpus");

    int64_t matched[kMaxOrder] = {0}, total[kMaxOrder] = {0};
    int64_t hyp_len = 0, ref_len = 0;
    for (size_t i = 0; i < hypotheses.size(); ++i) {
        hyp_len += static_cast<int64_t>(hypotheses[i].size());
        ref_len += static_cast<int64_t>(references[i].size());
        for (int n = 1; n <= kMaxOrder; ++n) {
            accumulate(hypotheses[i], references[i], n, matched[n - 1], total[n - 1]);
        }
    }

    double log_prec = 0.0;
    for (int n = 0; n < kMaxOrder; ++n) {
        if (matched[n] == 0 || total[n] == 0) return 0.0;
        log_prec += std::log(static_cast<double>(matched[n]) / total[n]);
    }
    log_prec /= kMaxOrder;

    double bp = 1.0;
    if (hyp_len < ref_len && hyp_len > 0) {
        bp = std::exp(1.0 - static_cast<double>(ref_len) / hyp_len);
    }
    return 100.0 * bp * std::exp(log_prec);
}

double sentence_bleu_smoothed(const std::vector<int>& hypothesis,
                              const std::vector<int>& reference) {
    if (hypothesis.empty()) return 0.0;

    double log_prec = 0.0;
    for (int n = 1; n <= kMaxOrder; ++n) {
        int64_t matched = 0, total = 0;
        accumulate(hypothesis, reference, n, matched, total);
        // add-one smoothing on each precision
        log_prec += std::log((matched + 1.0) / (total + 1.0));
    }
    log_prec /= kMaxOrder;

    double bp = 1.0;
    if (hypothesis.size() < reference.size()) {
        bp = std::exp(1.0 - static_cast<double>(reference.size()) / hypothesis.size());
    }
    return 100.0 * bp * std::exp(log_prec);
}

}  // namespace seqdiff
