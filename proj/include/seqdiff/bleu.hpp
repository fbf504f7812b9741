#pragma once

#include <vector>

namespace seqdiff {

// Corpus-level BLEU in [0, 100]: clipped n-gram precisions up to 4-grams,
// geometric mean, brevity penalty. No smoothing; any zero precision gives 0.
double corpus_bleu(const std::vector<std::vector<int>>& hypotheses,
                   const std::vector<std::vector<int>>& references);

// Sentence-level BLEU in [0, 100] with add-one smoothing on the n-gram
// precisions (n <= 4). Used as the MBR utility.
double sentence_bleu_smoothed(const std::vector<int>& hypothesis,
                              const std::vector<int>& reference);

}  // namespace seqdiff
