#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "seqdiff/bleu.hpp"

using namespace seqdiff;
using Seqs = std::vector<std::vector<int>>;

TEST_CASE("corpus_bleu identity and disjoint corpora") {
    Seqs refs = {{1, 2, 3, 4, 5}, {9, 8, 7, 6}, {1, 1, 2, 2}};
    CHECK(corpus_bleu(refs, refs) == doctest::Approx(100.0).epsilon(1e-12));

    Seqs disjoint = {{10, 11, 12, 13}, {14, 15, 16, 17}, {18, 19, 20, 21}};
    CHECK(corpus_bleu(disjoint, refs) == 0.0);
}

TEST_CASE("corpus_bleu input validation") {
    CHECK_THROWS_AS(corpus_bleu({}, {}), std::invalid_argument);
    CHECK_THROWS_AS(corpus_bleu({{1}}, {{1}, {2}}), std::invalid_argument);
}

TEST_CASE("hand-counted three-sentence fixture") {
    // Clipped n-gram matches counted by hand:
    //   s1 hyp [1,2,3,4]      ref [1,2,3,4]    -> 4/4, 3/3, 2/2, 1/1
    //   s2 hyp [1,2,2,3,5]    ref [1,2,3,5,6]  -> 4/5, 3/4, 1/3, 0/2
    //   s3 hyp [7,8]          ref [7,8,9]      -> 2/2, 1/1, 0/0, 0/0
    // totals: p1=10/11, p2=7/8, p3=3/5, p4=1/3; c=11, r=12.
    Seqs hyps = {{1, 2, 3, 4}, {1, 2, 2, 3, 5}, {7, 8}};
    Seqs refs = {{1, 2, 3, 4}, {1, 2, 3, 5, 6}, {7, 8, 9}};
    double expected = 100.0 * std::exp(1.0 - 12.0 / 11.0) *
                      std::pow((10.0 / 11.0) * (7.0 / 8.0) * (3.0 / 5.0) * (1.0 / 3.0),
                               0.25);
    CHECK(corpus_bleu(hyps, refs) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("brevity penalty punishes short hypotheses only") {
    Seqs ref = {{1, 2, 3, 4, 5, 6}};
    Seqs shorter = {{1, 2, 3, 4, 5}};
    double expected = 100.0 * std::exp(1.0 - 6.0 / 5.0) *
                      std::pow((5.0 / 5.0) * (4.0 / 4.0) * (3.0 / 3.0) * (2.0 / 2.0),
                               0.25);
    CHECK(corpus_bleu(shorter, ref) == doctest::Approx(expected).epsilon(1e-12));

    // Longer hypothesis: no BP, precision penalty only.
    Seqs longer = {{1, 2, 3, 4, 5, 6, 6}};
    double p1 = 6.0 / 7.0, p2 = 5.0 / 6.0, p3 = 4.0 / 5.0, p4 = 3.0 / 4.0;
    CHECK(corpus_bleu(longer, ref) ==
          doctest::Approx(100.0 * std::pow(p1 * p2 * p3 * p4, 0.25)).epsilon(1e-12));
}

TEST_CASE("corpus_bleu is invariant to sentence order") {
    Seqs hyps = {{1, 2, 3, 4}, {5, 6, 7, 8, 9}, {2, 2, 3}, {9, 9, 9, 1}};
    Seqs refs = {{1, 2, 3, 5}, {5, 6, 7, 8}, {2, 3, 3}, {9, 9, 1, 1}};
    double base = corpus_bleu(hyps, refs);
    std::vector<size_t> perm = {2, 0, 3, 1};
    Seqs h2, r2;
    for (size_t i : perm) {
        h2.push_back(hyps[i]);
        r2.push_back(refs[i]);
    }
    CHECK(corpus_bleu(h2, r2) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("smoothed sentence BLEU") {
    CHECK(sentence_bleu_smoothed({}, {1, 2, 3}) == 0.0);
    CHECK(sentence_bleu_smoothed({1, 2, 3, 4, 5}, {1, 2, 3, 4, 5}) ==
          doctest::Approx(100.0).epsilon(1e-12));
    // Partial overlap scores strictly between the extremes, and a better
    // hypothesis scores higher.
    double worse = sentence_bleu_smoothed({1, 9, 9, 9}, {1, 2, 3, 4});
    double better = sentence_bleu_smoothed({1, 2, 3, 9}, {1, 2, 3, 4});
    CHECK(worse > 0.0);
    CHECK(better > worse);
    CHECK(better < 100.0);

    // Hand evaluation: hyp [1,2,3] vs ref [1,2,4]:
    // p1=(2+1)/(3+1), p2=(1+1)/(2+1), p3=(0+1)/(1+1), p4=(0+1)/(0+1); BP=1.
    double expected =
        100.0 * std::pow((3.0 / 4.0) * (2.0 / 3.0) * (1.0 / 2.0) * 1.0, 0.25);
    CHECK(sentence_bleu_smoothed({1, 2, 3}, {1, 2, 4}) ==
          doctest::Approx(expected).epsilon(1e-12));
}
