#pragma once

#include <string>
#include <vector>

#include "seqdiff/diffusion.hpp"
#include "seqdiff/vocab.hpp"

namespace seqdiff {

// Synthetic sequence-to-sequence task family. Generation is a pure function
// of the TaskSpec, so corpora are bitwise reproducible.
struct TaskSpec {
    enum class Kind { copy, reverse, toy_translation, one_to_many, many_to_one };

    Kind kind = Kind::copy;
    int vocab_size = 128;  // content tokens per language
    int min_len = 5;
    int max_len = 24;
    int n_train = 10000;
    int n_valid = 500;
    int n_test = 500;
    uint64_t seed = 0;
    int n_languages = 4;   // sub-languages for one_to_many / many_to_one

    static Kind parse_kind(const std::string& s);
    const char* kind_name() const;
    bool multilingual() const {
        return kind == Kind::one_to_many || kind == Kind::many_to_one;
    }

    // Content-token id range [lo, hi) of sub-language `lang`; lang = -1 is
    // the base (source-side) language.
    std::pair<int, int> lang_range(int lang) const;
    int tag_id(int lang) const;  // language tag token for one_to_many
    int total_vocab() const;
};

struct Corpus {
    TaskSpec spec;
    Vocabulary vocab;
    std::vector<SeqPair> train, valid, test;
    double collision_rate = 0.0;  // rejected duplicates / attempts
};

Corpus generate_dataset(const TaskSpec& spec);

// Fraction of hypotheses whose tokens fall, by majority vote, in the
// language range selected by the source's tag token (one_to_many only).
double language_accuracy(const std::vector<std::vector<int>>& hypotheses,
                         const std::vector<std::vector<int>>& sources,
                         const TaskSpec& spec);

// --- persistence (line-delimited JSON records, JSON vocab) -----------------

void save_corpus(const std::string& dir, const Corpus& corpus);
Corpus load_corpus(const std::string& dir);
std::vector<SeqPair> load_pairs(const std::string& path);
void save_pairs(const std::string& path, const std::vector<SeqPair>& pairs);

// Plain token-id sequences, one JSON array per line (hypothesis files).
void save_sequences(const std::string& path, const std::vector<std::vector<int>>& seqs);
std::vector<std::vector<int>> load_sequences(const std::string& path);

uint64_t fnv1a_file(const std::string& path);
uint64_t fnv1a(const std::string& data);

}  // namespace seqdiff
