#include "seqdiff/tasks.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "seqdiff/rng.hpp"

namespace seqdiff {

using nlohmann::json;

TaskSpec::Kind TaskSpec::parse_kind(const std::string& s) {
    if (s == "copy") return Kind::copy;
    if (s == "reverse") return Kind::reverse;
    if (s == "toy_translation") return Kind::toy_translation;
    if (s == "one_to_many") return Kind::one_to_many;
    if (s == "many_to_one") return Kind::many_to_one;
    throw std::invalid_argument("unknown task kind: " + s);
}

const char* TaskSpec::kind_name() const {
    switch (kind) {
        case Kind::copy: return "copy";
        case Kind::reverse: return "reverse";
        case Kind::toy_translation: return "toy_translation";
        case Kind::one_to_many: return "one_to_many";
        case Kind::many_to_one: return "many_to_one";
    }
    return "?";
}

namespace {
constexpr int kReserved = 4;  // pad, bos, eos, unk
}

std::pair<int, int> TaskSpec::lang_range(int lang) const {
    int base = kReserved + (multilingual() ? n_languages : 0);
    int lo = base + (lang + 1) * vocab_size;
    return {lo, lo + vocab_size};
}

int TaskSpec::tag_id(int lang) const {
    if (!multilingual()) throw std::logic_error("tag_id on monolingual task");
    if (lang < 0 || lang >= n_languages) throw std::out_of_range("bad language");
    return kReserved + lang;
}

int TaskSpec::total_vocab() const {
    int langs = multilingual() ? n_languages : 0;
    return kReserved + langs + vocab_size * (1 + langs);
}

namespace {

Vocabulary build_vocab(const TaskSpec& spec) {
    std::vector<std::string> toks = {"<pad>", "<bos>", "<eos>", "<unk>"};
    if (spec.multilingual()) {
        for (int l = 0; l < spec.n_languages; ++l)
            toks.push_back("<2l" + std::to_string(l) + ">");
    }
    for (int i = 0; i < spec.vocab_size; ++i) toks.push_back("w" + std::to_string(i));
    if (spec.multilingual()) {
        for (int l = 0; l < spec.n_languages; ++l)
            for (int i = 0; i < spec.vocab_size; ++i)
                toks.push_back("l" + std::to_string(l) + "_w" + std::to_string(i));
    }
    return Vocabulary(std::move(toks));
}

// Seeded bijection over [0, vocab_size).
std::vector<int> permutation(int n, Rng& rng) {
    std::vector<int> p(static_cast<size_t>(n));
    std::iota(p.begin(), p.end(), 0);
    for (int i = n - 1; i > 0; --i) {
        int j = static_cast<int>(rng.below(static_cast<uint64_t>(i) + 1));
        std::swap(p[static_cast<size_t>(i)], p[static_cast<size_t>(j)]);
    }
    return p;
}

// Swap adjacent pairs at even indices: (0,1), (2,3), ...
void local_reorder(std::vector<int>& s) {
    for (size_t i = 0; i + 1 < s.size(); i += 2) std::swap(s[i], s[i + 1]);
}

}  // namespace

Corpus generate_dataset(const TaskSpec& spec) {
    if (spec.min_len < 1 || spec.max_len < spec.min_len) {
        throw std::invalid_argument("bad length range");
    }
    if (spec.vocab_size < 2) throw std::invalid_argument("vocab_size too small");

    Corpus corpus;
    corpus.spec = spec;
    corpus.vocab = build_vocab(spec);

    Rng map_rng = Rng::derive(spec.seed, 100);
    // Per-language substitution maps: content index -> content index.
    std::vector<std::vector<int>> subst;
    if (spec.kind == TaskSpec::Kind::toy_translation) {
        subst.push_back(permutation(spec.vocab_size, map_rng));
    } else if (spec.multilingual()) {
        for (int l = 0; l < spec.n_languages; ++l)
            subst.push_back(permutation(spec.vocab_size, map_rng));
    }

    auto base_lo = spec.lang_range(-1).first;

    auto make_pair = [&](Rng& rng) {
        int len = spec.min_len +
                  static_cast<int>(rng.below(static_cast<uint64_t>(
                      spec.max_len - spec.min_len + 1)));
        std::vector<int> content(static_cast<size_t>(len));
        for (auto& c : content)
            c = static_cast<int>(rng.below(static_cast<uint64_t>(spec.vocab_size)));

        SeqPair p;
        switch (spec.kind) {
            case TaskSpec::Kind::copy: {
                for (int c : content) p.src.push_back(base_lo + c);
                p.tgt = p.src;
                break;
            }
            case TaskSpec::Kind::reverse: {
                for (int c : content) p.src.push_back(base_lo + c);
                p.tgt.assign(p.src.rbegin(), p.src.rend());
                break;
            }
            case TaskSpec::Kind::toy_translation: {
                for (int c : content) p.src.push_back(base_lo + c);
                std::vector<int> mapped;
                for (int c : content) mapped.push_back(subst[0][static_cast<size_t>(c)]);
                local_reorder(mapped);
                for (int c : mapped) p.tgt.push_back(base_lo + c);
                break;
            }
            case TaskSpec::Kind::one_to_many: {
                int lang = static_cast<int>(rng.below(static_cast<uint64_t>(spec.n_languages)));
                p.src.push_back(spec.tag_id(lang));
                for (int c : content) p.src.push_back(base_lo + c);
                int lo = spec.lang_range(lang).first;
                for (int c : content)
                    p.tgt.push_back(lo + subst[static_cast<size_t>(lang)][static_cast<size_t>(c)]);
                break;
            }
            case TaskSpec::Kind::many_to_one: {
                int lang = static_cast<int>(rng.below(static_cast<uint64_t>(spec.n_languages)));
                int lo = spec.lang_range(lang).first;
                for (int c : content)
                    p.src.push_back(lo + subst[static_cast<size_t>(lang)][static_cast<size_t>(c)]);
                for (int c : content) p.tgt.push_back(base_lo + c);
                break;
            }
        }
        return p;
    };

    std::set<std::vector<int>> seen_sources;
    uint64_t attempts = 0, rejected = 0;
    auto fill = [&](std::vector<SeqPair>& out, int n, uint64_t stream) {
        Rng rng = Rng::derive(spec.seed, stream);
        while (static_cast<int>(out.size()) < n) {
            ++attempts;
            SeqPair p = make_pair(rng);
            if (!seen_sources.insert(p.src).second) {
                ++rejected;
                if (rejected > attempts / 2 && attempts > 10000) {
                    throw std::runtime_error("rejection sampling stalled; task space too small");
                }
                continue;
            }
            out.push_back(std::move(p));
        }
    };
    fill(corpus.train, spec.n_train, 1);
    fill(corpus.valid, spec.n_valid, 2);
    fill(corpus.test, spec.n_test, 3);
    corpus.collision_rate = attempts ? static_cast<double>(rejected) / attempts : 0.0;
    return corpus;
}

double language_accuracy(const std::vector<std::vector<int>>& hypotheses,
                         const std::vector<std::vector<int>>& sources,
                         const TaskSpec& spec) {
    if (spec.kind != TaskSpec::Kind::one_to_many) {
        throw std::invalid_argument("language_accuracy requires a one_to_many spec");
    }
    if (hypotheses.size() != sources.size()) {
        throw std::invalid_argument("language_accuracy: length mismatch");
    }
    if (hypotheses.empty()) return 0.0;

    size_t correct = 0;
    for (size_t i = 0; i < hypotheses.size(); ++i) {
        if (sources[i].empty()) throw std::invalid_argument("empty source");
        int tag = sources[i][0] - kReserved;
        if (tag < 0 || tag >= spec.n_languages) {
            throw std::invalid_argument("source missing language tag");
        }
        std::vector<int> votes(static_cast<size_t>(spec.n_languages), 0);
        for (int tok : hypotheses[i]) {
            for (int l = 0; l < spec.n_languages; ++l) {
                auto [lo, hi] = spec.lang_range(l);
                if (tok >= lo && tok < hi) {
                    ++votes[static_cast<size_t>(l)];
                    break;
                }
            }
        }
        int best = static_cast<int>(std::max_element(votes.begin(), votes.end()) -
                                    votes.begin());
        if (votes[static_cast<size_t>(best)] > 0 && best == tag) ++correct;
    }
    return static_cast<double>(correct) / hypotheses.size();
}

// --- persistence ------------------------------------------------------------

namespace {

void write_jsonl(const std::string& path, const std::vector<SeqPair>& pairs) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path);
    for (const auto& p : pairs) {
        json rec;
        rec["src"] = p.src;
        rec["tgt"] = p.tgt;
        f << rec.dump() << "\n";
    }
}

}  // namespace

void save_pairs(const std::string& path, const std::vector<SeqPair>& pairs) {
    write_jsonl(path, pairs);
}

std::vector<SeqPair> load_pairs(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot read " + path);
    std::vector<SeqPair> pairs;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        json rec = json::parse(line);
        SeqPair p;
        p.src = rec.at("src").get<std::vector<int>>();
        p.tgt = rec.at("tgt").get<std::vector<int>>();
        if (p.tgt.empty()) throw std::runtime_error("empty target in " + path);
        pairs.push_back(std::move(p));
    }
    return pairs;
}

void save_corpus(const std::string& dir, const Corpus& corpus) {
    std::filesystem::create_directories(dir);
    write_jsonl(dir + "/train.jsonl", corpus.train);
    write_jsonl(dir + "/valid.jsonl", corpus.valid);
    write_jsonl(dir + "/test.jsonl", corpus.test);

    json meta;
    meta["task"] = corpus.spec.kind_name();
    meta["vocab_size"] = corpus.spec.vocab_size;
    meta["min_len"] = corpus.spec.min_len;
    meta["max_len"] = corpus.spec.max_len;
    meta["n_train"] = corpus.spec.n_train;
    meta["n_valid"] = corpus.spec.n_valid;
    meta["n_test"] = corpus.spec.n_test;
    meta["seed"] = corpus.spec.seed;
    meta["n_languages"] = corpus.spec.n_languages;
    meta["collision_rate"] = corpus.collision_rate;
    meta["tokens"] = corpus.vocab.tokens();
    std::ofstream f(dir + "/vocab.json");
    if (!f) throw std::runtime_error("cannot write " + dir + "/vocab.json");
    f << meta.dump(2) << "\n";
}

Corpus load_corpus(const std::string& dir) {
    std::ifstream f(dir + "/vocab.json");
    if (!f) throw std::runtime_error("cannot read " + dir + "/vocab.json");
    json meta = json::parse(f);

    Corpus corpus;
    TaskSpec spec;
    spec.kind = TaskSpec::parse_kind(meta.at("task").get<std::string>());
    spec.vocab_size = meta.at("vocab_size").get<int>();
    spec.min_len = meta.at("min_len").get<int>();
    spec.max_len = meta.at("max_len").get<int>();
    spec.n_train = meta.at("n_train").get<int>();
    spec.n_valid = meta.at("n_valid").get<int>();
    spec.n_test = meta.at("n_test").get<int>();
    spec.seed = meta.at("seed").get<uint64_t>();
    spec.n_languages = meta.at("n_languages").get<int>();
    corpus.spec = spec;
    corpus.collision_rate = meta.at("collision_rate").get<double>();
    corpus.vocab = Vocabulary(meta.at("tokens").get<std::vector<std::string>>());
    corpus.train = load_pairs(dir + "/train.jsonl");
    corpus.valid = load_pairs(dir + "/valid.jsonl");
    corpus.test = load_pairs(dir + "/test.jsonl");
    return corpus;
}

void save_sequences(const std::string& path,
                    const std::vector<std::vector<int>>& seqs) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path);
    for (const auto& s : seqs) f << json(s).dump() << "\n";
}

std::vector<std::vector<int>> load_sequences(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot read " + path);
    std::vector<std::vector<int>> seqs;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        seqs.push_back(json::parse(line).get<std::vector<int>>());
    }
    return seqs;
}

uint64_t fnv1a(const std::string& data) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

uint64_t fnv1a_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read " + path);
    std::ostringstream os;
    os << f.rdbuf();
    return fnv1a(os.str());
}

}  // namespace seqdiff
