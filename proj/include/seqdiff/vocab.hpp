#pragma once

#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace seqdiff {

// Token vocabulary with fixed reserved ids. pad is excluded from
// nearest-neighbor statistics and from rounding targets.
class Vocabulary {
public:
    static constexpr int kPad = 0;
    static constexpr int kBos = 1;
    static constexpr int kEos = 2;
    static constexpr int kUnk = 3;

    Vocabulary() = default;

    explicit Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
        if (tokens_.size() < 5) throw std::invalid_argument("vocabulary too small");
        for (int i = 0; i < static_cast<int>(tokens_.size()); ++i) {
            if (!ids_.emplace(tokens_[i], i).second) {
                throw std::invalid_argument("duplicate token: " + tokens_[i]);
            }
        }
    }

    // Reserved tokens plus n_content synthetic content tokens "w0", "w1", ...
    static Vocabulary synthetic(int n_content) {
        std::vector<std::string> toks = {"<pad>", "<bos>", "<eos>", "<unk>"};
        for (int i = 0; i < n_content; ++i) toks.push_back("w" + std::to_string(i));
        return Vocabulary(std::move(toks));
    }

    int size() const { return static_cast<int>(tokens_.size()); }

    const std::string& token(int id) const { return tokens_.at(id); }

    int id(const std::string& tok) const {
        auto it = ids_.find(tok);
        return it == ids_.end() ? kUnk : it->second;
    }

    const std::vector<std::string>& tokens() const { return tokens_; }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> ids_;
};

}  // namespace seqdiff
