#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace oocd {

// Fixed word-level vocabulary: a closed list of template/function words
// followed by generated content words ("w000", "w001", ...) up to the
// configured size. Construction is deterministic, so any two components
// built from the same size agree on every id.
class Vocab {
public:
    static constexpr int kEos = 0;
    static constexpr int kUnk = 1;

    static Vocab build(int text_vocab_size);
    static int base_size();  // number of fixed template/function words

    int id(const std::string& word) const;          // kUnk for unknown words
    const std::string& word(int id) const;
    int size() const { return static_cast<int>(words_.size()); }
    int n_content_words() const { return n_content_; }
    // First generated content word id; content ids are [content_base, size).
    int content_base() const { return content_base_; }

    std::vector<int> tokenize(const std::string& text) const;
    std::string detokenize(const std::vector<int>& ids) const;

    // Splits text into word/punctuation tokens without mapping to ids.
    static std::vector<std::string> split_words(const std::string& text);

private:
    std::vector<std::string> words_;
    std::unordered_map<std::string, int> index_;
    int content_base_ = 0;
    int n_content_ = 0;
};

}  // namespace oocd
