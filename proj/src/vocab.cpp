#include "oocd/vocab.hpp"

#include <cctype>
#include <cstdio>

#include "oocd/errors.hpp"

namespace oocd {

namespace {

// Every word that can appear in prompt templates, canned verdicts and
// simulated-teacher rationales. Tokenizing a template must never produce
// an unknown token.
const char* kBaseWords[] = {
    "<eos>", "<unk>",
    ".", ",", ":", "?", "'", "<and>",
    "does", "the", "following", "text", "description", "and", "attached",
    "image", "come", "from", "same", "news", "post", "to", "help", "with",
    "your", "judgment", "i'll", "give", "you", "visual", "entities",
    "detected", "searched", "captions", "of", "are", "separated", "by",
    "however", "if", "or", "is", "not", "useful", "empty", "just", "ignore",
    "it", "own", "prediction", "please", "respond", "yes", "there", "a",
    "semantic", "match", "between", "no", "inconsistencies", "also",
    "reason", "rightly", "used", "none", "but", "images", "presented",
    "in", "format",
    "evidence", "mentions", "matches", "describes", "caption", "shows",
    "report", "event", "gathering", "scene", "coverage", "about", "near",
    "while", "instead", "suggests", "different",
};

bool is_word_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '<' || c == '>';
}

}  // namespace

int Vocab::base_size() {
    return static_cast<int>(std::size(kBaseWords));
}

Vocab Vocab::build(int text_vocab_size) {
    Vocab v;
    for (const char* w : kBaseWords) {
        v.index_.emplace(w, static_cast<int>(v.words_.size()));
        v.words_.emplace_back(w);
    }
    const int base = static_cast<int>(v.words_.size());
    if (text_vocab_size < base + 1) {
        throw ConfigError("text_vocab_size too small: need at least " +
                          std::to_string(base + 1));
    }
    v.content_base_ = base;
    v.n_content_ = text_vocab_size - base;
    char buf[16];
    for (int i = 0; i < v.n_content_; ++i) {
        std::snprintf(buf, sizeof(buf), "w%03d", i);
        v.index_.emplace(buf, static_cast<int>(v.words_.size()));
        v.words_.emplace_back(buf);
    }
    return v;
}

int Vocab::id(const std::string& word) const {
    auto it = index_.find(word);
    return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocab::word(int id) const {
    return words_.at(static_cast<size_t>(id));
}

std::vector<std::string> Vocab::split_words(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty()) {
            out.push_back(cur);
            cur.clear();
        }
    };
    for (size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
        if (c == '<' && text.compare(i, 5, "<and>") == 0) {
            flush();
            out.emplace_back("<and>");
            i += 4;
            continue;
        }
        if (std::isspace(static_cast<unsigned char>(c))) {
            flush();
            continue;
        }
        // Internal apostrophe stays inside the word (i'll); others split.
        if (c == '\'' && !cur.empty() && i + 1 < text.size() &&
            std::isalnum(static_cast<unsigned char>(text[i + 1]))) {
            cur += c;
            continue;
        }
        if (is_word_char(c)) {
            cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        } else {
            flush();
            out.push_back(std::string(1, c));
        }
    }
    flush();
    return out;
}

std::vector<int> Vocab::tokenize(const std::string& text) const {
    std::vector<int> ids;
    for (const auto& w : split_words(text)) ids.push_back(id(w));
    return ids;
}

std::string Vocab::detokenize(const std::vector<int>& ids) const {
    std::string out;
    for (int t : ids) {
        if (t == kEos) break;
        const std::string& w = word(t);
        if (!out.empty() && !(w == "." || w == "," || w == ":" || w == "?")) {
            out += ' ';
        }
        out += w;
    }
    return out;
}

}  // namespace oocd
