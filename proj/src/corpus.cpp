#include "oocd/corpus.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <random>

#include <json.hpp>

#include "oocd/errors.hpp"
#include "oocd/vocab.hpp"

namespace oocd {

using nlohmann::json;

Label label_from_int(int v) {
    if (v != 0 && v != 1) throw SchemaError("label must be 0 or 1, got " + std::to_string(v));
    return static_cast<Label>(v);
}

void CorpusConfig::validate() const {
    if (n_contexts < 1 || n_items_per_context < 1 || visual_vocab_size < 1 ||
        text_vocab_size < 1) {
        throw ConfigError("corpus counts must be >= 1");
    }
    if (ooc_ratio < 0.0 || ooc_ratio > 1.0) throw ConfigError("ooc_ratio must be in [0,1]");
    if (similarity_noise < 0.0 || similarity_noise > 1.0) {
        throw ConfigError("similarity_noise must be in [0,1]");
    }
    if (train_fraction < 0.0 || val_fraction < 0.0 || train_fraction + val_fraction > 1.0) {
        throw ConfigError("split fractions must be nonnegative and sum to <= 1");
    }
}

namespace {

struct Rng {
    std::mt19937_64 gen;
    explicit Rng(std::uint64_t seed) : gen(seed) {}
    int below(int n) { return static_cast<int>(gen() % static_cast<std::uint64_t>(n)); }
    double uniform() { return (gen() >> 11) * (1.0 / 9007199254740992.0); }
    template <class T>
    void shuffle(std::vector<T>& v) {
        for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
            std::swap(v[static_cast<size_t>(i)], v[static_cast<size_t>(below(i + 1))]);
        }
    }
};

struct Context {
    std::vector<std::string> sig;       // signature words (captions + evidence)
    std::vector<std::string> entities;  // extra evidence-only words
    std::string loc;
    std::vector<int> visual;            // visual-token pool
};

std::string content_word(const Vocab& v, int idx) {
    return v.word(v.content_base() + idx);
}

}  // namespace

Corpus generate_corpus(const CorpusConfig& config) {
    config.validate();
    const Vocab vocab = Vocab::build(config.text_vocab_size);
    const int n_content = vocab.n_content_words();
    Rng rng(config.seed ^ 0x6f6f63642d67656eULL);

    const int nc = config.n_contexts;
    std::vector<Context> ctx(static_cast<size_t>(nc));
    for (auto& c : ctx) {
        for (int k = 0; k < 3; ++k) c.sig.push_back(content_word(vocab, rng.below(n_content)));
        for (int k = 0; k < 3; ++k) c.entities.push_back(content_word(vocab, rng.below(n_content)));
        c.loc = content_word(vocab, rng.below(n_content));
        for (int k = 0; k < 4; ++k) c.visual.push_back(rng.below(config.visual_vocab_size));
    }
    auto neighbor = [&](int c, Rng& r) {
        if (nc == 1) return c;
        int delta = r.uniform() < 0.5 ? 1 : nc - 1;
        return (c + delta) % nc;
    };
    // A word from a context similar to `c`, used to blur evidence.
    auto similar_word = [&](int c, Rng& r) {
        const Context& s = ctx[static_cast<size_t>(neighbor(c, r))];
        int k = r.below(static_cast<int>(s.sig.size() + s.entities.size()));
        return k < static_cast<int>(s.sig.size())
                   ? s.sig[static_cast<size_t>(k)]
                   : s.entities[static_cast<size_t>(k - s.sig.size())];
    };

    const int m = config.n_items_per_context;
    const int n_train = static_cast<int>(std::lround(config.train_fraction * m));
    const int n_val = static_cast<int>(std::lround(config.val_fraction * m));

    struct Slot {
        int cap_ctx;
        int index;
    };
    std::vector<Slot> splits[3];
    for (int c = 0; c < nc; ++c) {
        for (int i = 0; i < m; ++i) {
            int which = i < n_train ? 0 : (i < n_train + n_val ? 1 : 2);
            splits[which].push_back({c, i});
        }
    }

    static const char* kNouns[] = {"event", "gathering", "scene"};
    Corpus out;
    for (int s = 0; s < 3; ++s) {
        auto& slots = splits[s];
        rng.shuffle(slots);
        const int n_ooc = static_cast<int>(std::lround(config.ooc_ratio * slots.size()));
        std::vector<NewsItem>& dst = s == 0 ? out.train : (s == 1 ? out.val : out.test);
        for (size_t j = 0; j < slots.size(); ++j) {
            const Slot& slot = slots[j];
            const bool ooc = static_cast<int>(j) < n_ooc;
            const Context& cap = ctx[static_cast<size_t>(slot.cap_ctx)];
            const int img_ctx = ooc ? neighbor(slot.cap_ctx, rng) : slot.cap_ctx;
            const Context& img = ctx[static_cast<size_t>(img_ctx)];

            NewsItem item;
            char idbuf[32];
            std::snprintf(idbuf, sizeof(idbuf), "c%03d-i%03d", slot.cap_ctx, slot.index);
            item.id = idbuf;

            int a = rng.below(3), b = (a + 1 + rng.below(2)) % 3;
            item.caption = "the " + cap.sig[static_cast<size_t>(a)] + " " +
                           cap.sig[static_cast<size_t>(b)] + " " + kNouns[rng.below(3)] +
                           " in " + cap.loc;

            // The image and its retrieved evidence are deterministic views of
            // the image's context; the blur below is the only evidence noise.
            // Keeping per-item nuisance variation out of the evidence means a
            // student that fits the training split has seen the same evidence
            // patterns it will face at test time.
            item.image = img.visual;

            auto blur = [&](const std::string& w) {
                return rng.uniform() < config.similarity_noise ? similar_word(img_ctx, rng) : w;
            };
            item.evidence.visual_entities.push_back(blur(img.sig[0]));
            item.evidence.visual_entities.push_back(blur(img.entities[0]));
            item.evidence.searched_captions.push_back(blur(img.sig[1]) + " " +
                                                      blur(img.entities[1]) +
                                                      " report from " + blur(img.loc));

            item.gold_label = ooc ? Label::OutOfContext : Label::Pristine;
            char cb[16];
            std::snprintf(cb, sizeof(cb), "ctx%03d", slot.cap_ctx);
            item.context_id = cb;
            std::snprintf(cb, sizeof(cb), "ctx%03d", img_ctx);
            item.image_context_id = cb;
            dst.push_back(std::move(item));
        }
    }
    return out;
}

namespace {

NewsItem item_from_json(const json& j, int line_no) {
    auto require = [&](const char* field) -> const json& {
        auto it = j.find(field);
        if (it == j.end()) {
            throw SchemaError("line " + std::to_string(line_no) + ": missing field \"" +
                              field + "\"");
        }
        return *it;
    };
    NewsItem item;
    try {
        item.id = require("id").get<std::string>();
        item.caption = require("caption").get<std::string>();
        item.evidence.visual_entities = require("visual_entities").get<std::vector<std::string>>();
        item.evidence.searched_captions =
            require("searched_captions").get<std::vector<std::string>>();
        item.image = require("image_tokens").get<std::vector<int>>();
        if (j.contains("label")) item.gold_label = label_from_int(j["label"].get<int>());
        if (j.contains("context_id")) item.context_id = j["context_id"].get<std::string>();
        if (j.contains("image_context_id")) {
            item.image_context_id = j["image_context_id"].get<std::string>();
        }
    } catch (const json::exception& e) {
        throw SchemaError("line " + std::to_string(line_no) + ": " + e.what());
    }
    return item;
}

}  // namespace

std::vector<NewsItem> load_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::vector<NewsItem> items;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded()) {
            throw SchemaError("line " + std::to_string(line_no) + ": malformed JSON");
        }
        items.push_back(item_from_json(j, line_no));
    }
    return items;
}

void save_jsonl(const std::vector<NewsItem>& items, const std::string& path, bool omit_labels) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path + " for writing");
    for (const auto& item : items) {
        json j{{"id", item.id},
               {"caption", item.caption},
               {"visual_entities", item.evidence.visual_entities},
               {"searched_captions", item.evidence.searched_captions},
               {"image_tokens", item.image}};
        if (!omit_labels) {
            if (item.gold_label) j["label"] = label_value(*item.gold_label);
            if (item.context_id) j["context_id"] = *item.context_id;
            if (item.image_context_id) j["image_context_id"] = *item.image_context_id;
        }
        out << j.dump() << '\n';
    }
}

void save_labels_jsonl(const std::vector<NewsItem>& items, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path + " for writing");
    for (const auto& item : items) {
        if (!item.gold_label) continue;
        out << json{{"item_id", item.id}, {"label", label_value(*item.gold_label)}}.dump()
            << '\n';
    }
}

}  // namespace oocd
