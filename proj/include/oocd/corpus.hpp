#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace oocd {

// 1 = out-of-context, 0 = pristine.
enum class Label : int { Pristine = 0, OutOfContext = 1 };

inline int label_value(Label l) { return static_cast<int>(l); }
Label label_from_int(int v);

struct Evidence {
    std::vector<std::string> visual_entities;    // x_ent
    std::vector<std::string> searched_captions;  // x_scap

    bool operator==(const Evidence&) const = default;
};

struct NewsItem {
    std::string id;
    std::vector<int> image;  // visual-token ids
    std::string caption;
    Evidence evidence;
    std::optional<Label> gold_label;
    std::optional<std::string> context_id;        // caption's context
    std::optional<std::string> image_context_id;  // generator-internal

    bool operator==(const NewsItem&) const = default;
};

struct CorpusConfig {
    int n_contexts = 50;
    int n_items_per_context = 60;
    double ooc_ratio = 0.5;
    int visual_vocab_size = 64;
    int text_vocab_size = 512;
    double similarity_noise = 0.25;
    std::uint64_t seed = 0;
    // Per-context split fractions; the remainder is the test split.
    double train_fraction = 2.0 / 3.0;
    double val_fraction = 1.0 / 6.0;

    void validate() const;  // throws ConfigError
};

struct Corpus {
    std::vector<NewsItem> train;
    std::vector<NewsItem> val;
    std::vector<NewsItem> test;
};

// Deterministic synthetic news world. Pristine items pair a caption with an
// image from its own context; out-of-context items swap in an image from a
// neighboring (similar) context. Evidence always describes the image's true
// context, corrupted with probability similarity_noise per word.
Corpus generate_corpus(const CorpusConfig& config);

// NewsCLIPpings-style JSONL ingestion; order-preserving, unknown fields ignored.
std::vector<NewsItem> load_jsonl(const std::string& path);

// One JSON object per line; omit_labels drops label/context fields (used for
// the training split, whose gold labels live in a separate annotation source).
void save_jsonl(const std::vector<NewsItem>& items, const std::string& path,
                bool omit_labels = false);

// id -> gold label map for every labeled item (synthetic annotation source).
void save_labels_jsonl(const std::vector<NewsItem>& items, const std::string& path);

}  // namespace oocd
