#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "oocd/corpus.hpp"
#include "oocd/prompt.hpp"

namespace oocd {

struct TeacherProfile {
    std::string name;
    double base_accuracy = 0.9;
    double difficulty_sensitivity = 0.0;
    double bias_toward_ooc = 0.0;  // in [-1,1]; shifts errors toward one class
    std::uint64_t seed = 0;

    void validate() const;
};

struct TeacherRecord {
    std::string item_id;
    std::string teacher_name;
    Label predicted_label = Label::Pristine;
    std::string rationale;
    std::string raw_response;

    bool operator==(const TeacherRecord&) const = default;
};

struct KnowledgeSet {
    // item_id -> one record per teacher, in teacher_names order.
    std::map<std::string, std::vector<TeacherRecord>> records;
    std::vector<std::string> teacher_names;  // first = designated primary

    const TeacherRecord& record(const std::string& item_id,
                                const std::string& teacher_name) const;
};

// Deterministic ambiguity score in [0,1]: how confusable the item's evidence
// is with its caption, given the gold label.
double item_difficulty(const NewsItem& item);

// Emits the gold label with probability
// clamp(base_accuracy - difficulty_sensitivity*difficulty + bias, 0, 1),
// deterministically in (profile.seed, item.id).
TeacherRecord simulate_teacher(const NewsItem& item, const TeacherProfile& profile,
                               double difficulty);

struct TeacherEndpointConfig {
    std::string base_url;      // e.g. http://localhost:8080
    std::string path = "/v1/chat/completions";
    std::string model;
    std::string auth_token_env;  // env var holding the bearer token
    int timeout_seconds = 30;
    int max_retries = 3;
    int backoff_ms = 100;
    double temperature = 0.0;
    int max_tokens = 256;
    int parse_failure_fallback = 1;  // label recorded when parsing fails
    std::string teacher_name = "external";
};

// Chat-completion-style request with retry/backoff; on ParseFailure the
// configured fallback label is recorded and the raw text preserved.
TeacherRecord query_external_teacher(const TeacherEndpointConfig& endpoint,
                                     const PromptText& prompt,
                                     const std::vector<int>& image_tokens);

// Append-only JSONL store keyed by (item_id, teacher); supports resuming.
class KnowledgeStore {
public:
    explicit KnowledgeStore(std::string path);
    KnowledgeSet load(const std::vector<std::string>& teacher_names) const;
    bool contains(const std::string& item_id, const std::string& teacher) const;
    const TeacherRecord& get(const std::string& item_id, const std::string& teacher) const;
    void append(const TeacherRecord& rec);
    const std::string& path() const { return path_; }

private:
    std::string path_;
    std::map<std::pair<std::string, std::string>, TeacherRecord> seen_;
};

// One record per (item, teacher); resumable through `store` when non-null.
KnowledgeSet acquire_knowledge(const std::vector<NewsItem>& items,
                               const std::vector<TeacherProfile>& teachers,
                               PromptVariant variant, KnowledgeStore* store = nullptr);

}  // namespace oocd
