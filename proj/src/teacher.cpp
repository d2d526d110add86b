#include "oocd/teacher.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <set>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "oocd/errors.hpp"
#include "oocd/vocab.hpp"

namespace oocd {

using nlohmann::json;

void TeacherProfile::validate() const {
    if (name.empty()) throw ConfigError("teacher profile needs a name");
    if (base_accuracy <= 0.5 || base_accuracy > 1.0) {
        throw ConfigError("teacher base_accuracy must be in (0.5, 1.0]");
    }
    if (difficulty_sensitivity < 0.0) throw ConfigError("difficulty_sensitivity must be >= 0");
    if (bias_toward_ooc < -1.0 || bias_toward_ooc > 1.0) {
        throw ConfigError("bias_toward_ooc must be in [-1,1]");
    }
}

const TeacherRecord& KnowledgeSet::record(const std::string& item_id,
                                          const std::string& teacher_name) const {
    auto it = records.find(item_id);
    if (it == records.end()) throw PipelineError("no knowledge for item " + item_id);
    for (const auto& r : it->second) {
        if (r.teacher_name == teacher_name) return r;
    }
    throw PipelineError("item " + item_id + " has no record from teacher " + teacher_name);
}

namespace {

std::uint64_t fnv1a(const std::string& s, std::uint64_t h = 1469598103934665603ULL) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

// Stable uniform draw in [0,1) from (seed, item id).
double unit_hash(std::uint64_t seed, const std::string& item_id) {
    std::uint64_t h = fnv1a(item_id, seed ^ 0x9e3779b97f4a7c15ULL);
    h ^= h >> 33;
    h *= 0xff51afd7ed558ccdULL;
    h ^= h >> 33;
    return (h >> 11) * (1.0 / 9007199254740992.0);
}

// Content words = anything outside the fixed template vocabulary.
std::set<std::string> content_words(const std::vector<std::string>& texts) {
    static const Vocab filter = Vocab::build(Vocab::base_size() + 1);
    std::set<std::string> out;
    for (const auto& t : texts) {
        for (const auto& w : Vocab::split_words(t)) {
            if (filter.id(w) >= filter.content_base() || filter.id(w) == Vocab::kUnk) {
                out.insert(w);
            }
        }
    }
    return out;
}

Label gold_of(const NewsItem& item) {
    if (item.gold_label) return *item.gold_label;
    if (item.context_id && item.image_context_id) {
        return *item.context_id == *item.image_context_id ? Label::Pristine
                                                          : Label::OutOfContext;
    }
    throw PipelineError("item " + item.id +
                        " has neither gold label nor context ids; cannot simulate");
}

}  // namespace

double item_difficulty(const NewsItem& item) {
    const auto cap = content_words({item.caption});
    std::vector<std::string> ev_texts = item.evidence.visual_entities;
    ev_texts.insert(ev_texts.end(), item.evidence.searched_captions.begin(),
                    item.evidence.searched_captions.end());
    const auto ev = content_words(ev_texts);
    if (ev.empty()) return 1.0;  // no evidence: maximally ambiguous
    int shared = 0;
    for (const auto& w : ev) {
        if (cap.count(w)) ++shared;
    }
    const double agreement = static_cast<double>(shared) / static_cast<double>(ev.size());
    // Shared words confuse OOC items; missing overlap confuses pristine ones.
    return gold_of(item) == Label::OutOfContext ? agreement : 1.0 - agreement;
}

TeacherRecord simulate_teacher(const NewsItem& item, const TeacherProfile& profile,
                               double difficulty) {
    profile.validate();
    if (difficulty < 0.0 || difficulty > 1.0) {
        throw ConfigError("difficulty must be in [0,1]");
    }
    const Label gold = gold_of(item);
    const double bias = profile.bias_toward_ooc * (1.0 - profile.base_accuracy) *
                        (gold == Label::OutOfContext ? 1.0 : -1.0);
    double p = profile.base_accuracy - profile.difficulty_sensitivity * difficulty + bias;
    p = std::clamp(p, 0.0, 1.0);
    const bool correct = unit_hash(profile.seed, item.id) < p;
    const Label pred = correct ? gold
                               : (gold == Label::Pristine ? Label::OutOfContext
                                                          : Label::Pristine);

    TeacherRecord rec;
    rec.item_id = item.id;
    rec.teacher_name = profile.name;
    rec.predicted_label = pred;
    // Kept short and free of item-specific words: distillation targets built
    // from these responses stay dominated by label-bearing tokens instead of
    // hard-to-predict content words.
    rec.rationale = pred == Label::Pristine ? "The evidence matches the caption."
                                            : "The evidence does not match the caption.";
    rec.raw_response = verdict_phrase(pred) + " " + rec.rationale;
    return rec;
}

TeacherRecord query_external_teacher(const TeacherEndpointConfig& endpoint,
                                     const PromptText& prompt,
                                     const std::vector<int>& image_tokens) {
    httplib::Client cli(endpoint.base_url);
    cli.set_connection_timeout(endpoint.timeout_seconds);
    cli.set_read_timeout(endpoint.timeout_seconds);
    httplib::Headers headers;
    if (!endpoint.auth_token_env.empty()) {
        if (const char* tok = std::getenv(endpoint.auth_token_env.c_str())) {
            headers.emplace("Authorization", std::string("Bearer ") + tok);
        }
    }
    const json body{{"model", endpoint.model},
                    {"temperature", endpoint.temperature},
                    {"max_tokens", endpoint.max_tokens},
                    {"messages",
                     json::array({json{{"role", "user"},
                                       {"content", prompt.text},
                                       {"image_tokens", image_tokens}}})}};

    std::string content;
    int last_status = -1;
    for (int attempt = 0; attempt < std::max(1, endpoint.max_retries); ++attempt) {
        if (attempt > 0) {
            std::this_thread::sleep_for(
                std::chrono::milliseconds(endpoint.backoff_ms << (attempt - 1)));
        }
        auto res = cli.Post(endpoint.path, headers, body.dump(), "application/json");
        if (!res) {
            last_status = -1;
            continue;
        }
        last_status = res->status;
        if (res->status >= 500) continue;  // retryable server error
        if (res->status < 200 || res->status >= 300) {
            throw ProtocolError(res->status, "teacher endpoint returned HTTP " +
                                                 std::to_string(res->status));
        }
        json j = json::parse(res->body, nullptr, false);
        if (j.is_discarded() || !j.contains("choices") || j["choices"].empty()) {
            throw ProtocolError(res->status, "malformed completion response");
        }
        content = j["choices"][0]["message"]["content"].get<std::string>();
        last_status = 0;
        break;
    }
    if (last_status != 0) {
        throw TransportError("teacher endpoint unreachable after " +
                             std::to_string(endpoint.max_retries) + " attempts" +
                             (last_status > 0 ? " (last HTTP " + std::to_string(last_status) + ")"
                                              : ""));
    }

    TeacherRecord rec;
    rec.item_id = prompt.item_id;
    rec.teacher_name = endpoint.teacher_name;
    rec.raw_response = content;
    try {
        auto parsed = parse_response(content);
        rec.predicted_label = parsed.label;
        rec.rationale = parsed.rationale;
    } catch (const ParseFailure&) {
        rec.predicted_label = label_from_int(endpoint.parse_failure_fallback);
    }
    return rec;
}

KnowledgeStore::KnowledgeStore(std::string path) : path_(std::move(path)) {
    std::ifstream in(path_);
    if (!in) return;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded()) {
            throw SchemaError(path_ + " line " + std::to_string(line_no) + ": malformed JSON");
        }
        TeacherRecord rec;
        rec.item_id = j.at("item_id").get<std::string>();
        rec.teacher_name = j.at("teacher").get<std::string>();
        rec.predicted_label = label_from_int(j.at("label").get<int>());
        rec.rationale = j.at("rationale").get<std::string>();
        rec.raw_response = j.at("raw").get<std::string>();
        seen_[{rec.item_id, rec.teacher_name}] = std::move(rec);
    }
}

const TeacherRecord& KnowledgeStore::get(const std::string& item_id,
                                         const std::string& teacher) const {
    auto it = seen_.find({item_id, teacher});
    if (it == seen_.end()) {
        throw PipelineError("knowledge store has no record for (" + item_id + ", " + teacher +
                            ")");
    }
    return it->second;
}

bool KnowledgeStore::contains(const std::string& item_id, const std::string& teacher) const {
    return seen_.count({item_id, teacher}) > 0;
}

void KnowledgeStore::append(const TeacherRecord& rec) {
    std::ofstream out(path_, std::ios::app);
    if (!out) throw IoError("cannot append to " + path_);
    out << json{{"item_id", rec.item_id},
                {"teacher", rec.teacher_name},
                {"label", label_value(rec.predicted_label)},
                {"rationale", rec.rationale},
                {"raw", rec.raw_response}}
               .dump()
        << '\n';
    seen_[{rec.item_id, rec.teacher_name}] = rec;
}

KnowledgeSet KnowledgeStore::load(const std::vector<std::string>& teacher_names) const {
    KnowledgeSet ks;
    ks.teacher_names = teacher_names;
    for (const auto& [key, rec] : seen_) {
        ks.records[key.first].push_back(rec);
    }
    // Keep teacher order stable within each item.
    for (auto& [id, recs] : ks.records) {
        std::vector<TeacherRecord> ordered;
        for (const auto& name : teacher_names) {
            for (const auto& r : recs) {
                if (r.teacher_name == name) ordered.push_back(r);
            }
        }
        recs = std::move(ordered);
    }
    return ks;
}

KnowledgeSet acquire_knowledge(const std::vector<NewsItem>& items,
                               const std::vector<TeacherProfile>& teachers,
                               PromptVariant variant, KnowledgeStore* store) {
    (void)variant;  // simulated teachers answer from item content directly
    if (teachers.empty()) throw ConfigError("need at least one teacher");
    KnowledgeSet ks;
    for (const auto& t : teachers) ks.teacher_names.push_back(t.name);
    for (const auto& item : items) {
        for (const auto& t : teachers) {
            try {
                if (store && store->contains(item.id, t.name)) {
                    ks.records[item.id].push_back(store->get(item.id, t.name));
                    continue;
                }
                TeacherRecord rec = simulate_teacher(item, t, item_difficulty(item));
                if (store) store->append(rec);
                ks.records[item.id].push_back(std::move(rec));
            } catch (const std::exception& e) {
                throw PipelineError("teacher " + t.name + " failed on item " + item.id + ": " +
                                    e.what());
            }
        }
    }
    return ks;
}

}  // namespace oocd
