#include "oocd/partition.hpp"

#include <fstream>
#include <set>

#include <json.hpp>

#include "oocd/errors.hpp"
#include "oocd/prompt.hpp"

namespace oocd {

using nlohmann::json;

ConsensusPartition partition_by_consensus(const KnowledgeSet& ks) {
    if (ks.teacher_names.size() != 2) {
        throw PipelineError("consensus partitioning requires exactly two teachers, got " +
                            std::to_string(ks.teacher_names.size()));
    }
    ConsensusPartition part;
    for (const auto& [item_id, recs] : ks.records) {
        if (recs.size() != 2) {
            throw PipelineError("item " + item_id + " has " + std::to_string(recs.size()) +
                                " teacher records, expected 2");
        }
        if (recs[0].predicted_label == recs[1].predicted_label) {
            part.agree.push_back(item_id);
        } else {
            part.conflict.push_back(item_id);
        }
    }
    return part;
}

LabelSource load_annotations_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    LabelSource out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded()) {
            throw SchemaError(path + " line " + std::to_string(line_no) + ": malformed JSON");
        }
        out[j.at("item_id").get<std::string>()] = label_from_int(j.at("label").get<int>());
    }
    return out;
}

void save_annotations_jsonl(const LabelSource& annotations, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path + " for writing");
    for (const auto& [id, label] : annotations) {
        out << json{{"item_id", id}, {"label", label_value(label)}}.dump() << '\n';
    }
}

LabelSource request_annotations(const ConsensusPartition& partition,
                                const LabelSource& label_source) {
    LabelSource out;
    for (const auto& id : partition.conflict) {
        auto it = label_source.find(id);
        if (it == label_source.end()) {
            throw PipelineError("no annotation available for conflict item " + id);
        }
        out.emplace(id, it->second);
    }
    return out;
}

BudgetReport budget_report(const ConsensusPartition& partition) {
    BudgetReport r;
    r.conflict = static_cast<int>(partition.conflict.size());
    r.total = r.conflict + static_cast<int>(partition.agree.size());
    r.fraction = r.total == 0 ? 0.0 : static_cast<double>(r.conflict) / r.total;
    return r;
}

namespace {

bool parses(const std::string& text) {
    try {
        parse_response(text);
        return true;
    } catch (const ParseFailure&) {
        return false;
    }
}

const NewsItem& item_by_id(const std::vector<NewsItem>& items, const std::string& id) {
    for (const auto& it : items) {
        if (it.id == id) return it;
    }
    throw PipelineError("item " + id + " not found in corpus");
}

}  // namespace

std::vector<StageTarget> stage1_targets(const std::vector<NewsItem>& items,
                                        const KnowledgeSet& ks,
                                        const ConsensusPartition& partition,
                                        const LabelSource& annotations,
                                        const std::string& primary_teacher,
                                        PromptVariant variant, int* dropped) {
    std::map<std::string, NewsItem const*> by_id;
    for (const auto& it : items) by_id[it.id] = &it;
    std::set<std::string> conflict(partition.conflict.begin(), partition.conflict.end());

    int n_dropped = 0;
    std::vector<StageTarget> targets;
    for (const auto& item : items) {
        const TeacherRecord* src = nullptr;
        if (conflict.count(item.id)) {
            auto ann = annotations.find(item.id);
            if (ann == annotations.end()) {
                throw PipelineError("missing annotation for conflict item " + item.id);
            }
            for (const auto& rec : ks.records.at(item.id)) {
                if (rec.predicted_label == ann->second) src = &rec;
            }
            if (!src) {
                throw PipelineError("no teacher matches the annotation for item " + item.id);
            }
        } else {
            src = &ks.record(item.id, primary_teacher);
        }
        if (!parses(src->raw_response)) {
            ++n_dropped;
            continue;
        }
        StageTarget t;
        t.item_id = item.id;
        t.image_tokens = item.image;
        t.prompt_text = build_prompt(item, variant).text;
        t.target_text = src->raw_response;
        t.source_teacher = src->teacher_name;
        targets.push_back(std::move(t));
    }
    if (dropped) *dropped = n_dropped;
    return targets;
}

std::vector<DpoPair> build_dpo_pairs(const std::vector<NewsItem>& items,
                                     const KnowledgeSet& ks,
                                     const ConsensusPartition& partition,
                                     const LabelSource& annotations,
                                     PromptVariant variant, int* dropped) {
    int n_dropped = 0;
    std::vector<DpoPair> pairs;
    for (const auto& id : partition.conflict) {
        auto ann = annotations.find(id);
        if (ann == annotations.end()) {
            throw PipelineError("missing annotation for conflict item " + id);
        }
        const auto& recs = ks.records.at(id);
        const TeacherRecord* correct = nullptr;
        const TeacherRecord* incorrect = nullptr;
        for (const auto& rec : recs) {
            (rec.predicted_label == ann->second ? correct : incorrect) = &rec;
        }
        if (!correct || !incorrect) {
            throw PipelineError("conflict item " + id + " lacks a correct/incorrect teacher");
        }
        if (!parses(correct->raw_response) || !parses(incorrect->raw_response)) {
            ++n_dropped;
            continue;
        }
        const NewsItem& item = item_by_id(items, id);
        DpoPair p;
        p.item_id = id;
        p.image_tokens = item.image;
        p.prompt_text = build_prompt(item, variant).text;
        p.preferred = correct->raw_response;
        p.rejected = incorrect->raw_response;
        pairs.push_back(std::move(p));
    }
    if (dropped) *dropped = n_dropped;
    return pairs;
}

}  // namespace oocd
