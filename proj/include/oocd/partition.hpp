#pragma once

#include <map>
#include <string>
#include <vector>

#include "oocd/corpus.hpp"
#include "oocd/teacher.hpp"

namespace oocd {

struct ConsensusPartition {
    std::vector<std::string> agree;
    std::vector<std::string> conflict;
};

struct StageTarget {
    std::string item_id;
    std::vector<int> image_tokens;
    std::string prompt_text;
    std::string target_text;  // verdict sentence + rationale
    std::string source_teacher;
};

struct DpoPair {
    std::string item_id;
    std::vector<int> image_tokens;
    std::string prompt_text;
    std::string preferred;  // y_w: correct teacher's full response
    std::string rejected;   // y_l: incorrect teacher's full response
};

struct BudgetReport {
    int total = 0;
    int conflict = 0;
    double fraction = 0.0;
};

// item in agree iff both teachers predicted the same label. Requires exactly
// two teachers per item.
ConsensusPartition partition_by_consensus(const KnowledgeSet& ks);

using LabelSource = std::map<std::string, Label>;

LabelSource load_annotations_jsonl(const std::string& path);
void save_annotations_jsonl(const LabelSource& annotations, const std::string& path);

// Gold labels for exactly the conflict items; throws if any is unavailable.
LabelSource request_annotations(const ConsensusPartition& partition,
                                const LabelSource& label_source);

BudgetReport budget_report(const ConsensusPartition& partition);

// One target per item. Agree items take the primary teacher's output; conflict
// items take whichever teacher matches the annotation. Items whose needed
// response failed to parse are dropped (count reported via dropped).
std::vector<StageTarget> stage1_targets(const std::vector<NewsItem>& items,
                                        const KnowledgeSet& ks,
                                        const ConsensusPartition& partition,
                                        const LabelSource& annotations,
                                        const std::string& primary_teacher,
                                        PromptVariant variant, int* dropped = nullptr);

// One pair per conflict item: preferred = correct teacher, rejected = the other.
std::vector<DpoPair> build_dpo_pairs(const std::vector<NewsItem>& items,
                                     const KnowledgeSet& ks,
                                     const ConsensusPartition& partition,
                                     const LabelSource& annotations,
                                     PromptVariant variant, int* dropped = nullptr);

}  // namespace oocd
