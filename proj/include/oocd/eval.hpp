#pragma once

#include <optional>
#include <string>
#include <vector>

#include "oocd/corpus.hpp"
#include "oocd/model.hpp"
#include "oocd/prompt.hpp"
#include "oocd/vocab.hpp"

namespace oocd {

struct ConfusionCounts {
    long tp = 0, fp = 0, fn = 0, tn = 0;  // positive class = out-of-context
};

struct Metrics {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    int parse_failure_count = 0;
    ConfusionCounts counts;

    std::string to_json() const;
};

struct Prediction {
    std::string item_id;
    Label pred = Label::Pristine;
    std::optional<Label> gold;
    bool parse_ok = true;
    std::string rationale;
    std::string raw_text;
};

struct EvalOptions {
    PromptVariant variant = PromptVariant::EntitiesAndCaptions;
    int max_new_tokens = 24;
    Label parse_failure_fallback = Label::OutOfContext;
};

// Prompt, greedy-decode, parse; on ParseFailure the fallback label is used
// and parse_ok is false.
Prediction predict(AdapterStack& stack, const NewsItem& item, const Vocab& vocab,
                   const EvalOptions& opts = {});

// Accuracy over all items; precision/recall/F1 of the out-of-context class
// (0 by convention when the denominator is empty).
Metrics compute_metrics(const std::vector<Label>& predictions, const std::vector<Label>& golds);

// Evaluates every item; items must carry gold labels.
Metrics evaluate(AdapterStack& stack, const std::vector<NewsItem>& items, const Vocab& vocab,
                 const EvalOptions& opts = {}, std::vector<Prediction>* out_predictions = nullptr);

void save_predictions_jsonl(const std::vector<Prediction>& preds, const std::string& path);

enum class AblationMode { Full, NoStep1NoStep2, NoStep2, NoDpoStep2, NoLoraFtStep2 };
AblationMode ablation_mode_from_string(const std::string& name);
std::string to_string(AblationMode mode);

}  // namespace oocd
