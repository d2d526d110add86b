#include "oocd/eval.hpp"

#include <fstream>

#include <json.hpp>

#include "oocd/errors.hpp"

namespace oocd {

using nlohmann::json;

std::string Metrics::to_json() const {
    return json{{"accuracy", accuracy},
                {"precision", precision},
                {"recall", recall},
                {"f1", f1},
                {"parse_failure_count", parse_failure_count},
                {"tp", counts.tp},
                {"fp", counts.fp},
                {"fn", counts.fn},
                {"tn", counts.tn}}
        .dump(2);
}

Prediction predict(AdapterStack& stack, const NewsItem& item, const Vocab& vocab,
                   const EvalOptions& opts) {
    PromptText prompt = build_prompt(item, opts.variant);
    std::vector<int> prompt_tokens = vocab.tokenize(prompt.text);
    DecodeResult dec = greedy_decode(stack, item.image, prompt_tokens, opts.max_new_tokens);

    Prediction p;
    p.item_id = item.id;
    p.gold = item.gold_label;
    p.raw_text = vocab.detokenize(dec.tokens);
    try {
        ParsedResponse parsed = parse_response(p.raw_text);
        p.pred = parsed.label;
        p.rationale = parsed.rationale;
    } catch (const ParseFailure&) {
        p.pred = opts.parse_failure_fallback;
        p.parse_ok = false;
    }
    return p;
}

Metrics compute_metrics(const std::vector<Label>& predictions,
                        const std::vector<Label>& golds) {
    if (predictions.size() != golds.size()) {
        throw ConfigError("compute_metrics: predictions and golds differ in length");
    }
    Metrics m;
    for (size_t i = 0; i < predictions.size(); ++i) {
        const bool pred_pos = predictions[i] == Label::OutOfContext;
        const bool gold_pos = golds[i] == Label::OutOfContext;
        if (pred_pos && gold_pos) ++m.counts.tp;
        else if (pred_pos) ++m.counts.fp;
        else if (gold_pos) ++m.counts.fn;
        else ++m.counts.tn;
    }
    const long n = m.counts.tp + m.counts.fp + m.counts.fn + m.counts.tn;
    m.accuracy = n == 0 ? 0.0 : static_cast<double>(m.counts.tp + m.counts.tn) / n;
    m.precision = m.counts.tp + m.counts.fp == 0
                      ? 0.0
                      : static_cast<double>(m.counts.tp) / (m.counts.tp + m.counts.fp);
    m.recall = m.counts.tp + m.counts.fn == 0
                   ? 0.0
                   : static_cast<double>(m.counts.tp) / (m.counts.tp + m.counts.fn);
    m.f1 = m.precision + m.recall == 0.0
               ? 0.0
               : 2.0 * m.precision * m.recall / (m.precision + m.recall);
    return m;
}

Metrics evaluate(AdapterStack& stack, const std::vector<NewsItem>& items, const Vocab& vocab,
                 const EvalOptions& opts, std::vector<Prediction>* out_predictions) {
    std::vector<Label> preds, golds;
    int parse_failures = 0;
    for (const auto& item : items) {
        if (!item.gold_label) {
            throw PipelineError("evaluation item " + item.id + " lacks a gold label");
        }
        Prediction p = predict(stack, item, vocab, opts);
        if (!p.parse_ok) ++parse_failures;
        preds.push_back(p.pred);
        golds.push_back(*item.gold_label);
        if (out_predictions) out_predictions->push_back(std::move(p));
    }
    Metrics m = compute_metrics(preds, golds);
    m.parse_failure_count = parse_failures;
    return m;
}

void save_predictions_jsonl(const std::vector<Prediction>& preds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path + " for writing");
    for (const auto& p : preds) {
        json j{{"item_id", p.item_id},
               {"pred", label_value(p.pred)},
               {"parse_ok", p.parse_ok},
               {"rationale", p.rationale}};
        if (p.gold) j["gold"] = label_value(*p.gold);
        out << j.dump() << '\n';
    }
}

AblationMode ablation_mode_from_string(const std::string& name) {
    if (name == "Full") return AblationMode::Full;
    if (name == "NoStep1NoStep2") return AblationMode::NoStep1NoStep2;
    if (name == "NoStep2") return AblationMode::NoStep2;
    if (name == "NoDpoStep2") return AblationMode::NoDpoStep2;
    if (name == "NoLoraFtStep2") return AblationMode::NoLoraFtStep2;
    throw ConfigError("unknown ablation mode: " + name);
}

std::string to_string(AblationMode mode) {
    switch (mode) {
        case AblationMode::Full: return "Full";
        case AblationMode::NoStep1NoStep2: return "NoStep1NoStep2";
        case AblationMode::NoStep2: return "NoStep2";
        case AblationMode::NoDpoStep2: return "NoDpoStep2";
        case AblationMode::NoLoraFtStep2: return "NoLoraFtStep2";
    }
    throw ConfigError("unknown ablation mode");
}

}  // namespace oocd
