#include "oocd/pipeline.hpp"

#include <set>

#include "oocd/chart.hpp"
#include "oocd/errors.hpp"

namespace oocd {

PreparedData prepare_data(const PipelineConfig& cfg) {
    PreparedData d;
    d.corpus = generate_corpus(cfg.corpus);
    d.vocab = Vocab::build(cfg.corpus.text_vocab_size);
    d.knowledge = acquire_knowledge(d.corpus.train, cfg.teachers, cfg.variant);
    d.partition = partition_by_consensus(d.knowledge);
    d.budget = budget_report(d.partition);

    LabelSource golds;
    for (const auto& item : d.corpus.train) {
        if (item.gold_label) golds[item.id] = *item.gold_label;
    }
    d.annotations = request_annotations(d.partition, golds);

    int dropped1 = 0, dropped2 = 0;
    auto targets = stage1_targets(d.corpus.train, d.knowledge, d.partition, d.annotations,
                                  cfg.primary_teacher, cfg.variant, &dropped1);
    auto pairs = build_dpo_pairs(d.corpus.train, d.knowledge, d.partition, d.annotations,
                                 cfg.variant, &dropped2);
    d.dropped_unparseable = dropped1 + dropped2;

    std::set<std::string> conflict(d.partition.conflict.begin(), d.partition.conflict.end());
    for (const auto& t : targets) {
        d.stage1_targets.push_back(tokenize_target(t, d.vocab));
        if (conflict.count(t.item_id)) {
            d.conflict_targets.push_back(tokenize_target(t, d.vocab));
        }
    }
    for (const auto& p : pairs) d.dpo_pairs.push_back(tokenize_pair(p, d.vocab));
    return d;
}

double mean_dpo_margin(AdapterStack& stack, const std::vector<TokenizedPair>& pairs,
                       double beta) {
    if (pairs.empty()) throw PipelineError("no pairs to measure the DPO margin on");
    double sum = 0.0;
    for (const auto& pair : pairs) {
        const auto [ref_w, ref_l] = reference_logprobs(stack, pair);
        TokenizedTarget w{pair.item_id, pair.image_tokens, pair.prompt_tokens,
                          pair.preferred_tokens};
        TokenizedTarget l{pair.item_id, pair.image_tokens, pair.prompt_tokens,
                          pair.rejected_tokens};
        sum += beta * ((seq_logprob(stack, w) - ref_w) - (seq_logprob(stack, l) - ref_l));
    }
    return sum / static_cast<double>(pairs.size());
}

std::vector<TokenizedPair> heldout_conflict_pairs(const PipelineConfig& cfg,
                                                  const std::vector<NewsItem>& split,
                                                  const Vocab& vocab) {
    KnowledgeSet ks = acquire_knowledge(split, cfg.teachers, cfg.variant);
    ConsensusPartition part = partition_by_consensus(ks);
    LabelSource golds;
    for (const auto& item : split) {
        if (item.gold_label) golds[item.id] = *item.gold_label;
    }
    LabelSource ann = request_annotations(part, golds);
    auto pairs = build_dpo_pairs(split, ks, part, ann, cfg.variant);
    std::vector<TokenizedPair> out;
    for (const auto& p : pairs) out.push_back(tokenize_pair(p, vocab));
    return out;
}

ExperimentResult run_ablation(AblationMode mode, const PipelineConfig& cfg,
                              const std::string& checkpoint_dir) {
    PreparedData data = prepare_data(cfg);
    ExperimentResult res;
    res.mode = mode;
    res.budget = data.budget;

    AdapterStack stack;
    stack.base = TinyLm::init(cfg.model);

    if (mode == AblationMode::NoStep1NoStep2) {
        res.metrics = evaluate(stack, data.corpus.test, data.vocab, cfg.eval);
        return res;
    }

    const std::string s1_dir = checkpoint_dir.empty() ? "" : checkpoint_dir + "/stage1";
    res.stage1_report = train_stage1(stack, data.stage1_targets, cfg.train, s1_dir);
    res.stage1_metrics = evaluate(stack, data.corpus.test, data.vocab, cfg.eval);

    if (mode == AblationMode::NoStep2) {
        res.metrics = *res.stage1_metrics;
        return res;
    }

    TrainConfig tc = cfg.train;
    if (mode == AblationMode::NoDpoStep2) tc.stage2.alpha = 0.0;
    if (mode == AblationMode::NoLoraFtStep2) tc.stage2.gamma = 0.0;
    const std::string s2_dir = checkpoint_dir.empty() ? "" : checkpoint_dir + "/stage2";
    res.stage2_report =
        train_stage2(stack, data.dpo_pairs, data.conflict_targets, tc, s2_dir);

    res.metrics = evaluate(stack, data.corpus.test, data.vocab, cfg.eval);
    auto heldout = heldout_conflict_pairs(cfg, data.corpus.val, data.vocab);
    if (!heldout.empty()) {
        res.heldout_margin = mean_dpo_margin(stack, heldout, tc.stage2.beta);
    }
    return res;
}

std::vector<SweepRow> sweep(const std::string& param, const std::vector<double>& values,
                            const PipelineConfig& base) {
    if (values.empty()) throw ConfigError("sweep needs at least one value");
    if (param != "lora_rank" && param != "dpo_alpha" && param != "beta") {
        throw ConfigError("sweep param must be lora_rank, dpo_alpha or beta");
    }
    std::vector<SweepRow> rows;

    if (param == "lora_rank") {
        for (double v : values) {
            SweepRow row;
            row.value = v;
            try {
                PipelineConfig cfg = base;
                cfg.train.stage1.lora_rank = static_cast<int>(v);
                cfg.train.stage2.lora_rank = static_cast<int>(v);
                row.metrics = run_ablation(AblationMode::Full, cfg).metrics;
            } catch (const std::exception& e) {
                row.error = e.what();
            }
            rows.push_back(std::move(row));
        }
        return rows;
    }

    // alpha / beta affect only stage 2: train stage 1 once and reuse it.
    PreparedData data = prepare_data(base);
    AdapterStack stage1_stack;
    stage1_stack.base = TinyLm::init(base.model);
    train_stage1(stage1_stack, data.stage1_targets, base.train, "");
    for (double v : values) {
        SweepRow row;
        row.value = v;
        try {
            AdapterStack stack = stage1_stack;
            TrainConfig tc = base.train;
            if (param == "dpo_alpha") tc.stage2.alpha = v;
            else tc.stage2.beta = v;
            train_stage2(stack, data.dpo_pairs, data.conflict_targets, tc, "");
            row.metrics = evaluate(stack, data.corpus.test, data.vocab, base.eval);
        } catch (const std::exception& e) {
            row.error = e.what();
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string sweep_csv(const std::string& param, const std::vector<SweepRow>& rows) {
    std::string out = param + ",accuracy,precision,recall,f1,error\n";
    for (const auto& r : rows) {
        out += std::to_string(r.value) + "," + std::to_string(r.metrics.accuracy) + "," +
               std::to_string(r.metrics.precision) + "," + std::to_string(r.metrics.recall) +
               "," + std::to_string(r.metrics.f1) + "," + r.error + "\n";
    }
    return out;
}

void write_sweep_chart(const std::string& path, const std::string& param,
                       const std::vector<SweepRow>& rows) {
    ChartSeries acc{"accuracy", {}}, f1{"f1", {}};
    for (const auto& r : rows) {
        if (!r.error.empty()) continue;
        acc.points.push_back({r.value, r.metrics.accuracy});
        f1.points.push_back({r.value, r.metrics.f1});
    }
    write_line_chart_svg(path, "sensitivity: " + param, param, "metric", {acc, f1});
}

}  // namespace oocd
