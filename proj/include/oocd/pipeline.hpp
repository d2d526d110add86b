#pragma once

#include <optional>
#include <string>
#include <vector>

#include "oocd/config.hpp"
#include "oocd/eval.hpp"
#include "oocd/partition.hpp"
#include "oocd/train.hpp"

namespace oocd {

// Everything the data half of the pipeline produces, kept in memory.
struct PreparedData {
    Corpus corpus;
    Vocab vocab;
    KnowledgeSet knowledge;
    ConsensusPartition partition;
    LabelSource annotations;
    BudgetReport budget;
    std::vector<TokenizedTarget> stage1_targets;
    std::vector<TokenizedTarget> conflict_targets;
    std::vector<TokenizedPair> dpo_pairs;
    int dropped_unparseable = 0;
};

PreparedData prepare_data(const PipelineConfig& cfg);

struct ExperimentResult {
    AblationMode mode = AblationMode::Full;
    Metrics metrics;                       // final model on the test split
    std::optional<Metrics> stage1_metrics; // when stage 1 ran
    std::optional<double> heldout_margin;  // mean DPO margin on val conflicts
    BudgetReport budget;
    TrainReport stage1_report;
    TrainReport stage2_report;
};

// Runs one end-to-end experiment for an ablation mode; all modes share the
// same corpus, knowledge and seeds. checkpoint_dir may be empty (no files).
ExperimentResult run_ablation(AblationMode mode, const PipelineConfig& cfg,
                              const std::string& checkpoint_dir = "");

// Mean beta * ((lp_w - ref_w) - (lp_l - ref_l)) over held-out conflict pairs.
double mean_dpo_margin(AdapterStack& stack, const std::vector<TokenizedPair>& pairs,
                       double beta);

// Builds DPO pairs from a held-out split's teacher disagreements (gold labels
// must be present on the split).
std::vector<TokenizedPair> heldout_conflict_pairs(const PipelineConfig& cfg,
                                                  const std::vector<NewsItem>& split,
                                                  const Vocab& vocab);

struct SweepRow {
    double value = 0.0;
    Metrics metrics;
    std::string error;  // non-empty if this run failed
};

// param is one of lora_rank | dpo_alpha | beta. Rank sweeps retrain both
// stages; alpha/beta sweeps reuse the stage-1 checkpoint.
std::vector<SweepRow> sweep(const std::string& param, const std::vector<double>& values,
                            const PipelineConfig& base);

std::string sweep_csv(const std::string& param, const std::vector<SweepRow>& rows);
void write_sweep_chart(const std::string& path, const std::string& param,
                       const std::vector<SweepRow>& rows);

}  // namespace oocd
