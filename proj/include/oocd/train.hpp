#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "oocd/losses.hpp"
#include "oocd/model.hpp"

namespace oocd {

struct StageHyperparams {
    double lr = 2e-5;
    int batch_size = 16;
    int epochs = 3;
    double warmup_ratio = 0.1;
    int lora_rank = 128;
    double lora_alpha = 256.0;
    // Stage-2 only:
    double gamma = 0.3;  // CE weight
    double alpha = 0.5;  // DPO weight
    double beta = 0.1;   // DPO sensitivity
};

struct TrainConfig {
    StageHyperparams stage1;      // paper defaults: lr 2e-5, B=16, 3 epochs
    StageHyperparams stage2;      // paper defaults: lr 5e-7, B=8, 1 epoch
    std::uint64_t seed = 0;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double weight_decay = 0.0;
    double grad_clip = 1.0;  // global norm; <= 0 disables
    std::string lr_schedule = "linear";  // or "constant"
    std::vector<LoraTarget> lora_targets = {LoraTarget::AttnQ, LoraTarget::AttnV};

    TrainConfig() {
        stage2.lr = 5e-7;
        stage2.batch_size = 8;
        stage2.epochs = 1;
    }
    void validate() const;
};

struct TrainReport {
    std::vector<double> loss_trace;       // one entry per optimizer step
    std::vector<double> ce_trace;         // stage-2: CE component per step
    std::vector<double> dpo_trace;        // stage-2: DPO component per step
    std::string checkpoint_path;
    double wall_seconds = 0.0;
    std::uint64_t seed = 0;
    int total_steps = 0;
    std::string notes;

    std::string to_json() const;
    std::string trace_csv() const;
};

// Linear warm-up over ceil(warmup_ratio*total) steps, then linear decay to 0
// ("constant" schedule holds base_lr after warm-up). `step` counts completed
// steps, i.e. the factor used for optimizer step k is lr_at(k+1, ...).
double lr_at(int step, int total_steps, double base_lr, double warmup_ratio,
             const std::string& schedule = "linear");

// Decoupled-weight-decay Adam over the trainable adapter tensors.
class AdamW {
public:
    AdamW(std::vector<nn::Parameter*> params, const TrainConfig& cfg);
    void step(double lr);  // consumes p->grad
    void clip_global_norm(double max_norm);

private:
    std::vector<nn::Parameter*> params_;
    std::vector<nn::Mat> m_, v_;
    double beta1_, beta2_, eps_, weight_decay_;
    long t_ = 0;
};

// Stage 1: trains a fresh stage-1 adapter on all items under token CE.
TrainReport train_stage1(AdapterStack& stack, const std::vector<TokenizedTarget>& targets,
                         const TrainConfig& config, const std::string& checkpoint_dir);

// Stage 2: freezes phi, trains a fresh stage-2 adapter on conflict items under
// gamma*CE + alpha*DPO with pi_ref = the stage-1 stack (stage-2 adapter off).
// Empty conflict set is a logged no-op.
TrainReport train_stage2(AdapterStack& stack, const std::vector<TokenizedPair>& pairs,
                         const std::vector<TokenizedTarget>& targets_conflict,
                         const TrainConfig& config, const std::string& checkpoint_dir);

}  // namespace oocd
