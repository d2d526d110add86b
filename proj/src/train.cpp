#include "oocd/train.hpp"

#include <chrono>
#include <cmath>
#include <random>

#include <json.hpp>

#include "oocd/errors.hpp"

namespace oocd {

using nn::Mat;
using nn::Parameter;

void TrainConfig::validate() const {
    for (const StageHyperparams* s : {&stage1, &stage2}) {
        if (s->lr <= 0.0) throw ConfigError("learning rate must be positive");
        if (s->batch_size < 1 || s->epochs < 0) throw ConfigError("invalid batch/epochs");
        if (s->warmup_ratio < 0.0 || s->warmup_ratio >= 1.0) {
            throw ConfigError("warmup_ratio must be in [0,1)");
        }
        if (s->gamma < 0.0 || s->alpha < 0.0 || s->beta < 0.0) {
            throw ConfigError("loss weights must be nonnegative");
        }
    }
    if (lr_schedule != "linear" && lr_schedule != "constant") {
        throw ConfigError("lr_schedule must be linear or constant");
    }
}

double lr_at(int step, int total_steps, double base_lr, double warmup_ratio,
             const std::string& schedule) {
    if (total_steps <= 0) throw ConfigError("total_steps must be positive");
    if (step < 0 || step > total_steps) throw ConfigError("step out of range");
    const int warmup = static_cast<int>(std::ceil(warmup_ratio * total_steps));
    if (step <= warmup && warmup > 0) {
        return base_lr * static_cast<double>(step) / warmup;
    }
    if (schedule == "constant") return base_lr;
    return base_lr * static_cast<double>(total_steps - step) /
           static_cast<double>(total_steps - warmup);
}

AdamW::AdamW(std::vector<Parameter*> params, const TrainConfig& cfg)
    : params_(std::move(params)),
      beta1_(cfg.adam_beta1),
      beta2_(cfg.adam_beta2),
      eps_(cfg.adam_eps),
      weight_decay_(cfg.weight_decay) {
    for (auto* p : params_) {
        m_.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
        v_.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
    }
}

void AdamW::clip_global_norm(double max_norm) {
    if (max_norm <= 0.0) return;
    double sq = 0.0;
    for (auto* p : params_) {
        if (p->grad.size()) sq += p->grad.squaredNorm();
    }
    const double norm = std::sqrt(sq);
    if (norm > max_norm) {
        const double scale = max_norm / norm;
        for (auto* p : params_) {
            if (p->grad.size()) p->grad *= scale;
        }
    }
}

void AdamW::step(double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (size_t i = 0; i < params_.size(); ++i) {
        Parameter* p = params_[i];
        if (!p->grad.size()) continue;
        m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * p->grad;
        v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * p->grad.cwiseProduct(p->grad);
        const Mat mhat = m_[i] / bc1;
        const Mat vhat = v_[i] / bc2;
        if (weight_decay_ > 0.0) p->value -= lr * weight_decay_ * p->value;
        p->value.array() -= lr * mhat.array() / (vhat.array().sqrt() + eps_);
    }
}

std::string TrainReport::to_json() const {
    nlohmann::json j{{"total_steps", total_steps},
                     {"wall_seconds", wall_seconds},
                     {"seed", seed},
                     {"checkpoint", checkpoint_path},
                     {"notes", notes},
                     {"loss_trace", loss_trace}};
    if (!ce_trace.empty()) j["ce_trace"] = ce_trace;
    if (!dpo_trace.empty()) j["dpo_trace"] = dpo_trace;
    return j.dump(2);
}

std::string TrainReport::trace_csv() const {
    std::string out = "step,loss";
    const bool split = !ce_trace.empty();
    if (split) out += ",ce,dpo";
    out += '\n';
    for (size_t i = 0; i < loss_trace.size(); ++i) {
        out += std::to_string(i) + "," + std::to_string(loss_trace[i]);
        if (split) {
            out += "," + std::to_string(ce_trace[i]) + "," + std::to_string(dpo_trace[i]);
        }
        out += '\n';
    }
    return out;
}

namespace {

std::vector<size_t> shuffled_indices(size_t n, std::uint64_t seed) {
    std::vector<size_t> idx(n);
    for (size_t i = 0; i < n; ++i) idx[i] = i;
    std::mt19937_64 gen(seed);
    for (size_t i = n; i > 1; --i) {
        std::swap(idx[i - 1], idx[gen() % i]);
    }
    return idx;
}

void apply_gradients(AdapterStack& stack, const std::map<std::string, Mat>& grads) {
    for (auto* p : trainable_params(stack)) {
        for (const auto& [name, g] : grads) {
            if (name.ends_with(p->name) && name.size() > p->name.size() &&
                name[name.size() - p->name.size() - 1] == '.') {
                p->grad = g;
            }
        }
    }
}

}  // namespace

TrainReport train_stage1(AdapterStack& stack, const std::vector<TokenizedTarget>& targets,
                         const TrainConfig& config, const std::string& checkpoint_dir) {
    config.validate();
    if (targets.empty()) throw ConfigError("train_stage1: empty target list");
    const auto t0 = std::chrono::steady_clock::now();

    if (!stack.stage1) {
        LoraConfig lc;
        lc.rank = config.stage1.lora_rank;
        lc.lora_alpha = config.stage1.lora_alpha;
        lc.targets = config.lora_targets;
        stack.stage1 = init_adapter(stack.base.config, lc, config.seed ^ 0x5731ULL);
    }
    stack.stage1->active = true;
    stack.stage1->set_trainable(true);
    if (stack.stage2) stack.stage2->set_trainable(false);

    const StageHyperparams& hp = config.stage1;
    const int steps_per_epoch =
        static_cast<int>((targets.size() + hp.batch_size - 1) / hp.batch_size);
    const int total_steps = hp.epochs * steps_per_epoch;

    TrainReport report;
    report.seed = config.seed;
    report.total_steps = total_steps;

    AdamW opt(trainable_params(stack), config);
    std::vector<double> epoch_means;
    int step = 0;
    for (int epoch = 0; epoch < hp.epochs; ++epoch) {
        auto idx = shuffled_indices(targets.size(),
                                    config.seed * 0x9e3779b97f4a7c15ULL + epoch + 1);
        double epoch_sum = 0.0;
        for (int b = 0; b < steps_per_epoch; ++b) {
            std::vector<TokenizedTarget> batch;
            for (size_t i = static_cast<size_t>(b) * hp.batch_size;
                 i < std::min(targets.size(), (static_cast<size_t>(b) + 1) * hp.batch_size);
                 ++i) {
                batch.push_back(targets[idx[i]]);
            }
            LossValue lv = ce_loss(batch, stack);
            opt.clip_global_norm(config.grad_clip);
            opt.step(lr_at(step + 1, total_steps, hp.lr, hp.warmup_ratio, config.lr_schedule));
            ++step;
            report.loss_trace.push_back(lv.value);
            epoch_sum += lv.value;
        }
        epoch_means.push_back(epoch_sum / steps_per_epoch);
    }
    for (size_t e = 1; e < epoch_means.size(); ++e) {
        if (epoch_means[e] > epoch_means[e - 1]) {
            report.notes += "mean epoch loss increased at epoch " + std::to_string(e) + "; ";
        }
    }

    stack.stage1->set_trainable(false);
    if (!checkpoint_dir.empty()) {
        save_checkpoint(stack, checkpoint_dir);
        report.checkpoint_path = checkpoint_dir;
    }
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

TrainReport train_stage2(AdapterStack& stack, const std::vector<TokenizedPair>& pairs,
                         const std::vector<TokenizedTarget>& targets_conflict,
                         const TrainConfig& config, const std::string& checkpoint_dir) {
    config.validate();
    const auto t0 = std::chrono::steady_clock::now();
    TrainReport report;
    report.seed = config.seed;

    if (!stack.stage1) throw PipelineError("train_stage2 requires a trained stage-1 adapter");
    stack.stage1->active = true;
    stack.stage1->set_trainable(false);

    if (pairs.empty()) {
        report.notes = "stage 2 skipped: no conflict items";
        if (!checkpoint_dir.empty()) {
            save_checkpoint(stack, checkpoint_dir);
            report.checkpoint_path = checkpoint_dir;
        }
        return report;
    }
    if (pairs.size() != targets_conflict.size()) {
        throw PipelineError("stage 2 needs aligned CE targets and DPO pairs");
    }
    std::map<std::string, const TokenizedTarget*> target_by_id;
    for (const auto& t : targets_conflict) target_by_id[t.item_id] = &t;
    for (const auto& p : pairs) {
        if (!target_by_id.count(p.item_id)) {
            throw PipelineError("no CE target for conflict item " + p.item_id);
        }
    }

    if (!stack.stage2) {
        LoraConfig lc;
        lc.rank = config.stage2.lora_rank;
        lc.lora_alpha = config.stage2.lora_alpha;
        lc.targets = config.lora_targets;
        stack.stage2 = init_adapter(stack.base.config, lc, config.seed ^ 0x5732ULL);
    }
    stack.stage2->active = true;
    stack.stage2->set_trainable(true);

    // pi_ref is frozen for the whole stage; cache its per-pair log-probs.
    std::vector<std::pair<double, double>> ref;
    ref.reserve(pairs.size());
    for (const auto& p : pairs) ref.push_back(reference_logprobs(stack, p));

    const StageHyperparams& hp = config.stage2;
    const int steps_per_epoch =
        static_cast<int>((pairs.size() + hp.batch_size - 1) / hp.batch_size);
    const int total_steps = hp.epochs * steps_per_epoch;
    report.total_steps = total_steps;

    AdamW opt(trainable_params(stack), config);
    int step = 0;
    for (int epoch = 0; epoch < hp.epochs; ++epoch) {
        auto idx =
            shuffled_indices(pairs.size(), config.seed * 0xda942042e4dd58b5ULL + epoch + 1);
        for (int b = 0; b < steps_per_epoch; ++b) {
            std::vector<TokenizedPair> batch_pairs;
            std::vector<TokenizedTarget> batch_targets;
            std::vector<std::pair<double, double>> batch_ref;
            for (size_t i = static_cast<size_t>(b) * hp.batch_size;
                 i < std::min(pairs.size(), (static_cast<size_t>(b) + 1) * hp.batch_size);
                 ++i) {
                batch_pairs.push_back(pairs[idx[i]]);
                batch_targets.push_back(*target_by_id.at(pairs[idx[i]].item_id));
                batch_ref.push_back(ref[idx[i]]);
            }
            LossValue ce{};
            if (hp.gamma > 0.0) {
                ce = ce_loss(batch_targets, stack);
            }
            LossValue dpo{};
            if (hp.alpha > 0.0) {
                dpo = dpo_loss(batch_pairs, stack, hp.beta, &batch_ref);
            }
            LossValue tot = total_loss(ce, dpo, hp.gamma, hp.alpha);
            apply_gradients(stack, tot.gradients);
            opt.clip_global_norm(config.grad_clip);
            opt.step(lr_at(step + 1, total_steps, hp.lr, hp.warmup_ratio, config.lr_schedule));
            ++step;
            report.loss_trace.push_back(tot.value);
            report.ce_trace.push_back(ce.value);
            report.dpo_trace.push_back(dpo.value);
        }
    }

    stack.stage2->set_trainable(false);
    if (!checkpoint_dir.empty()) {
        save_checkpoint(stack, checkpoint_dir);
        report.checkpoint_path = checkpoint_dir;
    }
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

}  // namespace oocd
