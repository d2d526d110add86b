#include "oocd/losses.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "oocd/errors.hpp"

namespace oocd {

using nn::Mat;
using nn::NodePtr;
using nn::Parameter;

TokenizedTarget tokenize_target(const StageTarget& t, const Vocab& vocab) {
    TokenizedTarget out;
    out.item_id = t.item_id;
    out.image_tokens = t.image_tokens;
    out.prompt_tokens = vocab.tokenize(t.prompt_text);
    out.target_tokens = vocab.tokenize(t.target_text);
    out.target_tokens.push_back(Vocab::kEos);
    return out;
}

TokenizedPair tokenize_pair(const DpoPair& p, const Vocab& vocab) {
    TokenizedPair out;
    out.item_id = p.item_id;
    out.image_tokens = p.image_tokens;
    out.prompt_tokens = vocab.tokenize(p.prompt_text);
    out.preferred_tokens = vocab.tokenize(p.preferred);
    out.preferred_tokens.push_back(Vocab::kEos);
    out.rejected_tokens = vocab.tokenize(p.rejected);
    out.rejected_tokens.push_back(Vocab::kEos);
    return out;
}

std::vector<Parameter*> trainable_params(AdapterStack& stack) {
    std::vector<Parameter*> out;
    for (auto* a : {stack.stage1 ? &*stack.stage1 : nullptr,
                    stack.stage2 ? &*stack.stage2 : nullptr}) {
        if (!a) continue;
        for (auto& p : a->params) {
            if (p.trainable) out.push_back(&p);
        }
    }
    return out;
}

namespace {

void zero_grads(AdapterStack& stack) {
    for (auto* p : trainable_params(stack)) p->zero_grad();
}

std::map<std::string, Mat> collect_grads(AdapterStack& stack) {
    std::map<std::string, Mat> out;
    int idx = 0;
    for (auto* a : {stack.stage1 ? &*stack.stage1 : nullptr,
                    stack.stage2 ? &*stack.stage2 : nullptr}) {
        ++idx;
        if (!a) continue;
        const std::string prefix = "stage" + std::to_string(idx) + ".";
        for (auto& p : a->params) {
            if (p.trainable) out.emplace(prefix + p.name, p.grad);
        }
    }
    return out;
}

// Scalar node: sum of target-token log-probs of one example.
struct SeqLogprobGraph {
    ForwardPass fp;
    NodePtr root;
};

SeqLogprobGraph build_seq_logprob(AdapterStack& stack, const std::vector<int>& image_tokens,
                                  const std::vector<int>& prompt_tokens,
                                  const std::vector<int>& target_tokens) {
    if (prompt_tokens.empty()) throw ConfigError("empty prompt");
    if (target_tokens.empty()) throw ConfigError("degenerate batch: no target tokens");
    std::vector<int> text = prompt_tokens;
    text.insert(text.end(), target_tokens.begin(), target_tokens.end());
    const int prefix = static_cast<int>(image_tokens.size());
    const int plen = static_cast<int>(prompt_tokens.size());
    const int tlen = static_cast<int>(target_tokens.size());
    // Row prefix+plen-1 predicts the first target token.
    SeqLogprobGraph sg;
    sg.fp = build_forward(stack, image_tokens, text, prefix + plen - 1, tlen);
    sg.root = sg.fp.graph->sum(sg.fp.graph->gather_logprobs(sg.fp.logits, target_tokens));
    return sg;
}

}  // namespace

LossValue ce_loss(const std::vector<TokenizedTarget>& batch, AdapterStack& stack,
                  bool with_grad) {
    if (batch.empty()) throw ConfigError("degenerate batch: ce_loss on empty batch");
    if (with_grad) zero_grads(stack);
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    LossValue lv;
    for (const auto& ex : batch) {
        SeqLogprobGraph sg =
            build_seq_logprob(stack, ex.image_tokens, ex.prompt_tokens, ex.target_tokens);
        const double n = static_cast<double>(ex.target_tokens.size());
        lv.value += -sg.root->value(0, 0) / n * inv_b;
        if (with_grad) sg.fp.graph->backward(sg.root, -inv_b / n);
    }
    if (with_grad) lv.gradients = collect_grads(stack);
    return lv;
}

double seq_logprob(AdapterStack& stack, const TokenizedTarget& example) {
    SeqLogprobGraph sg = build_seq_logprob(stack, example.image_tokens, example.prompt_tokens,
                                           example.target_tokens);
    return sg.root->value(0, 0);
}

std::pair<double, double> reference_logprobs(AdapterStack& stack, const TokenizedPair& pair) {
    const bool had_stage2 = stack.stage2.has_value() && stack.stage2->active;
    if (had_stage2) stack.stage2->active = false;
    // Reference evaluation never tracks gradients.
    std::vector<bool> saved;
    auto params = trainable_params(stack);
    for (auto* p : params) {
        saved.push_back(p->trainable);
        p->trainable = false;
    }
    TokenizedTarget w{pair.item_id, pair.image_tokens, pair.prompt_tokens,
                      pair.preferred_tokens};
    TokenizedTarget l{pair.item_id, pair.image_tokens, pair.prompt_tokens,
                      pair.rejected_tokens};
    const double ref_w = seq_logprob(stack, w);
    const double ref_l = seq_logprob(stack, l);
    for (size_t i = 0; i < params.size(); ++i) params[i]->trainable = saved[i];
    if (had_stage2) stack.stage2->active = true;
    return {ref_w, ref_l};
}

LossValue dpo_loss(const std::vector<TokenizedPair>& batch, AdapterStack& stack, double beta,
                   const std::vector<std::pair<double, double>>* precomputed_ref,
                   bool with_grad) {
    if (batch.empty()) throw ConfigError("degenerate batch: dpo_loss on empty batch");
    if (beta < 0.0) throw ConfigError("beta must be >= 0");
    if (precomputed_ref && precomputed_ref->size() != batch.size()) {
        throw ConfigError("precomputed reference log-probs do not match the batch");
    }
    if (with_grad) zero_grads(stack);
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    LossValue lv;
    for (size_t i = 0; i < batch.size(); ++i) {
        const auto& pair = batch[i];
        if (pair.preferred_tokens == pair.rejected_tokens) {
            throw ConfigError("invalid pair for item " + pair.item_id +
                              ": preferred and rejected sequences are identical");
        }
        const auto [ref_w, ref_l] =
            precomputed_ref ? (*precomputed_ref)[i] : reference_logprobs(stack, pair);

        SeqLogprobGraph gw = build_seq_logprob(stack, pair.image_tokens, pair.prompt_tokens,
                                               pair.preferred_tokens);
        SeqLogprobGraph gl = build_seq_logprob(stack, pair.image_tokens, pair.prompt_tokens,
                                               pair.rejected_tokens);
        const double margin =
            beta * ((gw.root->value(0, 0) - ref_w) - (gl.root->value(0, 0) - ref_l));
        // -log sigmoid(margin), stable on both tails
        const double loss_i =
            margin >= 0.0 ? std::log1p(std::exp(-margin)) : -margin + std::log1p(std::exp(margin));
        lv.value += loss_i * inv_b;
        if (with_grad) {
            // d(-log sigma(m))/dm = -sigma(-m)
            const double sig_neg = margin >= 0.0 ? std::exp(-margin) / (1.0 + std::exp(-margin))
                                                 : 1.0 / (1.0 + std::exp(margin));
            const double dm = -sig_neg * inv_b;
            gw.fp.graph->backward(gw.root, dm * beta);
            gl.fp.graph->backward(gl.root, -dm * beta);
        }
    }
    if (with_grad) lv.gradients = collect_grads(stack);
    return lv;
}

LossValue total_loss(const LossValue& ce, const LossValue& dpo, double gamma, double alpha) {
    if (gamma < 0.0 || alpha < 0.0) throw ConfigError("loss weights must be nonnegative");
    LossValue lv;
    lv.value = gamma * ce.value + alpha * dpo.value;
    for (const auto& [name, g] : ce.gradients) lv.gradients[name] = gamma * g;
    for (const auto& [name, g] : dpo.gradients) {
        auto it = lv.gradients.find(name);
        if (it == lv.gradients.end()) {
            lv.gradients[name] = alpha * g;
        } else {
            it->second += alpha * g;
        }
    }
    return lv;
}

std::vector<std::pair<std::string, Parameter*>> labeled_trainable_params(AdapterStack& stack) {
    std::vector<std::pair<std::string, Parameter*>> out;
    int idx = 0;
    for (auto* a : {stack.stage1 ? &*stack.stage1 : nullptr,
                    stack.stage2 ? &*stack.stage2 : nullptr}) {
        ++idx;
        if (!a) continue;
        const std::string prefix = "stage" + std::to_string(idx) + ".";
        for (auto& p : a->params) {
            if (p.trainable) out.emplace_back(prefix + p.name, &p);
        }
    }
    return out;
}

GradCheckReport finite_difference_check(
    const std::function<LossValue()>& loss_fn,
    std::vector<std::pair<std::string, Parameter*>> trainable, int n_coords, double h,
    double tolerance, std::uint64_t seed) {
    if (trainable.empty()) throw ConfigError("gradient check needs trainable tensors");
    LossValue analytic = loss_fn();

    std::mt19937_64 gen(seed ^ 0x67726164636865ULL);
    GradCheckReport rep;
    rep.tolerance = tolerance;
    for (int k = 0; k < n_coords; ++k) {
        const auto& [key, p] = trainable[gen() % trainable.size()];
        const int r = static_cast<int>(gen() % static_cast<std::uint64_t>(p->value.rows()));
        const int c = static_cast<int>(gen() % static_cast<std::uint64_t>(p->value.cols()));
        const double orig = p->value(r, c);
        p->value(r, c) = orig + h;
        const double f_plus = loss_fn().value;
        p->value(r, c) = orig - h;
        const double f_minus = loss_fn().value;
        p->value(r, c) = orig;
        const double numeric = (f_plus - f_minus) / (2.0 * h);

        const auto it = analytic.gradients.find(key);
        const double a = it == analytic.gradients.end() ? 0.0 : it->second(r, c);
        const double rel =
            std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
        GradCheckEntry e{key, r, c, a, numeric, rel};
        rep.worst.push_back(e);
        std::sort(rep.worst.begin(), rep.worst.end(),
                  [](const auto& x, const auto& y) { return x.rel_error > y.rel_error; });
        if (rep.worst.size() > 5) rep.worst.resize(5);
        rep.max_rel_error = std::max(rep.max_rel_error, rel);
        ++rep.n_checked;
    }
    rep.passed = rep.max_rel_error < tolerance;
    return rep;
}

}  // namespace oocd
