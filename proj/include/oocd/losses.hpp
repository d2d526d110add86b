#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "oocd/model.hpp"
#include "oocd/partition.hpp"
#include "oocd/vocab.hpp"

namespace oocd {

// One supervised example in token form.
struct TokenizedTarget {
    std::string item_id;
    std::vector<int> image_tokens;
    std::vector<int> prompt_tokens;
    std::vector<int> target_tokens;  // verdict + rationale + eos
};

struct TokenizedPair {
    std::string item_id;
    std::vector<int> image_tokens;
    std::vector<int> prompt_tokens;
    std::vector<int> preferred_tokens;
    std::vector<int> rejected_tokens;
};

TokenizedTarget tokenize_target(const StageTarget& t, const Vocab& vocab);
TokenizedPair tokenize_pair(const DpoPair& p, const Vocab& vocab);

struct LossValue {
    double value = 0.0;
    // tensor name -> dL/dtensor, adapter (trainable) tensors only
    std::map<std::string, nn::Mat> gradients;
};

// Mean over the batch of the per-example mean token cross-entropy, restricted
// to target-text positions. Gradients flow to whatever adapter tensors are
// marked trainable in the stack.
LossValue ce_loss(const std::vector<TokenizedTarget>& batch, AdapterStack& stack,
                  bool with_grad = true);

// log pi(y|x): sum of target-token log-probabilities. No gradients.
double seq_logprob(AdapterStack& stack, const TokenizedTarget& example);

// Reference log-probs (preferred, rejected) for one pair, computed with the
// stage-2 adapter switched off (pi_ref). No gradients.
std::pair<double, double> reference_logprobs(AdapterStack& stack, const TokenizedPair& pair);

// -E[log sigmoid(beta * ((lp_w - ref_w) - (lp_l - ref_l)))] over the batch.
// `precomputed_ref` may carry cached (ref_w, ref_l) per pair; otherwise the
// reference is evaluated on the spot by deactivating the stage-2 adapter.
LossValue dpo_loss(const std::vector<TokenizedPair>& batch, AdapterStack& stack, double beta,
                   const std::vector<std::pair<double, double>>* precomputed_ref = nullptr,
                   bool with_grad = true);

// gamma * ce + alpha * dpo, values and gradients combined linearly.
LossValue total_loss(const LossValue& ce, const LossValue& dpo, double gamma, double alpha);

struct GradCheckEntry {
    std::string tensor;
    int row = 0, col = 0;
    double analytic = 0.0, numeric = 0.0, rel_error = 0.0;
};

struct GradCheckReport {
    int n_checked = 0;
    double max_rel_error = 0.0;
    double tolerance = 0.0;
    bool passed = false;
    std::vector<GradCheckEntry> worst;  // up to 5 entries, worst first
};

// Central-difference check of the analytic adapter gradients of an arbitrary
// loss. `loss_fn` must evaluate the loss (with gradients) at the current
// parameter values; `trainable` lists (gradient-map key, tensor) pairs to
// probe — the key carries the stage prefix, the same adapter tensor name can
// occur in both stages.
GradCheckReport finite_difference_check(
    const std::function<LossValue()>& loss_fn,
    std::vector<std::pair<std::string, nn::Parameter*>> trainable, int n_coords, double h,
    double tolerance, std::uint64_t seed = 0);

std::vector<nn::Parameter*> trainable_params(AdapterStack& stack);
// Same tensors keyed the way LossValue::gradients keys them ("stage1."/"stage2.").
std::vector<std::pair<std::string, nn::Parameter*>> labeled_trainable_params(
    AdapterStack& stack);

}  // namespace oocd
