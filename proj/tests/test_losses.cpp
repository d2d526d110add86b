#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <random>

#include "doctest.h"
#include "oocd/errors.hpp"
#include "oocd/losses.hpp"
#include "oracle.hpp"

using namespace oocd;

namespace {

TinyLmConfig tiny_config() {
    TinyLmConfig c;
    c.text_vocab_size = 80;
    c.visual_vocab_size = 12;
    c.d_model = 32;
    c.n_layers = 2;
    c.n_heads = 4;
    c.max_context = 48;
    c.seed = 13;
    return c;
}

LoraConfig all_targets(int rank) {
    LoraConfig c;
    c.rank = rank;
    c.lora_alpha = 2.0 * rank;
    c.targets = {LoraTarget::AttnQ, LoraTarget::AttnK, LoraTarget::AttnV,
                 LoraTarget::AttnO, LoraTarget::MlpIn, LoraTarget::MlpOut};
    return c;
}

AdapterStack make_stack(bool randomize, std::uint64_t seed) {
    AdapterStack stack{TinyLm::init(tiny_config()), std::nullopt, std::nullopt};
    stack.stage1 = init_adapter(tiny_config(), all_targets(4), seed);
    stack.stage2 = init_adapter(tiny_config(), all_targets(4), seed + 1);
    if (randomize) {
        std::mt19937_64 gen(seed * 77 + 5);
        std::normal_distribution<double> dist(0.0, 0.05);
        for (auto* adapter : {&*stack.stage1, &*stack.stage2})
            for (nn::Parameter& p : adapter->params)
                for (int i = 0; i < p.value.rows(); ++i)
                    for (int j = 0; j < p.value.cols(); ++j) p.value(i, j) = dist(gen);
    }
    return stack;
}

TokenizedTarget random_target(std::mt19937_64& gen, const char* id) {
    auto tok = [&](int lo, int hi) { return lo + static_cast<int>(gen() % (hi - lo)); };
    TokenizedTarget t;
    t.item_id = id;
    for (int i = 0; i < 3; ++i) t.image_tokens.push_back(tok(0, 12));
    int plen = 4 + static_cast<int>(gen() % 6);
    for (int i = 0; i < plen; ++i) t.prompt_tokens.push_back(tok(2, 80));
    int tlen = 2 + static_cast<int>(gen() % 5);
    for (int i = 0; i < tlen; ++i) t.target_tokens.push_back(tok(2, 80));
    t.target_tokens.push_back(Vocab::kEos);
    return t;
}

TokenizedPair random_pair(std::mt19937_64& gen, const char* id) {
    TokenizedTarget a = random_target(gen, id);
    TokenizedTarget b = random_target(gen, id);
    TokenizedPair p;
    p.item_id = id;
    p.image_tokens = a.image_tokens;
    p.prompt_tokens = a.prompt_tokens;
    p.preferred_tokens = a.target_tokens;
    p.rejected_tokens = b.target_tokens;
    return p;
}

}  // namespace

TEST_CASE("seq_logprob matches the scalar oracle") {
    AdapterStack stack = make_stack(true, 2);
    std::mt19937_64 gen(9);
    for (int i = 0; i < 25; ++i) {
        TokenizedTarget t = random_target(gen, "x");
        double got = seq_logprob(stack, t);
        double want = oracle::seq_logprob(stack, t);
        CHECK(std::abs(got - want) < 1e-10);
        CHECK(got < 0.0);
    }
}

TEST_CASE("ce_loss matches the scalar oracle and the seq_logprob identity") {
    AdapterStack stack = make_stack(true, 3);
    std::mt19937_64 gen(11);
    for (int b = 0; b < 10; ++b) {
        std::vector<TokenizedTarget> batch;
        for (int i = 0; i < 4; ++i) batch.push_back(random_target(gen, "x"));
        LossValue ce = ce_loss(batch, stack, /*with_grad=*/false);
        CHECK(std::abs(ce.value - oracle::ce(stack, batch)) < 1e-10);

        // For a single example, -seq_logprob / n_tokens equals the CE.
        LossValue one = ce_loss({batch[0]}, stack, false);
        double identity =
            -seq_logprob(stack, batch[0]) / static_cast<double>(batch[0].target_tokens.size());
        CHECK(std::abs(one.value - identity) < 1e-12);
    }
}

TEST_CASE("ce_loss rejects an empty batch") {
    AdapterStack stack = make_stack(false, 1);
    CHECK_THROWS_AS(ce_loss({}, stack), ConfigError);
}

TEST_CASE("dpo_loss is exactly ln 2 when policy equals reference") {
    AdapterStack stack = make_stack(false, 4);  // fresh zero-B adapters: no-op
    std::mt19937_64 gen(21);
    std::vector<TokenizedPair> batch;
    for (int i = 0; i < 4; ++i) batch.push_back(random_pair(gen, "p"));

    // Zero stage-2 delta: pi == pi_ref, the margin vanishes for every pair.
    LossValue l = dpo_loss(batch, stack, 0.1);
    CHECK(std::abs(l.value - std::log(2.0)) < 1e-9);

    // beta = 0 kills the margin regardless of the adapter values.
    AdapterStack moved = make_stack(true, 5);
    LossValue l0 = dpo_loss(batch, moved, 0.0);
    CHECK(std::abs(l0.value - std::log(2.0)) < 1e-9);
}

TEST_CASE("dpo_loss with precomputed references matches on-the-fly references") {
    AdapterStack stack = make_stack(true, 6);
    std::mt19937_64 gen(31);
    std::vector<TokenizedPair> batch;
    for (int i = 0; i < 3; ++i) batch.push_back(random_pair(gen, "p"));
    std::vector<std::pair<double, double>> refs;
    for (const auto& p : batch) refs.push_back(reference_logprobs(stack, p));
    LossValue onfly = dpo_loss(batch, stack, 0.2, nullptr, false);
    LossValue cached = dpo_loss(batch, stack, 0.2, &refs, false);
    CHECK(std::abs(onfly.value - cached.value) < 1e-12);
}

TEST_CASE("dpo_loss drops when the policy favors the preferred sequence") {
    // Reference from the no-op stack; then nudge stage-2 and check that the
    // loss moves off ln 2 in the direction implied by the achieved margin.
    AdapterStack stack = make_stack(false, 7);
    std::mt19937_64 gen(41);
    std::vector<TokenizedPair> batch = {random_pair(gen, "p0"), random_pair(gen, "p1")};
    std::vector<std::pair<double, double>> refs;
    for (const auto& p : batch) refs.push_back(reference_logprobs(stack, p));

    std::normal_distribution<double> dist(0.0, 0.05);
    for (nn::Parameter& p : stack.stage2->params)
        for (int i = 0; i < p.value.rows(); ++i)
            for (int j = 0; j < p.value.cols(); ++j) p.value(i, j) = dist(gen);

    const double beta = 0.5;
    double margin = 0.0;
    for (size_t i = 0; i < batch.size(); ++i) {
        TokenizedTarget w{"", batch[i].image_tokens, batch[i].prompt_tokens,
                          batch[i].preferred_tokens};
        TokenizedTarget l{"", batch[i].image_tokens, batch[i].prompt_tokens,
                          batch[i].rejected_tokens};
        margin += beta * ((seq_logprob(stack, w) - refs[i].first) -
                          (seq_logprob(stack, l) - refs[i].second));
    }
    LossValue loss = dpo_loss(batch, stack, beta, &refs, false);
    if (margin > 0)
        CHECK(loss.value < std::log(2.0));
    else
        CHECK(loss.value > std::log(2.0));
}

TEST_CASE("total_loss combines values and gradients linearly") {
    AdapterStack stack = make_stack(true, 8);
    stack.stage1->set_trainable(true);
    stack.stage2->set_trainable(true);
    std::mt19937_64 gen(51);
    std::vector<TokenizedTarget> batch = {random_target(gen, "a"), random_target(gen, "b")};
    std::vector<TokenizedPair> pairs = {random_pair(gen, "p")};

    LossValue ce = ce_loss(batch, stack);
    LossValue dpo = dpo_loss(pairs, stack, 0.1);
    LossValue tot = total_loss(ce, dpo, 0.3, 0.5);
    CHECK(tot.value == doctest::Approx(0.3 * ce.value + 0.5 * dpo.value).epsilon(1e-12));
    for (const auto& [name, grad] : tot.gradients) {
        nn::Mat expect = nn::Mat::Zero(grad.rows(), grad.cols());
        if (auto it = ce.gradients.find(name); it != ce.gradients.end())
            expect += 0.3 * it->second;
        if (auto it = dpo.gradients.find(name); it != dpo.gradients.end())
            expect += 0.5 * it->second;
        CHECK((grad - expect).cwiseAbs().maxCoeff() < 1e-14);
    }
}

TEST_CASE("analytic gradients pass a finite-difference check on a small stack") {
    AdapterStack stack = make_stack(true, 9);
    stack.stage1->set_trainable(true);
    stack.stage2->set_trainable(true);
    std::mt19937_64 gen(61);
    std::vector<TokenizedTarget> batch = {random_target(gen, "a"), random_target(gen, "b")};
    std::vector<TokenizedPair> pairs = {random_pair(gen, "p0"), random_pair(gen, "p1")};
    std::vector<std::pair<double, double>> refs;
    for (const auto& p : pairs) refs.push_back(reference_logprobs(stack, p));

    auto loss_fn = [&]() {
        LossValue ce = ce_loss(batch, stack);
        LossValue dpo = dpo_loss(pairs, stack, 0.1, &refs);
        return total_loss(ce, dpo, 0.3, 0.5);
    };
    GradCheckReport rep =
        finite_difference_check(loss_fn, labeled_trainable_params(stack), 30, 1e-5, 1e-5, 3);
    CHECK(rep.passed);
    CHECK(rep.n_checked == 30);
    CHECK(rep.max_rel_error < 1e-5);
}

TEST_CASE("gradients only flow to trainable adapters") {
    AdapterStack stack = make_stack(true, 10);
    stack.stage2->set_trainable(true);  // stage1 stays frozen
    std::mt19937_64 gen(71);
    std::vector<TokenizedTarget> batch = {random_target(gen, "a")};
    LossValue ce = ce_loss(batch, stack);
    CHECK_FALSE(ce.gradients.empty());
    for (const auto& [name, grad] : ce.gradients) {
        CHECK(name.rfind("stage2.", 0) == 0);
        CHECK(grad.cwiseAbs().maxCoeff() > 0.0);
    }
}

TEST_CASE("tokenize_target appends eos and keeps the prompt intact") {
    Vocab vocab = Vocab::build(128);
    StageTarget st;
    st.item_id = "it";
    st.image_tokens = {1, 2};
    st.prompt_text = "does the image match";
    st.target_text = "yes, the image is rightly used.";
    TokenizedTarget t = tokenize_target(st, vocab);
    CHECK(t.prompt_tokens == vocab.tokenize(st.prompt_text));
    REQUIRE_FALSE(t.target_tokens.empty());
    CHECK(t.target_tokens.back() == Vocab::kEos);
    std::vector<int> body(t.target_tokens.begin(), t.target_tokens.end() - 1);
    CHECK(body == vocab.tokenize(st.target_text));
}
