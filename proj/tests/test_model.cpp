#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <filesystem>
#include <random>

#include "doctest.h"
#include "oocd/errors.hpp"
#include "oocd/model.hpp"

using namespace oocd;

namespace {

TinyLmConfig tiny_config() {
    TinyLmConfig c;
    c.text_vocab_size = 96;
    c.visual_vocab_size = 16;
    c.d_model = 32;
    c.n_layers = 2;
    c.n_heads = 4;
    c.max_context = 64;
    c.seed = 21;
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

void randomize_adapter(LoraAdapterSet& adapter, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> dist(0.0, 0.05);
    for (nn::Parameter& p : adapter.params) {
        for (int i = 0; i < p.value.rows(); ++i)
            for (int j = 0; j < p.value.cols(); ++j) p.value(i, j) = dist(gen);
    }
}

const std::vector<int> kImage = {1, 3, 5};
const std::vector<int> kText = {2, 7, 40, 41, 9, 3};

}  // namespace

TEST_CASE("model init is deterministic and shaped by the config") {
    TinyLm a = TinyLm::init(tiny_config());
    TinyLm b = TinyLm::init(tiny_config());
    CHECK(params_hash(a.params) == params_hash(b.params));
    REQUIRE(a.find("text_emb") != nullptr);
    CHECK(a.find("text_emb")->value.rows() == 96);
    CHECK(a.find("head.W")->value.rows() == 96);
    CHECK(a.find("vis_emb")->value.rows() == 16);
    CHECK(a.find("layer1.attn_q.W") != nullptr);
    CHECK(a.find("layer2.attn_q.W") == nullptr);
    for (const nn::Parameter& p : a.params) CHECK_FALSE(p.trainable);

    TinyLmConfig bad = tiny_config();
    bad.d_model = 30;  // not divisible by n_heads
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("a fresh adapter is an exact no-op") {
    AdapterStack plain{TinyLm::init(tiny_config()), std::nullopt, std::nullopt};
    AdapterStack stacked{TinyLm::init(tiny_config()), std::nullopt, std::nullopt};
    stacked.stage1 = init_adapter(tiny_config(), all_targets(4), 1);
    stacked.stage2 = init_adapter(tiny_config(), all_targets(4), 2);

    nn::Mat base = forward_logits(plain, kImage, kText);
    nn::Mat with = forward_logits(stacked, kImage, kText);
    REQUIRE(base.rows() == with.rows());
    CHECK((base - with).cwiseAbs().maxCoeff() == 0.0);  // bit-identical
}

TEST_CASE("deactivated adapters drop out of the forward pass") {
    AdapterStack stack{TinyLm::init(tiny_config()), std::nullopt, std::nullopt};
    stack.stage1 = init_adapter(tiny_config(), all_targets(4), 1);
    randomize_adapter(*stack.stage1, 77);
    nn::Mat on = forward_logits(stack, kImage, kText);
    stack.stage1->active = false;
    nn::Mat off = forward_logits(stack, kImage, kText);
    stack.stage1->active = true;
    AdapterStack plain{TinyLm::init(tiny_config()), std::nullopt, std::nullopt};
    nn::Mat base = forward_logits(plain, kImage, kText);
    CHECK((off - base).cwiseAbs().maxCoeff() == 0.0);
    CHECK((on - base).cwiseAbs().maxCoeff() > 1e-8);
}

TEST_CASE("causal mask blocks information from future positions") {
    AdapterStack stack{TinyLm::init(tiny_config()), std::nullopt, std::nullopt};
    std::vector<int> text = kText;
    nn::Mat before = forward_logits(stack, kImage, text);
    text.back() = 55;
    nn::Mat after = forward_logits(stack, kImage, text);
    // Returned rows cover the positions before each text token plus the final
    // one; only the row at the edited token itself may change.
    int last = static_cast<int>(before.rows()) - 1;
    for (int r = 0; r < last; ++r) {
        CHECK((before.row(r) - after.row(r)).cwiseAbs().maxCoeff() == 0.0);
    }
    CHECK((before.row(last) - after.row(last)).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("the visual prefix changes text logits") {
    AdapterStack stack{TinyLm::init(tiny_config()), std::nullopt, std::nullopt};
    nn::Mat a = forward_logits(stack, {1, 2}, kText);
    nn::Mat b = forward_logits(stack, {3, 4}, kText);
    CHECK((a - b).cwiseAbs().maxCoeff() > 1e-8);
}

TEST_CASE("greedy_decode agrees with stepwise argmax over full forward passes") {
    AdapterStack stack{TinyLm::init(tiny_config()), std::nullopt, std::nullopt};
    stack.stage1 = init_adapter(tiny_config(), all_targets(4), 1);
    randomize_adapter(*stack.stage1, 5);

    DecodeResult dec = greedy_decode(stack, kImage, kText, 8);
    REQUIRE_FALSE(dec.tokens.empty());
    std::vector<int> ctx = kText;
    for (int tok : dec.tokens) {
        nn::Mat logits = forward_logits(stack, kImage, ctx);
        int argmax = 0;
        logits.row(logits.rows() - 1).maxCoeff(&argmax);
        CHECK(tok == argmax);
        ctx.push_back(tok);
        if (tok == 0) break;  // eos
    }
    DecodeResult again = greedy_decode(stack, kImage, kText, 8);
    CHECK(dec.tokens == again.tokens);
    CHECK(dec.truncated == again.truncated);
}

TEST_CASE("greedy_decode rejects out-of-range tokens and respects max_context") {
    AdapterStack stack{TinyLm::init(tiny_config()), std::nullopt, std::nullopt};
    CHECK_THROWS_AS(greedy_decode(stack, kImage, {2, 999}, 4), ConfigError);
    CHECK_THROWS_AS(greedy_decode(stack, {99}, kText, 4), ConfigError);

    std::vector<int> long_prompt(60, 2);  // prefix + prompt close to max_context
    DecodeResult dec = greedy_decode(stack, kImage, long_prompt, 32);
    CHECK(dec.truncated);
    CHECK(static_cast<int>(kImage.size() + long_prompt.size() + dec.tokens.size()) <=
          tiny_config().max_context);
}

TEST_CASE("checkpoints round-trip every tensor exactly") {
    AdapterStack stack{TinyLm::init(tiny_config()), std::nullopt, std::nullopt};
    stack.stage1 = init_adapter(tiny_config(), all_targets(4), 1);
    stack.stage2 = init_adapter(tiny_config(), all_targets(2), 2);
    randomize_adapter(*stack.stage1, 31);
    randomize_adapter(*stack.stage2, 32);

    auto dir = std::filesystem::temp_directory_path() / "oocd_ckpt_test";
    std::filesystem::remove_all(dir);
    save_checkpoint(stack, dir.string());
    AdapterStack back = load_checkpoint(dir.string());

    CHECK(params_hash(back.base.params) == params_hash(stack.base.params));
    REQUIRE(back.stage1.has_value());
    REQUIRE(back.stage2.has_value());
    CHECK(params_hash(back.stage1->params) == params_hash(stack.stage1->params));
    CHECK(params_hash(back.stage2->params) == params_hash(stack.stage2->params));
    CHECK(back.stage1->config.rank == 4);
    CHECK(back.stage2->config.rank == 2);
    nn::Mat a = forward_logits(stack, kImage, kText);
    nn::Mat b = forward_logits(back, kImage, kText);
    CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
    std::filesystem::remove_all(dir);
}

TEST_CASE("load_adapter_into checks shapes") {
    AdapterStack stack{TinyLm::init(tiny_config()), std::nullopt, std::nullopt};
    stack.stage1 = init_adapter(tiny_config(), all_targets(4), 1);
    randomize_adapter(*stack.stage1, 8);
    auto dir = std::filesystem::temp_directory_path() / "oocd_ckpt_shape";
    std::filesystem::remove_all(dir);
    save_checkpoint(stack, dir.string());

    AdapterStack other{TinyLm::init(tiny_config()), std::nullopt, std::nullopt};
    other.stage1 = init_adapter(tiny_config(), all_targets(8), 99);  // replaced wholesale
    load_adapter_into(other, dir.string(), 1);
    CHECK(params_hash(other.stage1->params) == params_hash(stack.stage1->params));
    CHECK(other.stage1->config.rank == 4);

    // A checkpoint whose adapter shapes do not fit the destination base.
    TinyLmConfig widecfg = tiny_config();
    widecfg.d_model = 64;
    AdapterStack wrong{TinyLm::init(widecfg), std::nullopt, std::nullopt};
    CHECK_THROWS_AS(load_adapter_into(wrong, dir.string(), 1), CheckpointError);
    CHECK_THROWS_AS(load_adapter_into(other, dir.string(), 2), CheckpointError);
    std::filesystem::remove_all(dir);
}

TEST_CASE("params_hash reacts to any single-bit change") {
    TinyLm model = TinyLm::init(tiny_config());
    std::uint64_t h0 = params_hash(model.params);
    double& v = model.params[0].value(0, 0);
    v = std::nextafter(v, 1e9);
    CHECK(params_hash(model.params) != h0);
}
