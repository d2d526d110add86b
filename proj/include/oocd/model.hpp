#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "oocd/graph.hpp"

namespace oocd {

struct TinyLmConfig {
    int text_vocab_size = 512;
    int visual_vocab_size = 64;
    int d_model = 64;
    int n_layers = 2;
    int n_heads = 4;
    int max_context = 256;
    std::uint64_t seed = 0;

    int head_dim() const { return d_model / n_heads; }
    int ffn_dim() const { return 4 * d_model; }
    void validate() const;
};

// Projections a LoRA adapter may wrap.
enum class LoraTarget { AttnQ, AttnK, AttnV, AttnO, MlpIn, MlpOut };
LoraTarget lora_target_from_string(const std::string& name);
std::string to_string(LoraTarget t);

struct LoraConfig {
    int rank = 128;
    double lora_alpha = 256.0;
    std::vector<LoraTarget> targets = {LoraTarget::AttnQ, LoraTarget::AttnV};

    double scaling() const { return lora_alpha / rank; }
};

// One A/B factor pair per wrapped projection per layer. A starts small-random,
// B starts zero, so a fresh adapter is an exact no-op.
struct LoraAdapterSet {
    LoraConfig config;
    std::vector<nn::Parameter> params;  // names "layer<i>.<target>.{A,B}"
    bool active = true;

    void set_trainable(bool t);
    nn::Parameter* find(const std::string& name);
    const nn::Parameter* find(const std::string& name) const;
};

// Frozen base weights (theta).
struct TinyLm {
    TinyLmConfig config;
    std::vector<nn::Parameter> params;

    static TinyLm init(const TinyLmConfig& config);
    nn::Parameter* find(const std::string& name);
    const nn::Parameter* find(const std::string& name) const;
};

LoraAdapterSet init_adapter(const TinyLmConfig& model_config, const LoraConfig& config,
                            std::uint64_t seed);

struct AdapterStack {
    TinyLm base;
    std::optional<LoraAdapterSet> stage1;
    std::optional<LoraAdapterSet> stage2;
};

// A built computation graph up to the logits of the requested rows.
struct ForwardPass {
    std::shared_ptr<nn::Graph> graph;
    nn::NodePtr logits;  // (n_rows x V)
    int total_len = 0;
    int prefix_len = 0;  // visual prefix length
};

// Runs the decoder over [visual prefix | text tokens] with all active
// adapters applied as W + sum(scaling * B * A). logit_row0/n select which
// positions project to the vocabulary (-1, 0 = all of them).
ForwardPass build_forward(AdapterStack& stack, const std::vector<int>& image_tokens,
                          const std::vector<int>& text_tokens, int logit_row0 = -1,
                          int logit_rows = 0);

// Logits for every text position (positions predicting the next text token).
nn::Mat forward_logits(AdapterStack& stack, const std::vector<int>& image_tokens,
                       const std::vector<int>& text_tokens);

struct DecodeResult {
    std::vector<int> tokens;  // newly generated (without the prompt)
    bool truncated = false;   // hit max_context before eos/max_new
};

DecodeResult greedy_decode(AdapterStack& stack, const std::vector<int>& image_tokens,
                           const std::vector<int>& prompt_tokens, int max_new);

void save_checkpoint(const AdapterStack& stack, const std::string& dir);
AdapterStack load_checkpoint(const std::string& dir);
// Loads an adapter from another checkpoint into `stack` (shape-checked).
void load_adapter_into(AdapterStack& stack, const std::string& dir, int stage);

// FNV-1a over the raw bytes of a parameter set; used for freeze checks.
std::uint64_t params_hash(const std::vector<nn::Parameter>& params);

}  // namespace oocd
