#include "oocd/config.hpp"

#include <fstream>
#include <sstream>

#include "oocd/errors.hpp"

namespace oocd {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

}  // namespace

Config Config::parse_string(const std::string& text) {
    Config cfg;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(line_no) +
                              ": expected key = value");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) {
            throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
        }
        cfg.kv_[key] = value;
    }
    return cfg;
}

Config Config::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_string(ss.str());
}

std::string Config::get(const std::string& key, const std::string& fallback) const {
    auto it = kv_.find(key);
    return it == kv_.end() ? fallback : it->second;
}

double Config::get(const std::string& key, double fallback) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    try {
        return std::stod(it->second);
    } catch (...) {
        throw ConfigError("config key " + key + ": not a number: " + it->second);
    }
}

int Config::get(const std::string& key, int fallback) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    try {
        return std::stoi(it->second);
    } catch (...) {
        throw ConfigError("config key " + key + ": not an integer: " + it->second);
    }
}

std::uint64_t Config::get(const std::string& key, std::uint64_t fallback) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    try {
        return std::stoull(it->second);
    } catch (...) {
        throw ConfigError("config key " + key + ": not an integer: " + it->second);
    }
}

std::uint64_t Config::hash() const {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&](const std::string& s) {
        for (unsigned char c : s) {
            h ^= c;
            h *= 1099511628211ULL;
        }
    };
    for (const auto& [k, v] : kv_) {
        mix(k);
        mix("=");
        mix(v);
        mix("\n");
    }
    return h;
}

PipelineConfig pipeline_config_from(const Config& cfg) {
    PipelineConfig pc;

    pc.corpus.n_contexts = cfg.get("corpus.n_contexts", pc.corpus.n_contexts);
    pc.corpus.n_items_per_context =
        cfg.get("corpus.n_items_per_context", pc.corpus.n_items_per_context);
    pc.corpus.ooc_ratio = cfg.get("corpus.ooc_ratio", pc.corpus.ooc_ratio);
    pc.corpus.visual_vocab_size = cfg.get("corpus.visual_vocab_size", pc.corpus.visual_vocab_size);
    pc.corpus.text_vocab_size = cfg.get("corpus.text_vocab_size", pc.corpus.text_vocab_size);
    pc.corpus.similarity_noise = cfg.get("corpus.similarity_noise", pc.corpus.similarity_noise);
    pc.corpus.train_fraction = cfg.get("corpus.train_fraction", pc.corpus.train_fraction);
    pc.corpus.val_fraction = cfg.get("corpus.val_fraction", pc.corpus.val_fraction);
    pc.corpus.seed = cfg.get("seed", std::uint64_t{0});

    pc.model.text_vocab_size = pc.corpus.text_vocab_size;
    pc.model.visual_vocab_size = pc.corpus.visual_vocab_size;
    pc.model.d_model = cfg.get("model.d_model", pc.model.d_model);
    pc.model.n_layers = cfg.get("model.n_layers", pc.model.n_layers);
    pc.model.n_heads = cfg.get("model.n_heads", pc.model.n_heads);
    pc.model.max_context = cfg.get("model.max_context", pc.model.max_context);
    pc.model.seed = pc.corpus.seed;

    auto stage = [&](const std::string& prefix, StageHyperparams& hp) {
        hp.lr = cfg.get(prefix + ".lr", hp.lr);
        hp.batch_size = cfg.get(prefix + ".batch_size", hp.batch_size);
        hp.epochs = cfg.get(prefix + ".epochs", hp.epochs);
        hp.warmup_ratio = cfg.get(prefix + ".warmup_ratio", hp.warmup_ratio);
        hp.lora_rank = cfg.get(prefix + ".lora_rank", hp.lora_rank);
        hp.lora_alpha = cfg.get(prefix + ".lora_alpha", hp.lora_alpha);
        hp.gamma = cfg.get(prefix + ".gamma", hp.gamma);
        hp.alpha = cfg.get(prefix + ".alpha", hp.alpha);
        hp.beta = cfg.get(prefix + ".beta", hp.beta);
    };
    stage("train.stage1", pc.train.stage1);
    stage("train.stage2", pc.train.stage2);
    pc.train.seed = pc.corpus.seed;
    pc.train.grad_clip = cfg.get("train.grad_clip", pc.train.grad_clip);
    pc.train.weight_decay = cfg.get("train.weight_decay", pc.train.weight_decay);
    pc.train.lr_schedule = cfg.get("train.lr_schedule", pc.train.lr_schedule);
    {
        std::string targets = cfg.get("train.lora_targets", std::string("attn_q,attn_v"));
        pc.train.lora_targets.clear();
        std::string cur;
        for (char c : targets + ",") {
            if (c == ',') {
                if (!cur.empty()) pc.train.lora_targets.push_back(lora_target_from_string(cur));
                cur.clear();
            } else if (!std::isspace(static_cast<unsigned char>(c))) {
                cur += c;
            }
        }
    }

    for (int i = 1; i <= cfg.get("teachers.count", 2); ++i) {
        const std::string p = "teacher" + std::to_string(i);
        TeacherProfile t;
        t.name = cfg.get(p + ".name", std::string("T") + std::to_string(i));
        t.base_accuracy = cfg.get(p + ".base_accuracy", 0.9);
        t.difficulty_sensitivity = cfg.get(p + ".difficulty_sensitivity", 0.0);
        t.bias_toward_ooc = cfg.get(p + ".bias_toward_ooc", 0.0);
        t.seed = pc.corpus.seed * 1000003ULL + static_cast<std::uint64_t>(i);
        pc.teachers.push_back(std::move(t));
    }
    pc.primary_teacher = cfg.get("primary_teacher", pc.teachers.front().name);

    pc.variant = prompt_variant_from_string(
        cfg.get("prompt.variant", std::string("EntitiesAndCaptions")));
    pc.eval.variant = pc.variant;
    pc.eval.max_new_tokens = cfg.get("eval.max_new_tokens", pc.eval.max_new_tokens);
    pc.eval.parse_failure_fallback =
        label_from_int(cfg.get("eval.parse_failure_fallback", 1));

    pc.corpus.validate();
    for (const auto& t : pc.teachers) t.validate();
    return pc;
}

}  // namespace oocd
