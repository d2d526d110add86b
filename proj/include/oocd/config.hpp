#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "oocd/corpus.hpp"
#include "oocd/eval.hpp"
#include "oocd/model.hpp"
#include "oocd/teacher.hpp"
#include "oocd/train.hpp"

namespace oocd {

// Flat key=value configuration file ('#' comments, dotted keys for sections).
class Config {
public:
    Config() = default;
    static Config parse_file(const std::string& path);
    static Config parse_string(const std::string& text);

    bool has(const std::string& key) const { return kv_.count(key) > 0; }
    std::string get(const std::string& key, const std::string& fallback) const;
    double get(const std::string& key, double fallback) const;
    int get(const std::string& key, int fallback) const;
    std::uint64_t get(const std::string& key, std::uint64_t fallback) const;
    void set(const std::string& key, const std::string& value) { kv_[key] = value; }

    // FNV-1a over the canonical (sorted) key=value listing.
    std::uint64_t hash() const;
    const std::map<std::string, std::string>& entries() const { return kv_; }

private:
    std::map<std::string, std::string> kv_;
};

// Everything one experiment needs, with paper defaults pre-filled.
struct PipelineConfig {
    CorpusConfig corpus;
    TinyLmConfig model;
    TrainConfig train;
    std::vector<TeacherProfile> teachers;
    std::string primary_teacher;
    PromptVariant variant = PromptVariant::EntitiesAndCaptions;
    EvalOptions eval;
};

PipelineConfig pipeline_config_from(const Config& cfg);

}  // namespace oocd
