// Command-line entry point: one subcommand per pipeline stage, one manifest
// per run directory. Stages must run in order (generate -> acquire ->
// partition -> train-stage1 -> train-stage2 -> evaluate); completed stages
// with an unchanged config are skipped.
#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <set>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "oocd/chart.hpp"
#include "oocd/config.hpp"
#include "oocd/errors.hpp"
#include "oocd/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace oocd;

namespace {

const std::vector<std::string> kStageOrder = {"generate", "acquire", "partition",
                                              "train-stage1", "train-stage2", "evaluate"};

// O_EXCL lock file so only one subcommand runs per run directory at a time.
class DirLock {
public:
    explicit DirLock(const fs::path& run_dir) : path_(run_dir / "lock") {
        const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
        if (fd < 0) {
            throw PipelineError("run directory is locked (" + path_.string() +
                                " exists); remove it if no other process is running");
        }
        ::close(fd);
    }
    ~DirLock() { std::remove(path_.c_str()); }
    DirLock(const DirLock&) = delete;
    DirLock& operator=(const DirLock&) = delete;

private:
    fs::path path_;
};

struct RunDir {
    fs::path dir;
    json manifest;

    static RunDir open(const std::string& path, const Config& cfg) {
        RunDir rd;
        rd.dir = path;
        fs::create_directories(rd.dir);
        const std::string hash = std::to_string(cfg.hash());
        const fs::path mpath = rd.dir / "manifest.json";
        if (fs::exists(mpath)) {
            std::ifstream in(mpath);
            in >> rd.manifest;
            if (rd.manifest.value("config_hash", "") != hash) {
                // Inputs changed: every previously completed stage is stale.
                rd.manifest["stages"] = json::object();
                rd.manifest["config_hash"] = hash;
            }
        } else {
            rd.manifest = {{"config_hash", hash}, {"stages", json::object()}};
        }
        return rd;
    }

    bool done(const std::string& stage) const {
        const auto& st = manifest.at("stages");
        return st.contains(stage) && st.at(stage).get<bool>();
    }

    // Throws unless every stage before `stage` in the pipeline has a stamp.
    void require_upstream(const std::string& stage) const {
        for (const auto& s : kStageOrder) {
            if (s == stage) return;
            if (!done(s)) {
                throw PipelineError("stage '" + stage + "' needs '" + s +
                                    "' to run first in this run directory");
            }
        }
    }

    void stamp(const std::string& stage) {
        manifest["stages"][stage] = true;
        std::ofstream out(dir / "manifest.json");
        out << manifest.dump(2) << "\n";
    }

    fs::path sub(const std::string& name) const {
        fs::create_directories(dir / name);
        return dir / name;
    }
};

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
}

// --- shared loaders (stages after `generate` work from the run-dir files) ---

std::vector<NewsItem> load_split(const RunDir& rd, const std::string& split) {
    return load_jsonl((rd.dir / "corpus" / (split + ".jsonl")).string());
}

KnowledgeSet load_knowledge(const RunDir& rd, const PipelineConfig& cfg) {
    std::vector<std::string> names;
    for (const auto& t : cfg.teachers) names.push_back(t.name);
    KnowledgeStore store((rd.dir / "knowledge" / "knowledge.jsonl").string());
    return store.load(names);
}

struct Stage2Data {
    std::vector<TokenizedTarget> conflict_targets;
    std::vector<TokenizedPair> pairs;
};

Stage2Data load_stage2_data(const RunDir& rd, const PipelineConfig& cfg, const Vocab& vocab) {
    const auto train = load_split(rd, "train");
    const auto ks = load_knowledge(rd, cfg);
    const auto part = partition_by_consensus(ks);
    const auto ann =
        load_annotations_jsonl((rd.dir / "partition" / "annotations.jsonl").string());
    std::set<std::string> conflict(part.conflict.begin(), part.conflict.end());
    Stage2Data d;
    for (const auto& t :
         stage1_targets(train, ks, part, ann, cfg.primary_teacher, cfg.variant)) {
        if (conflict.count(t.item_id)) d.conflict_targets.push_back(tokenize_target(t, vocab));
    }
    for (const auto& p : build_dpo_pairs(train, ks, part, ann, cfg.variant)) {
        d.pairs.push_back(tokenize_pair(p, vocab));
    }
    return d;
}

void write_report(const RunDir& rd, const std::string& name, const TrainReport& report) {
    const fs::path reports = rd.sub("reports");
    write_text(reports / (name + ".json"), report.to_json() + "\n");
    write_text(reports / (name + "_trace.csv"), report.trace_csv());
}

// --- subcommand bodies ---

void cmd_generate(RunDir& rd, const PipelineConfig& cfg) {
    const Corpus corpus = generate_corpus(cfg.corpus);
    const fs::path dir = rd.sub("corpus");
    save_jsonl(corpus.train, (dir / "train.jsonl").string(), /*omit_labels=*/true);
    save_jsonl(corpus.val, (dir / "val.jsonl").string());
    save_jsonl(corpus.test, (dir / "test.jsonl").string());
    save_labels_jsonl(corpus.train, (dir / "train_labels.jsonl").string());
    std::cout << "wrote " << corpus.train.size() << "/" << corpus.val.size() << "/"
              << corpus.test.size() << " train/val/test items to " << dir << "\n";
}

void cmd_acquire(RunDir& rd, const PipelineConfig& cfg) {
    // The student never sees train labels, but the simulated teachers need
    // them (they emit the gold label with a difficulty-dependent probability).
    auto train = load_split(rd, "train");
    const auto golds =
        load_annotations_jsonl((rd.dir / "corpus" / "train_labels.jsonl").string());
    for (auto& item : train) {
        if (auto it = golds.find(item.id); it != golds.end()) item.gold_label = it->second;
    }
    KnowledgeStore store((rd.sub("knowledge") / "knowledge.jsonl").string());
    const KnowledgeSet ks = acquire_knowledge(train, cfg.teachers, cfg.variant, &store);
    std::cout << "knowledge for " << ks.records.size() << " items from "
              << ks.teacher_names.size() << " teachers in " << store.path() << "\n";
}

void cmd_partition(RunDir& rd, const PipelineConfig& cfg) {
    const auto ks = load_knowledge(rd, cfg);
    const auto part = partition_by_consensus(ks);
    const auto budget = budget_report(part);
    const fs::path dir = rd.sub("partition");

    write_text(dir / "partition.json",
               json{{"agree", part.agree}, {"conflict", part.conflict}}.dump(2) + "\n");
    write_text(dir / "budget.json",
               json{{"total", budget.total},
                    {"conflict", budget.conflict},
                    {"fraction", budget.fraction}}
                       .dump(2) +
                   "\n");
    std::string request;
    for (const auto& id : part.conflict) request += json{{"item_id", id}}.dump() + "\n";
    write_text(dir / "annotations_request.jsonl", request);

    // The synthetic annotation source: gold labels written at generate time.
    const auto golds =
        load_annotations_jsonl((rd.dir / "corpus" / "train_labels.jsonl").string());
    const auto ann = request_annotations(part, golds);
    save_annotations_jsonl(ann, (dir / "annotations.jsonl").string());
    std::cout << "agree " << part.agree.size() << ", conflict " << part.conflict.size()
              << " (fraction " << budget.fraction << "); annotated " << ann.size()
              << " items\n";
}

void cmd_train_stage1(RunDir& rd, const PipelineConfig& cfg) {
    const auto train = load_split(rd, "train");
    const auto ks = load_knowledge(rd, cfg);
    const auto part = partition_by_consensus(ks);
    const auto ann =
        load_annotations_jsonl((rd.dir / "partition" / "annotations.jsonl").string());
    const Vocab vocab = Vocab::build(cfg.corpus.text_vocab_size);

    int dropped = 0;
    std::vector<TokenizedTarget> targets;
    for (const auto& t :
         stage1_targets(train, ks, part, ann, cfg.primary_teacher, cfg.variant, &dropped)) {
        targets.push_back(tokenize_target(t, vocab));
    }

    AdapterStack stack;
    stack.base = TinyLm::init(cfg.model);
    const auto report =
        train_stage1(stack, targets, cfg.train, (rd.dir / "checkpoints" / "stage1").string());
    write_report(rd, "stage1", report);
    std::cout << "stage 1: " << targets.size() << " targets (" << dropped
              << " dropped), " << report.total_steps << " steps, final loss "
              << (report.loss_trace.empty() ? 0.0 : report.loss_trace.back()) << "\n";
}

void cmd_train_stage2(RunDir& rd, const PipelineConfig& cfg) {
    AdapterStack stack = load_checkpoint((rd.dir / "checkpoints" / "stage1").string());
    const Vocab vocab = Vocab::build(cfg.corpus.text_vocab_size);
    const Stage2Data data = load_stage2_data(rd, cfg, vocab);
    const auto report = train_stage2(stack, data.pairs, data.conflict_targets, cfg.train,
                                     (rd.dir / "checkpoints" / "stage2").string());
    write_report(rd, "stage2", report);
    std::cout << "stage 2: " << data.pairs.size() << " preference pairs, "
              << report.total_steps << " steps\n";
}

void cmd_evaluate(RunDir& rd, const PipelineConfig& cfg, const std::string& ablation) {
    const AblationMode mode = ablation_mode_from_string(ablation);

    // Mode-dependent upstream requirement: zero-shot needs only data, modes
    // built on stage 1 need its checkpoint, the full model needs stage 2.
    switch (mode) {
        case AblationMode::NoStep1NoStep2: rd.require_upstream("acquire"); break;
        case AblationMode::NoStep2:
        case AblationMode::NoDpoStep2:
        case AblationMode::NoLoraFtStep2: rd.require_upstream("train-stage2"); break;
        case AblationMode::Full: rd.require_upstream("evaluate"); break;
    }

    const Vocab vocab = Vocab::build(cfg.corpus.text_vocab_size);
    AdapterStack stack;
    switch (mode) {
        case AblationMode::NoStep1NoStep2: stack.base = TinyLm::init(cfg.model); break;
        case AblationMode::NoStep2:
            stack = load_checkpoint((rd.dir / "checkpoints" / "stage1").string());
            break;
        case AblationMode::Full:
            stack = load_checkpoint((rd.dir / "checkpoints" / "stage2").string());
            break;
        case AblationMode::NoDpoStep2:
        case AblationMode::NoLoraFtStep2: {
            // Retrain stage 2 from the stage-1 checkpoint with one term off.
            stack = load_checkpoint((rd.dir / "checkpoints" / "stage1").string());
            TrainConfig tc = cfg.train;
            if (mode == AblationMode::NoDpoStep2) tc.stage2.alpha = 0.0;
            if (mode == AblationMode::NoLoraFtStep2) tc.stage2.gamma = 0.0;
            const Stage2Data data = load_stage2_data(rd, cfg, vocab);
            train_stage2(stack, data.pairs, data.conflict_targets, tc, "");
            break;
        }
    }

    const auto test = load_split(rd, "test");
    std::vector<Prediction> preds;
    const Metrics m = evaluate(stack, test, vocab, cfg.eval, &preds);

    const fs::path dir = rd.sub("eval");
    write_text(dir / ("metrics_" + ablation + ".json"), m.to_json() + "\n");
    save_predictions_jsonl(preds, (dir / ("predictions_" + ablation + ".jsonl")).string());
    std::cout << m.to_json() << "\n";
}

void cmd_sweep(RunDir& rd, const PipelineConfig& cfg, const std::string& param,
               const std::vector<double>& values) {
    const auto rows = sweep(param, values, cfg);
    const fs::path dir = rd.sub("sweep");
    write_text(dir / ("sweep_" + param + ".csv"), sweep_csv(param, rows));
    write_sweep_chart((dir / ("sweep_" + param + ".svg")).string(), param, rows);
    std::cout << sweep_csv(param, rows);
}

int cmd_gradcheck(RunDir& rd, const PipelineConfig& cfg) {
    // A reduced model keeps the finite-difference probe fast while exercising
    // every adapter tensor the full model trains.
    PipelineConfig small = cfg;
    small.model.d_model = 16;
    small.model.n_heads = 2;
    small.model.n_layers = 2;
    small.corpus.n_contexts = 4;
    small.corpus.n_items_per_context = 6;
    small.train.stage1.lora_rank = 4;
    small.train.stage2.lora_rank = 4;

    PreparedData data = prepare_data(small);
    AdapterStack stack;
    stack.base = TinyLm::init(small.model);
    LoraConfig lc{small.train.stage1.lora_rank, small.train.stage1.lora_alpha,
                  small.train.lora_targets};
    stack.stage1 = init_adapter(small.model, lc, 7);
    stack.stage2 = init_adapter(small.model, lc, 8);
    stack.stage1->set_trainable(true);
    stack.stage2->set_trainable(true);
    // Zero-initialized B factors make half the derivatives identically zero
    // (and the DPO term flat); probe at a generic point instead.
    std::mt19937_64 gen(11);
    std::normal_distribution<double> dist(0.0, 0.02);
    for (auto* a : {&*stack.stage1, &*stack.stage2}) {
        for (auto& p : a->params) {
            if (p.name.ends_with(".B")) {
                for (Eigen::Index r = 0; r < p.value.rows(); ++r) {
                    for (Eigen::Index c = 0; c < p.value.cols(); ++c) p.value(r, c) = dist(gen);
                }
            }
        }
    }

    std::vector<TokenizedTarget> batch(data.stage1_targets.begin(),
                                       data.stage1_targets.begin() +
                                           std::min<size_t>(2, data.stage1_targets.size()));
    std::vector<TokenizedPair> pairs(data.dpo_pairs.begin(),
                                     data.dpo_pairs.begin() +
                                         std::min<size_t>(2, data.dpo_pairs.size()));
    // The DPO reference is a constant of the optimization; freeze it so the
    // probe measures the gradient actually used by training.
    std::vector<std::pair<double, double>> refs;
    for (const auto& p : pairs) refs.push_back(reference_logprobs(stack, p));
    auto loss_fn = [&]() {
        const auto ce = ce_loss(batch, stack);
        const auto dpo = pairs.empty() ? LossValue{} : dpo_loss(pairs, stack, 0.1, &refs);
        return total_loss(ce, dpo, 0.3, 0.5);
    };
    const auto report = finite_difference_check(loss_fn, labeled_trainable_params(stack),
                                                /*n_coords=*/40, /*h=*/1e-5,
                                                /*tolerance=*/1e-5, cfg.train.seed);

    json j{{"n_checked", report.n_checked},
           {"max_rel_error", report.max_rel_error},
           {"tolerance", report.tolerance},
           {"passed", report.passed}};
    for (const auto& e : report.worst) {
        j["worst"].push_back({{"tensor", e.tensor},
                              {"row", e.row},
                              {"col", e.col},
                              {"analytic", e.analytic},
                              {"numeric", e.numeric},
                              {"rel_error", e.rel_error}});
    }
    write_text(rd.sub("gradcheck") / "report.json", j.dump(2) + "\n");
    std::cout << j.dump(2) << "\n";
    return report.passed ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"two-stage multi-teacher distillation pipeline for"
                 " out-of-context news detection"};
    app.require_subcommand(1);

    std::string config_path, run_dir = "run", ablation = "Full", param;
    std::optional<std::uint64_t> seed;
    std::vector<double> values;
    app.add_option("--config", config_path, "key=value configuration file");
    app.add_option("--run-dir", run_dir, "run directory (manifest, artifacts)");
    app.add_option("--seed", seed, "override the config's global seed");

    CLI::App* generate = app.add_subcommand("generate", "write the synthetic corpus");
    CLI::App* acquire = app.add_subcommand("acquire", "query teachers for knowledge");
    CLI::App* partition = app.add_subcommand("partition", "consensus split + annotations");
    CLI::App* stage1 = app.add_subcommand("train-stage1", "distill the agreed knowledge");
    CLI::App* stage2 = app.add_subcommand("train-stage2", "fuse conflicting knowledge");
    CLI::App* evaluate = app.add_subcommand("evaluate", "metrics on the test split");
    evaluate->add_option("--ablation", ablation,
                         "Full | NoStep1NoStep2 | NoStep2 | NoDpoStep2 | NoLoraFtStep2");
    CLI::App* sweep_cmd = app.add_subcommand("sweep", "hyperparameter sensitivity");
    sweep_cmd->add_option("--param", param, "lora_rank | dpo_alpha | beta")->required();
    sweep_cmd->add_option("--values", values, "values to sweep")->required();
    CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient check");

    CLI11_PARSE(app, argc, argv);

    try {
        Config raw = config_path.empty() ? Config{} : Config::parse_file(config_path);
        if (seed) raw.set("seed", std::to_string(*seed));
        const PipelineConfig cfg = pipeline_config_from(raw);

        RunDir rd = RunDir::open(run_dir, raw);
        DirLock lock(rd.dir);

        auto run_stage = [&](const std::string& name, auto&& body) {
            if (rd.done(name)) {
                std::cout << name << ": up to date, nothing to do\n";
                return;
            }
            rd.require_upstream(name);
            body();
            rd.stamp(name);
        };

        if (generate->parsed()) run_stage("generate", [&] { cmd_generate(rd, cfg); });
        if (acquire->parsed()) run_stage("acquire", [&] { cmd_acquire(rd, cfg); });
        if (partition->parsed()) run_stage("partition", [&] { cmd_partition(rd, cfg); });
        if (stage1->parsed()) run_stage("train-stage1", [&] { cmd_train_stage1(rd, cfg); });
        if (stage2->parsed()) run_stage("train-stage2", [&] { cmd_train_stage2(rd, cfg); });
        if (evaluate->parsed()) cmd_evaluate(rd, cfg, ablation);
        if (sweep_cmd->parsed()) cmd_sweep(rd, cfg, param, values);
        if (gradcheck->parsed()) return cmd_gradcheck(rd, cfg);
        if (evaluate->parsed()) rd.stamp("evaluate");
    } catch (const std::exception& e) {
        std::cerr << json{{"error", std::string(e.what())}}.dump() << "\n";
        return 1;
    }
    return 0;
}
