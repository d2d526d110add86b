#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <set>

#include "doctest.h"
#include "oocd/corpus.hpp"
#include "oocd/errors.hpp"
#include "oocd/partition.hpp"
#include "oocd/teacher.hpp"

using namespace oocd;

namespace {

struct Fixture {
    std::vector<NewsItem> items;
    KnowledgeSet ks;
    ConsensusPartition partition;
    LabelSource gold;
    LabelSource annotations;

    Fixture() {
        CorpusConfig cfg;
        cfg.n_contexts = 10;
        cfg.n_items_per_context = 24;
        cfg.seed = 3;
        Corpus corpus = generate_corpus(cfg);
        items = corpus.train;
        TeacherProfile a{"alpha", 0.85, 0.3, 0.2, 100};
        TeacherProfile b{"beta", 0.85, 0.3, -0.2, 200};
        ks = acquire_knowledge(items, {a, b}, PromptVariant::EntitiesAndCaptions);
        partition = partition_by_consensus(ks);
        for (const NewsItem& item : items) gold[item.id] = *item.gold_label;
        annotations = request_annotations(partition, gold);
    }
};

}  // namespace

TEST_CASE("partition covers every item exactly once") {
    Fixture f;
    CHECK(f.partition.agree.size() + f.partition.conflict.size() == f.items.size());
    std::set<std::string> seen;
    for (const auto& id : f.partition.agree) CHECK(seen.insert(id).second);
    for (const auto& id : f.partition.conflict) CHECK(seen.insert(id).second);

    for (const auto& id : f.partition.agree) {
        CHECK(f.ks.record(id, "alpha").predicted_label ==
              f.ks.record(id, "beta").predicted_label);
    }
    for (const auto& id : f.partition.conflict) {
        CHECK(f.ks.record(id, "alpha").predicted_label !=
              f.ks.record(id, "beta").predicted_label);
    }
}

TEST_CASE("partition requires exactly two teachers") {
    Fixture f;
    KnowledgeSet one = f.ks;
    one.teacher_names = {"alpha"};
    for (auto& [id, recs] : one.records) recs.resize(1);
    CHECK_THROWS_AS(partition_by_consensus(one), PipelineError);
}

TEST_CASE("budget report counts conflicts") {
    Fixture f;
    BudgetReport rep = budget_report(f.partition);
    CHECK(rep.total == static_cast<int>(f.items.size()));
    CHECK(rep.conflict == static_cast<int>(f.partition.conflict.size()));
    CHECK(rep.fraction == doctest::Approx(static_cast<double>(rep.conflict) / rep.total));
}

TEST_CASE("annotations are requested for the conflict set only") {
    Fixture f;
    CHECK(f.annotations.size() == f.partition.conflict.size());
    for (const auto& id : f.partition.conflict) {
        REQUIRE(f.annotations.count(id) == 1);
        CHECK(f.annotations.at(id) == f.gold.at(id));
    }
    LabelSource incomplete = f.gold;
    incomplete.erase(f.partition.conflict.front());
    CHECK_THROWS_AS(request_annotations(f.partition, incomplete), PipelineError);
}

TEST_CASE("annotations jsonl round-trips") {
    Fixture f;
    std::string path =
        (std::filesystem::temp_directory_path() / "oocd_annotations.jsonl").string();
    save_annotations_jsonl(f.annotations, path);
    CHECK(load_annotations_jsonl(path) == f.annotations);
    std::remove(path.c_str());
}

TEST_CASE("stage1 targets pick primary for agreement and gold-matching for conflict") {
    Fixture f;
    int dropped = 0;
    auto targets = stage1_targets(f.items, f.ks, f.partition, f.annotations, "alpha",
                                  PromptVariant::EntitiesAndCaptions, &dropped);
    CHECK(targets.size() + static_cast<size_t>(dropped) == f.items.size());
    std::set<std::string> agree(f.partition.agree.begin(), f.partition.agree.end());
    for (const auto& t : targets) {
        if (agree.count(t.item_id)) {
            CHECK(t.source_teacher == "alpha");
            CHECK(t.target_text == f.ks.record(t.item_id, "alpha").raw_response);
        } else {
            const auto& rec = f.ks.record(t.item_id, t.source_teacher);
            CHECK(rec.predicted_label == f.annotations.at(t.item_id));
            CHECK(t.target_text == rec.raw_response);
        }
        CHECK_FALSE(t.prompt_text.empty());
    }
}

TEST_CASE("dpo pairs prefer the teacher that matched the annotation") {
    Fixture f;
    int dropped = 0;
    auto pairs = build_dpo_pairs(f.items, f.ks, f.partition, f.annotations,
                                 PromptVariant::EntitiesAndCaptions, &dropped);
    CHECK(pairs.size() + static_cast<size_t>(dropped) == f.partition.conflict.size());
    for (const auto& p : pairs) {
        Label gold = f.annotations.at(p.item_id);
        ParsedResponse pref = parse_response(p.preferred);
        ParsedResponse rej = parse_response(p.rejected);
        CHECK(pref.label == gold);
        CHECK(rej.label != gold);
        CHECK(p.preferred != p.rejected);
    }
}

TEST_CASE("conflict fraction of two independent teachers is near 2 p (1-p)") {
    // Two teachers with flat accuracy p and independent errors disagree with
    // probability 2 p (1 - p); check the simulated pipeline against that to
    // within 3 sigma of the binomial spread.
    CorpusConfig cfg;
    cfg.n_contexts = 20;
    cfg.n_items_per_context = 50;
    cfg.seed = 19;
    Corpus corpus = generate_corpus(cfg);
    TeacherProfile a{"alpha", 0.9, 0.0, 0.0, 100};
    TeacherProfile b{"beta", 0.9, 0.0, 0.0, 200};
    KnowledgeSet ks =
        acquire_knowledge(corpus.train, {a, b}, PromptVariant::EntitiesAndCaptions);
    BudgetReport rep = budget_report(partition_by_consensus(ks));
    double expected = 2 * 0.9 * 0.1;
    double sigma = std::sqrt(expected * (1 - expected) / rep.total);
    CHECK(std::abs(rep.fraction - expected) < 3 * sigma);
}
