#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "doctest.h"
#include "oocd/corpus.hpp"
#include "oocd/prompt.hpp"
#include "oocd/teacher.hpp"

using namespace oocd;

namespace {

Corpus small_corpus() {
    CorpusConfig cfg;
    cfg.n_contexts = 10;
    cfg.n_items_per_context = 30;
    cfg.seed = 11;
    return generate_corpus(cfg);
}

TeacherProfile profile(double acc, double sens, double bias, std::uint64_t seed) {
    TeacherProfile p;
    p.name = "t";
    p.base_accuracy = acc;
    p.difficulty_sensitivity = sens;
    p.bias_toward_ooc = bias;
    p.seed = seed;
    return p;
}

}  // namespace

TEST_CASE("simulate_teacher is deterministic in (seed, item)") {
    Corpus corpus = small_corpus();
    TeacherProfile p = profile(0.9, 0.0, 0.0, 42);
    for (int i = 0; i < 20; ++i) {
        const NewsItem& item = corpus.train[static_cast<size_t>(i)];
        TeacherRecord a = simulate_teacher(item, p, 0.0);
        TeacherRecord b = simulate_teacher(item, p, 0.0);
        CHECK(a == b);
        CHECK_NOTHROW(parse_response(a.raw_response));
    }
    TeacherProfile q = profile(0.9, 0.0, 0.0, 43);
    int diff = 0;
    for (const NewsItem& item : corpus.train) {
        if (!(simulate_teacher(item, p, 0.0) == simulate_teacher(item, q, 0.0))) ++diff;
    }
    CHECK(diff > 0);  // a different seed flips at least some outcomes
}

TEST_CASE("empirical accuracy matches base_accuracy within 3 sigma") {
    Corpus corpus = small_corpus();
    const double acc = 0.85;
    TeacherProfile p = profile(acc, 0.0, 0.0, 7);
    int correct = 0, n = 0;
    for (const auto* split : {&corpus.train, &corpus.val, &corpus.test}) {
        for (const NewsItem& item : *split) {
            TeacherRecord r = simulate_teacher(item, p, 0.0);
            correct += r.predicted_label == *item.gold_label;
            ++n;
        }
    }
    double sigma = std::sqrt(acc * (1 - acc) / n);
    CHECK(std::abs(static_cast<double>(correct) / n - acc) < 3 * sigma);
}

TEST_CASE("difficulty_sensitivity lowers accuracy on hard items") {
    Corpus corpus = small_corpus();
    TeacherProfile p = profile(0.9, 0.4, 0.0, 5);
    int correct_easy = 0, correct_hard = 0, n = 0;
    for (const NewsItem& item : corpus.train) {
        correct_easy += simulate_teacher(item, p, 0.0).predicted_label == *item.gold_label;
        correct_hard += simulate_teacher(item, p, 1.0).predicted_label == *item.gold_label;
        ++n;
    }
    CHECK(correct_hard < correct_easy);
    CHECK(static_cast<double>(correct_hard) / n == doctest::Approx(0.5).epsilon(0.12));
}

TEST_CASE("bias_toward_ooc skews errors toward the out-of-context class") {
    Corpus corpus = small_corpus();
    TeacherProfile pos = profile(0.7, 0.0, 0.3, 9);
    TeacherProfile neg = profile(0.7, 0.0, -0.3, 9);
    int ooc_pos = 0, ooc_neg = 0;
    for (const NewsItem& item : corpus.train) {
        ooc_pos += label_value(simulate_teacher(item, pos, 0.0).predicted_label);
        ooc_neg += label_value(simulate_teacher(item, neg, 0.0).predicted_label);
    }
    CHECK(ooc_pos > ooc_neg);
}

TEST_CASE("item_difficulty is deterministic and bounded") {
    Corpus corpus = small_corpus();
    for (const NewsItem& item : corpus.train) {
        double d = item_difficulty(item);
        CHECK(d >= 0.0);
        CHECK(d <= 1.0);
        CHECK(d == item_difficulty(item));
    }
}

TEST_CASE("acquire_knowledge yields one record per item and teacher") {
    Corpus corpus = small_corpus();
    std::vector<NewsItem> items(corpus.val.begin(), corpus.val.begin() + 20);
    std::vector<TeacherProfile> teachers = {profile(0.9, 0.1, 0.2, 1),
                                            profile(0.9, 0.1, -0.2, 2)};
    teachers[0].name = "alpha";
    teachers[1].name = "beta";
    KnowledgeSet ks =
        acquire_knowledge(items, teachers, PromptVariant::EntitiesAndCaptions);
    CHECK(ks.teacher_names == std::vector<std::string>{"alpha", "beta"});
    CHECK(ks.records.size() == items.size());
    for (const NewsItem& item : items) {
        REQUIRE(ks.records.count(item.id) == 1);
        const auto& recs = ks.records.at(item.id);
        REQUIRE(recs.size() == 2);
        CHECK(recs[0].teacher_name == "alpha");
        CHECK(recs[1].teacher_name == "beta");
        CHECK(ks.record(item.id, "beta") == recs[1]);
    }
}

TEST_CASE("knowledge store resumes without re-querying") {
    Corpus corpus = small_corpus();
    std::vector<NewsItem> items(corpus.val.begin(), corpus.val.begin() + 12);
    std::vector<TeacherProfile> teachers = {profile(0.9, 0.1, 0.0, 1)};
    teachers[0].name = "alpha";
    std::string path =
        (std::filesystem::temp_directory_path() / "oocd_knowledge_store.jsonl").string();
    std::remove(path.c_str());

    KnowledgeStore store(path);
    std::vector<NewsItem> first(items.begin(), items.begin() + 5);
    acquire_knowledge(first, teachers, PromptVariant::EntitiesAndCaptions, &store);
    CHECK(store.contains(items[0].id, "alpha"));
    CHECK_FALSE(store.contains(items[11].id, "alpha"));

    // A fresh store over the same file sees the earlier records and the second
    // pass over the full list only appends the missing ones.
    KnowledgeStore resumed(path);
    KnowledgeSet ks =
        acquire_knowledge(items, teachers, PromptVariant::EntitiesAndCaptions, &resumed);
    CHECK(ks.records.size() == items.size());
    KnowledgeSet reloaded = KnowledgeStore(path).load({"alpha"});
    CHECK(reloaded.records.size() == items.size());
    for (const NewsItem& item : items) {
        CHECK(reloaded.record(item.id, "alpha") == ks.record(item.id, "alpha"));
    }
    std::remove(path.c_str());
}

TEST_CASE("invalid teacher profiles are rejected") {
    CHECK_THROWS(profile(1.5, 0.0, 0.0, 0).validate());
    CHECK_THROWS(profile(0.9, -0.1, 0.0, 0).validate());
    CHECK_THROWS(profile(0.9, 0.0, 2.0, 0).validate());
    TeacherProfile unnamed = profile(0.9, 0.0, 0.0, 0);
    unnamed.name.clear();
    CHECK_THROWS(unnamed.validate());
}
