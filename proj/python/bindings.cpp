// pybind11 surface for the pipeline: corpus generation, prompts, teachers,
// consensus partitioning, metrics, and whole-experiment runs.
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "oocd/config.hpp"
#include "oocd/errors.hpp"
#include "oocd/pipeline.hpp"

namespace py = pybind11;
using namespace oocd;

PYBIND11_MODULE(_oocd, m) {
    m.doc() = "two-stage multi-teacher distillation for out-of-context news detection";

    py::register_exception<ConfigError>(m, "ConfigError");
    py::register_exception<SchemaError>(m, "SchemaError");
    py::register_exception<ParseFailure>(m, "ParseFailure");
    py::register_exception<PipelineError>(m, "PipelineError");

    py::enum_<Label>(m, "Label")
        .value("PRISTINE", Label::Pristine)
        .value("OUT_OF_CONTEXT", Label::OutOfContext);

    py::enum_<PromptVariant>(m, "PromptVariant")
        .value("CAPTION_ONLY", PromptVariant::CaptionOnly)
        .value("ENTITIES", PromptVariant::Entities)
        .value("SEARCHED_CAPTIONS", PromptVariant::SearchedCaptions)
        .value("ENTITIES_AND_CAPTIONS", PromptVariant::EntitiesAndCaptions)
        .value("ENTITIES_CAPTIONS_AND_IMAGES", PromptVariant::EntitiesCaptionsAndImages);

    py::class_<Evidence>(m, "Evidence")
        .def(py::init<>())
        .def_readwrite("visual_entities", &Evidence::visual_entities)
        .def_readwrite("searched_captions", &Evidence::searched_captions);

    py::class_<NewsItem>(m, "NewsItem")
        .def(py::init<>())
        .def_readwrite("id", &NewsItem::id)
        .def_readwrite("image", &NewsItem::image)
        .def_readwrite("caption", &NewsItem::caption)
        .def_readwrite("evidence", &NewsItem::evidence)
        .def_readwrite("gold_label", &NewsItem::gold_label)
        .def_readwrite("context_id", &NewsItem::context_id);

    py::class_<CorpusConfig>(m, "CorpusConfig")
        .def(py::init<>())
        .def_readwrite("n_contexts", &CorpusConfig::n_contexts)
        .def_readwrite("n_items_per_context", &CorpusConfig::n_items_per_context)
        .def_readwrite("ooc_ratio", &CorpusConfig::ooc_ratio)
        .def_readwrite("visual_vocab_size", &CorpusConfig::visual_vocab_size)
        .def_readwrite("text_vocab_size", &CorpusConfig::text_vocab_size)
        .def_readwrite("similarity_noise", &CorpusConfig::similarity_noise)
        .def_readwrite("seed", &CorpusConfig::seed);

    py::class_<Corpus>(m, "Corpus")
        .def_readonly("train", &Corpus::train)
        .def_readonly("val", &Corpus::val)
        .def_readonly("test", &Corpus::test);

    m.def("generate_corpus", &generate_corpus, py::arg("config"));
    m.def("load_jsonl", &load_jsonl, py::arg("path"));
    m.def("save_jsonl", &save_jsonl, py::arg("items"), py::arg("path"),
          py::arg("omit_labels") = false);

    m.def(
        "build_prompt",
        [](const NewsItem& item, PromptVariant v) { return build_prompt(item, v).text; },
        py::arg("item"), py::arg("variant") = PromptVariant::EntitiesAndCaptions);
    m.def(
        "parse_response",
        [](const std::string& text) {
            const ParsedResponse r = parse_response(text);
            return py::make_tuple(r.label, r.rationale);
        },
        py::arg("text"), "Returns (label, rationale); raises ParseFailure.");

    py::class_<TeacherProfile>(m, "TeacherProfile")
        .def(py::init<>())
        .def_readwrite("name", &TeacherProfile::name)
        .def_readwrite("base_accuracy", &TeacherProfile::base_accuracy)
        .def_readwrite("difficulty_sensitivity", &TeacherProfile::difficulty_sensitivity)
        .def_readwrite("bias_toward_ooc", &TeacherProfile::bias_toward_ooc)
        .def_readwrite("seed", &TeacherProfile::seed);

    py::class_<TeacherRecord>(m, "TeacherRecord")
        .def_readonly("item_id", &TeacherRecord::item_id)
        .def_readonly("teacher_name", &TeacherRecord::teacher_name)
        .def_readonly("predicted_label", &TeacherRecord::predicted_label)
        .def_readonly("rationale", &TeacherRecord::rationale)
        .def_readonly("raw_response", &TeacherRecord::raw_response);

    py::class_<KnowledgeSet>(m, "KnowledgeSet")
        .def_readonly("records", &KnowledgeSet::records)
        .def_readonly("teacher_names", &KnowledgeSet::teacher_names);

    m.def(
        "acquire_knowledge",
        [](const std::vector<NewsItem>& items, const std::vector<TeacherProfile>& teachers,
           PromptVariant v) { return acquire_knowledge(items, teachers, v); },
        py::arg("items"), py::arg("teachers"),
        py::arg("variant") = PromptVariant::EntitiesAndCaptions);

    py::class_<ConsensusPartition>(m, "ConsensusPartition")
        .def_readonly("agree", &ConsensusPartition::agree)
        .def_readonly("conflict", &ConsensusPartition::conflict);
    py::class_<BudgetReport>(m, "BudgetReport")
        .def_readonly("total", &BudgetReport::total)
        .def_readonly("conflict", &BudgetReport::conflict)
        .def_readonly("fraction", &BudgetReport::fraction);
    m.def("partition_by_consensus", &partition_by_consensus, py::arg("knowledge"));
    m.def("budget_report", &budget_report, py::arg("partition"));

    py::class_<Metrics>(m, "Metrics")
        .def_readonly("accuracy", &Metrics::accuracy)
        .def_readonly("precision", &Metrics::precision)
        .def_readonly("recall", &Metrics::recall)
        .def_readonly("f1", &Metrics::f1)
        .def_readonly("parse_failure_count", &Metrics::parse_failure_count)
        .def("to_json", &Metrics::to_json);
    m.def("compute_metrics", &compute_metrics, py::arg("predictions"), py::arg("golds"));

    py::class_<PipelineConfig>(m, "PipelineConfig");
    m.def(
        "config_from_string",
        [](const std::string& text) {
            return pipeline_config_from(Config::parse_string(text));
        },
        py::arg("text"), "Parses a key=value config into a PipelineConfig.");
    m.def(
        "config_from_file",
        [](const std::string& path) {
            return pipeline_config_from(Config::parse_file(path));
        },
        py::arg("path"));

    py::class_<ExperimentResult>(m, "ExperimentResult")
        .def_property_readonly("mode",
                               [](const ExperimentResult& r) { return to_string(r.mode); })
        .def_readonly("metrics", &ExperimentResult::metrics)
        .def_readonly("stage1_metrics", &ExperimentResult::stage1_metrics)
        .def_readonly("heldout_margin", &ExperimentResult::heldout_margin)
        .def_readonly("budget", &ExperimentResult::budget);
    m.def(
        "run_ablation",
        [](const std::string& mode, const PipelineConfig& cfg) {
            return run_ablation(ablation_mode_from_string(mode), cfg);
        },
        py::arg("mode"), py::arg("config"),
        "mode: Full | NoStep1NoStep2 | NoStep2 | NoDpoStep2 | NoLoraFtStep2");

    py::class_<SweepRow>(m, "SweepRow")
        .def_readonly("value", &SweepRow::value)
        .def_readonly("metrics", &SweepRow::metrics)
        .def_readonly("error", &SweepRow::error);
    m.def("sweep", &sweep, py::arg("param"), py::arg("values"), py::arg("base"));
}
