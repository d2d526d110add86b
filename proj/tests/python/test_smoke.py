"""Smoke tests for the oocd python bindings.

The heavy lifting is tested natively; these checks only confirm that the
module loads and that the exposed operations behave sensibly end to end at a
miniature scale.
"""

import math

import pytest

import oocd


@pytest.fixture(scope="module")
def corpus():
    cfg = oocd.CorpusConfig()
    cfg.n_contexts = 6
    cfg.n_items_per_context = 8
    cfg.seed = 5
    return oocd.generate_corpus(cfg)


def test_module_surface():
    for name in (
        "generate_corpus",
        "build_prompt",
        "parse_response",
        "acquire_knowledge",
        "partition_by_consensus",
        "compute_metrics",
        "run_ablation",
        "sweep",
    ):
        assert callable(getattr(oocd, name))


def test_corpus_generation_and_roundtrip(tmp_path, corpus):
    assert len(corpus.train) == 6 * 5
    item = corpus.train[0]
    assert item.caption
    assert item.image
    path = str(tmp_path / "items.jsonl")
    oocd.save_jsonl(corpus.val, path)
    back = oocd.load_jsonl(path)
    assert len(back) == len(corpus.val)
    assert back[0].id == corpus.val[0].id
    assert back[0].caption == corpus.val[0].caption


def test_prompt_and_parse(corpus):
    item = corpus.test[0]
    text = oocd.build_prompt(item, oocd.PromptVariant.ENTITIES_AND_CAPTIONS)
    assert item.caption in text
    assert "Visual entities:" in text
    label, rationale = oocd.parse_response("no. The evidence disagrees.")
    assert label == oocd.Label.OUT_OF_CONTEXT
    assert rationale == "The evidence disagrees."
    with pytest.raises(oocd.ParseFailure):
        oocd.parse_response("nothing decisive here at all in this text")


def test_teachers_and_partition(corpus):
    alpha = oocd.TeacherProfile()
    alpha.name = "alpha"
    alpha.seed = 1
    beta = oocd.TeacherProfile()
    beta.name = "beta"
    beta.base_accuracy = 0.8
    beta.seed = 2
    ks = oocd.acquire_knowledge(
        corpus.train, [alpha, beta], oocd.PromptVariant.ENTITIES_AND_CAPTIONS
    )
    part = oocd.partition_by_consensus(ks)
    assert len(part.agree) + len(part.conflict) == len(corpus.train)
    report = oocd.budget_report(part)
    assert report.total == len(corpus.train)
    assert math.isclose(report.fraction, report.conflict / report.total)


def test_metrics():
    P, O = oocd.Label.PRISTINE, oocd.Label.OUT_OF_CONTEXT
    m = oocd.compute_metrics([O, O, P, P], [O, P, P, O])
    assert m.accuracy == 0.5
    assert m.precision == 0.5
    assert m.recall == 0.5
    assert m.f1 == 0.5


def test_config_parsing():
    cfg = oocd.config_from_string(
        "seed = 9\ncorpus.n_contexts = 4\ncorpus.n_items_per_context = 6\n"
        "model.d_model = 16\nmodel.n_heads = 2\nmodel.n_layers = 1\n"
    )
    assert cfg is not None
    with pytest.raises(oocd.ConfigError):
        oocd.config_from_string("corpus.ooc_ratio = 7\n")
