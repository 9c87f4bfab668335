"""Ontology validation, corpus ingestion, and episode sampling."""

import json
import logging

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from argcloze import (
    Argument,
    ClozeInstance,
    ConfigError,
    DuplicateVerbalizer,
    EmptyCorpus,
    EventMention,
    EventOntology,
    EventTypeDef,
    FewShotEpisode,
    MultiTokenVerbalizer,
    SpanOutOfBounds,
    UnknownEventType,
    UnknownRole,
    UnknownToken,
    Vocabulary,
    build_instances,
    class_key,
    load_corpus,
    load_ontology,
    sample_few_shot,
)


def test_event_type_requires_roles():
    with pytest.raises(ConfigError, match="no roles"):
        EventTypeDef(name="t", roles=(), verbalizer={})


def test_event_type_rejects_duplicate_roles():
    with pytest.raises(ConfigError, match="repeats"):
        EventTypeDef(name="t", roles=("a", "a"), verbalizer={"a": "a"})


def test_event_type_requires_verbalizer_for_every_role():
    with pytest.raises(ConfigError, match="lacks verbalizers"):
        EventTypeDef(name="t", roles=("a", "b"), verbalizer={"a": "x"})


def test_event_type_rejects_shared_verbalizer_token():
    with pytest.raises(DuplicateVerbalizer):
        EventTypeDef(name="t", roles=("a", "b"), verbalizer={"a": "x", "b": "x"})


def test_event_type_rejects_multi_token_verbalizer():
    with pytest.raises(MultiTokenVerbalizer):
        EventTypeDef(name="t", roles=("a",), verbalizer={"a": "two words"})


def test_ontology_rejects_duplicate_type_names(tiny_ontology):
    etype = tiny_ontology.event_types[0]
    with pytest.raises(ConfigError, match="duplicate event type"):
        EventOntology((etype, etype))


def test_ontology_lookup(tiny_ontology):
    assert tiny_ontology.roles("exchange.trade") == ("giver", "recipient", "keeper")
    assert tiny_ontology.verbalizer_token("patrol.watch", "scout") == "scout"
    with pytest.raises(UnknownEventType):
        tiny_ontology.get("no.such")
    with pytest.raises(UnknownRole):
        tiny_ontology.verbalizer_token("patrol.watch", "giver")


def test_verbalizer_tokens_in_ontology_order(tiny_ontology):
    assert tiny_ontology.verbalizer_tokens() == [
        "giver", "recipient", "keeper", "keeper", "scout",
    ]


def test_check_vocabulary_flags_missing_verbalizer(tiny_ontology):
    vocab = Vocabulary.build(["giver", "recipient", "keeper"])  # no "scout"
    with pytest.raises(UnknownToken, match="scout"):
        tiny_ontology.check_vocabulary(vocab)


def _write_ontology(path, obj):
    path.write_text(json.dumps(obj), encoding="utf-8")
    return path


def test_load_ontology_round_trip(tmp_path, tiny_ontology):
    obj = {
        "event_types": [
            {"name": t.name, "roles": list(t.roles), "verbalizer": dict(t.verbalizer)}
            for t in tiny_ontology.event_types
        ]
    }
    path = _write_ontology(tmp_path / "ontology.json", obj)
    loaded = load_ontology(path)
    assert loaded == tiny_ontology


def test_load_ontology_rejects_wrong_shape(tmp_path):
    path = _write_ontology(tmp_path / "ontology.json", {"types": []})
    with pytest.raises(ConfigError, match="event_types"):
        load_ontology(path)


def test_load_ontology_rejects_missing_entry_key(tmp_path):
    obj = {"event_types": [{"name": "t", "roles": ["a"]}]}
    path = _write_ontology(tmp_path / "ontology.json", obj)
    with pytest.raises(ConfigError, match="missing key"):
        load_ontology(path)


def test_load_ontology_checks_vocabulary_when_given(tmp_path):
    obj = {"event_types": [{"name": "t", "roles": ["a"], "verbalizer": {"a": "agent"}}]}
    path = _write_ontology(tmp_path / "ontology.json", obj)
    with pytest.raises(UnknownToken):
        load_ontology(path, vocab=Vocabulary.build(["other"]))
    load_ontology(path, vocab=Vocabulary.build(["agent"]))


def _corpus_line(**overrides):
    base = {
        "tokens": ["bado", "traded", "with", "cemi"],
        "trigger": [1, 2],
        "event_type": "exchange.trade",
        "arguments": [{"span": [0, 1], "role": "giver"}],
    }
    base.update(overrides)
    return json.dumps(base)


def _write_corpus(path, lines):
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def test_load_corpus_parses_mentions(tmp_path, tiny_ontology):
    path = _write_corpus(
        tmp_path / "corpus.jsonl",
        [
            _corpus_line(),
            "",  # blank lines are skipped
            _corpus_line(arguments=[{"span": [3, 4], "role": None}]),
        ],
    )
    mentions = load_corpus(path, tiny_ontology)
    assert len(mentions) == 2
    assert mentions[0].arguments[0] == Argument(span=(0, 1), role="giver")
    assert mentions[0].span_tokens((0, 1)) == ("bado",)
    assert mentions[1].arguments[0].role is None


def test_load_corpus_names_offending_line(tmp_path, tiny_ontology):
    path = _write_corpus(tmp_path / "corpus.jsonl", [_corpus_line(), "{not json"])
    with pytest.raises(ConfigError, match=r"corpus\.jsonl:2"):
        load_corpus(path, tiny_ontology)


def test_load_corpus_rejects_out_of_bounds_span(tmp_path, tiny_ontology):
    path = _write_corpus(tmp_path / "corpus.jsonl", [_corpus_line(trigger=[1, 9])])
    with pytest.raises(SpanOutOfBounds, match=":1"):
        load_corpus(path, tiny_ontology)
    path = _write_corpus(
        tmp_path / "corpus.jsonl",
        [_corpus_line(arguments=[{"span": [2, 2], "role": "giver"}])],
    )
    with pytest.raises(SpanOutOfBounds):
        load_corpus(path, tiny_ontology)


def test_load_corpus_rejects_unknown_event_type(tmp_path, tiny_ontology):
    path = _write_corpus(tmp_path / "corpus.jsonl", [_corpus_line(event_type="x.y")])
    with pytest.raises(UnknownEventType, match=":1"):
        load_corpus(path, tiny_ontology)


def test_load_corpus_rejects_role_outside_event_type(tmp_path, tiny_ontology):
    path = _write_corpus(
        tmp_path / "corpus.jsonl",
        [_corpus_line(arguments=[{"span": [0, 1], "role": "scout"}])],
    )
    with pytest.raises(UnknownRole, match=":1"):
        load_corpus(path, tiny_ontology)


def test_build_instances_enumerates_candidates(tiny_mentions):
    instances = build_instances(tiny_mentions)
    assert [i.instance_id for i in instances] == [
        "0:0", "0:1", "1:0", "1:1", "1:2", "2:0", "2:1", "3:0", "3:1",
    ]
    assert instances[0].candidate_tokens == tiny_mentions[0].span_tokens(
        instances[0].candidate_span
    )
    negatives = [i for i in instances if i.gold_role is None]
    assert len(negatives) == 1


def test_class_key_folds_negative_candidates():
    mention = EventMention(
        sentence_tokens=("a",), trigger_span=(0, 1), event_type="t", arguments=()
    )
    inst = ClozeInstance(mention, (0, 1), None, "0:0")
    assert class_key(inst) == ("t", "")


def _make_instances(counts):
    """counts: {(event_type, role): n} -> distinct single-token instances."""
    instances = []
    i = 0
    for (etype, role), n in sorted(counts.items()):
        for _ in range(n):
            mention = EventMention(
                sentence_tokens=("w",),
                trigger_span=(0, 1),
                event_type=etype,
                arguments=(Argument((0, 1), role),),
            )
            instances.append(ClozeInstance(mention, (0, 1), role, f"{i}:0"))
            i += 1
    return instances


def test_sample_few_shot_takes_k_per_class():
    instances = _make_instances({("t", "a"): 10, ("t", "b"): 10, ("u", "a"): 10})
    episode = sample_few_shot(instances, k=2, seed=0)
    assert len(episode.train_ids) == 6
    assert len(episode.dev_ids) == 6
    assert len(episode.test_ids) == 30 - 12
    by_id = {inst.instance_id: inst for inst in instances}
    for ids in (episode.train_ids, episode.dev_ids):
        per_class = {}
        for iid in ids:
            per_class.setdefault(class_key(by_id[iid]), []).append(iid)
        assert all(len(v) == 2 for v in per_class.values())


def test_sample_few_shot_warns_on_small_class(caplog):
    instances = _make_instances({("t", "a"): 3})
    with caplog.at_level(logging.WARNING):
        episode = sample_few_shot(instances, k=2, seed=0)
    assert "fewer than 2k" in caplog.text
    # Train is filled before dev and nothing is lost.
    assert len(episode.train_ids) == 2
    assert len(episode.dev_ids) == 1
    assert episode.test_ids == ()


def test_sample_few_shot_is_deterministic():
    instances = _make_instances({("t", "a"): 20, ("t", "b"): 20})
    a = sample_few_shot(instances, k=4, seed=7)
    b = sample_few_shot(instances, k=4, seed=7)
    c = sample_few_shot(instances, k=4, seed=8)
    assert a == b
    assert a.train_ids != c.train_ids


def test_sample_few_shot_rejects_bad_input():
    instances = _make_instances({("t", "a"): 4})
    with pytest.raises(ConfigError, match="k must be"):
        sample_few_shot(instances, k=0, seed=0)
    with pytest.raises(EmptyCorpus):
        sample_few_shot([], k=1, seed=0)


def test_episode_json_round_trip():
    episode = sample_few_shot(_make_instances({("t", "a"): 6}), k=2, seed=3)
    assert FewShotEpisode.from_json(episode.to_json()) == episode


@settings(deadline=None, max_examples=50)
@given(
    counts=st.dictionaries(
        st.tuples(st.sampled_from(["t", "u", "v"]), st.sampled_from(["a", "b"])),
        st.integers(min_value=1, max_value=12),
        min_size=1,
        max_size=6,
    ),
    k=st.integers(min_value=1, max_value=5),
    seed=st.integers(min_value=0, max_value=999),
)
def test_episode_always_partitions_instances(counts, k, seed):
    instances = _make_instances(counts)
    episode = sample_few_shot(instances, k=k, seed=seed)
    train, dev, test = (
        set(episode.train_ids), set(episode.dev_ids), set(episode.test_ids),
    )
    assert len(train) == len(episode.train_ids)
    assert len(dev) == len(episode.dev_ids)
    assert not train & dev and not train & test and not dev & test
    assert train | dev | test == {inst.instance_id for inst in instances}
