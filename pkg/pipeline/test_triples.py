from collections import Counter
from datetime import date

import numpy as np
import pytest

from pipeline.disentangle import Dialogue, Turn
from pipeline.errors import ConfigError, GenerationError, InvalidDialogueError
from pipeline.preprocess import EOS
from pipeline.triples import (
    SplitConfig,
    Triple,
    make_test_records,
    make_training_triples,
    sample_context_length,
    split_corpus,
)

DAY = date(2007, 6, 12)


def _dialogue(n_turns, tag="d"):
    turns = [
        Turn(DAY, i, "a" if i % 2 == 0 else "b", None, f"{tag} turn {i + 1}") for i in range(n_turns)
    ]
    return Dialogue(id=tag, participants=("a", "b"), turns=turns, source=("#t", DAY), utterance_count=n_turns)


def _corpus(n, n_turns=5):
    return [_dialogue(n_turns, f"d{i}") for i in range(n)]


# ---------- Split ----------
def test_split_sizes_and_determinism():
    corpus = _corpus(1000)
    cfg = SplitConfig(test_fraction=0.02, seed=3)
    train, test = split_corpus(corpus, cfg)
    assert len(test) == 20 and len(train) == 980
    assert {d.id for d in train}.isdisjoint({d.id for d in test})
    again_train, again_test = split_corpus(corpus, cfg)
    assert [d.id for d in again_test] == [d.id for d in test]
    assert [d.id for d in train] == sorted((d.id for d in train), key=lambda x: int(x[1:]))


def test_split_empty():
    assert split_corpus([], SplitConfig()) == ([], [])


@pytest.mark.parametrize("kwargs", [{"test_fraction": 0}, {"test_fraction": 1.0}, {"negatives_per_positive": 0}])
def test_split_config_validation(kwargs):
    with pytest.raises(ConfigError):
        SplitConfig(**kwargs)


# ---------- Context length ----------
def test_context_length_endpoints():
    rng = np.random.default_rng(0)
    assert sample_context_length(100, 20, rng, eta=200.0) == 2
    assert sample_context_length(100, 20, rng, eta=10.0) == 21
    assert sample_context_length(5, 20, rng, eta=10.0) == 4


def test_context_length_distribution():
    rng = np.random.default_rng(1)
    draws = np.array([sample_context_length(100, 20, rng) for _ in range(100_000)])
    assert draws.min() == 2
    assert draws.max() <= 21
    # eta <= 20/19 * 10 gives c = 20; the c = 21 endpoint needs eta exactly C/2
    assert (draws == 20).any()
    assert all(sample_context_length(3, 20, rng) == 2 for _ in range(1000))


def test_context_length_short_dialogue():
    with pytest.raises(InvalidDialogueError):
        sample_context_length(2, 20, np.random.default_rng(0))


# ---------- Test records ----------
def test_make_test_records_one_in_ten():
    dialogues = _corpus(30, n_turns=8)
    cfg = SplitConfig(negatives_per_positive=9, seed=5)
    records = make_test_records(dialogues, cfg)

    assert len(records) == 30
    for record, dialogue in zip(records, dialogues):
        texts = [t.text for t in dialogue.turns]
        context_turns = record.context.split(f" {EOS} ")
        c = len(context_turns)
        assert 2 <= c <= 7
        assert context_turns == texts[:c]
        assert record.true_response == texts[c]
        assert len(record.distractors) == 9
        assert record.true_response not in record.distractors
        assert [flag for _, flag in record.candidates].count(1) == 1


def test_make_test_records_deterministic():
    dialogues = _corpus(15)
    cfg = SplitConfig(negatives_per_positive=9, seed=11)
    assert make_test_records(dialogues, cfg) == make_test_records(dialogues, cfg)


def test_make_test_records_too_few_distractors():
    with pytest.raises(GenerationError):
        make_test_records(_corpus(5), SplitConfig(negatives_per_positive=9))


def test_make_test_records_shared_responses():
    # 3-turn dialogues always use turn 3 as the response; four texts, each used three times
    dialogues = [_dialogue(3, f"d{i % 4}") for i in range(12)]
    records = make_test_records(dialogues, SplitConfig(negatives_per_positive=3, seed=8))

    everything = {f"d{i} turn 3" for i in range(4)}
    for record in records:
        assert len(set(record.distractors)) == 3
        assert set(record.distractors) == everything - {record.true_response}

    with pytest.raises(GenerationError):
        make_test_records(dialogues, SplitConfig(negatives_per_positive=4))


# ---------- Training triples ----------
def test_training_triples_counts():
    triples = make_training_triples([_dialogue(10, "x"), _dialogue(3, "y")], SplitConfig(seed=2))
    positives = [t for t in triples if t.flag == 1]
    negatives = [t for t in triples if t.flag == 0]
    assert len(positives) == 8 + 1
    assert len(negatives) == len(positives)
    assert Counter(t.response.split()[0] for t in positives) == Counter({"x": 8, "y": 1})


def test_training_triples_contexts_and_negatives():
    dialogue = _dialogue(6, "x")
    triples = make_training_triples([dialogue, _dialogue(4, "y")], SplitConfig(seed=4))
    texts = [t.text for t in dialogue.turns]
    by_context = {}
    for t in triples:
        by_context.setdefault(t.context, []).append(t)

    for i in range(3, 7):
        context = f" {EOS} ".join(texts[: i - 1])
        pair = sorted(by_context[context], key=lambda t: -t.flag)
        assert [t.flag for t in pair] == [1, 0]
        assert pair[0].response == texts[i - 1]
        assert pair[1].response != pair[0].response


def test_training_triples_need_two_responses():
    with pytest.raises(GenerationError):
        make_training_triples([_dialogue(3, "x")], SplitConfig())


def test_triple_flag_validation():
    with pytest.raises(ValueError):
        Triple("c", "r", 2)
