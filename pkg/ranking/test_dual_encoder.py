import math

import numpy as np
import pytest

from pipeline.errors import CheckpointError, ConfigError, FitError, TrainingError
from pipeline.preprocess import build_vocab
from pipeline.triples import Triple
from ranking.dual_encoder import (
    DualEncoderRanker,
    TrainConfig,
    encode_batch,
    encode_sequence,
    init_params,
    load_checkpoint,
    load_word_vectors,
    loss_and_grads,
    predict,
    save_checkpoint,
    score_pair,
    train,
    validation_split,
    write_history,
)
from ranking.evaluation import evaluate_ranker


def _params(cell, vocab_size=7, hidden=5, emb=4, seed=0, jitter=0.0):
    cfg = TrainConfig(cell=cell, hidden=hidden, embedding_dim=emb, seed=seed)
    rng = np.random.default_rng(seed)
    params = init_params(vocab_size, cfg, rng)
    if jitter:
        for tensor in params.tensors().values():
            tensor += rng.normal(scale=jitter, size=tensor.shape)
    return params, cfg


TINY_TRIPLES = [
    Triple("my raid is broken __EOS__ which raid", "raid 5", 1),
    Triple("my raid is broken __EOS__ which raid", "try firefox", 0),
    Triple("firefox crashes", "try safe mode", 1),
    Triple("firefox crashes", "raid 5", 0),
]


# ---------- Encoding ----------
def test_empty_sequence_encodes_to_zero():
    params, _ = _params("lstm")
    assert np.array_equal(encode_sequence(params, []), np.zeros(5))


@pytest.mark.parametrize("cell", ["rnn", "lstm"])
def test_padding_does_not_change_encoding(cell):
    params, _ = _params(cell)
    short, long = [2, 3], [4, 5, 6, 2, 3]
    H, _ = encode_batch(params, [short, long])
    assert np.allclose(H[0], encode_sequence(params, short), atol=1e-12)
    assert np.allclose(H[1], encode_sequence(params, long), atol=1e-12)


def test_shared_encoder_for_context_and_response():
    params, _ = _params("rnn")
    a, b = [2, 3, 4], [5, 6]
    H_ab, _ = encode_batch(params, [a, b])
    H_ba, _ = encode_batch(params, [b, a])
    assert np.allclose(H_ab[0], H_ba[1], atol=1e-12)
    assert np.allclose(H_ab[1], H_ba[0], atol=1e-12)


def test_encoding_is_order_sensitive():
    params, _ = _params("lstm", jitter=0.3)
    assert not np.allclose(encode_sequence(params, [2, 3, 4]), encode_sequence(params, [4, 3, 2]))


# ---------- Scoring and loss ----------
def test_score_pair_values():
    params, _ = _params("rnn", hidden=2)
    e1 = np.array([1.0, 0.0])
    assert score_pair(params, e1, e1) == pytest.approx(0.7310585786)
    params.M[...] = 0.0
    assert score_pair(params, e1, e1) == 0.5


def test_loss_at_half_probability():
    params, _ = _params("rnn")
    params.M[...] = 0.0
    loss, grads = loss_and_grads(params, [[2, 3], [4]], [[5], [6, 2]], [1, 0])
    # ln 2 per example; the reported loss is the batch mean
    assert loss == pytest.approx(math.log(2))
    assert grads["b"][0] == pytest.approx(0.0)


def _check_gradients(params, contexts, responses, flags, l2):
    _, analytic = loss_and_grads(params, contexts, responses, flags, l2=l2)
    eps = 1e-6
    for name, tensor in params.tensors().items():
        for index in np.ndindex(tensor.shape):
            saved = tensor[index]
            tensor[index] = saved + eps
            up, _ = loss_and_grads(params, contexts, responses, flags, l2=l2)
            tensor[index] = saved - eps
            down, _ = loss_and_grads(params, contexts, responses, flags, l2=l2)
            tensor[index] = saved
            numeric = (up - down) / (2 * eps)
            a = analytic[name][index]
            assert abs(a - numeric) <= 1e-4 * max(abs(a), abs(numeric)) + 1e-8, (name, index, a, numeric)


@pytest.mark.parametrize("cell", ["rnn", "lstm"])
def test_gradients_match_finite_differences(cell):
    params, _ = _params(cell, vocab_size=7, hidden=5, emb=4, seed=3, jitter=0.4)
    contexts = [[2, 3, 4, 5, 6], [3, 1], [6]]
    responses = [[4, 2], [5, 5, 6, 3], []]
    _check_gradients(params, contexts, responses, [1, 0, 1], l2=0.1)


def test_non_finite_loss_raises():
    params, _ = _params("rnn")
    params.M[...] = np.nan
    with pytest.raises(TrainingError) as info:
        loss_and_grads(params, [[2]], [[3]], [1], batch_id=7)
    assert info.value.batch_id == 7


def test_l2_penalty_covers_only_bilinear_terms():
    params, _ = _params("lstm", seed=4, jitter=0.3)
    contexts, responses, flags = [[2, 3], [4, 5, 6]], [[5], [2, 3]], [1, 0]
    plain_loss, plain = loss_and_grads(params, contexts, responses, flags, l2=0.0)
    loss, grads = loss_and_grads(params, contexts, responses, flags, l2=0.5)

    penalty = 0.25 * (np.sum(params.M ** 2) + np.sum(params.b ** 2))
    assert loss == pytest.approx(plain_loss + penalty)
    assert np.allclose(grads["M"], plain["M"] + 0.5 * params.M)
    assert np.allclose(grads["b"], plain["b"] + 0.5 * params.b)
    for name in set(grads) - {"M", "b"}:
        assert np.array_equal(grads[name], plain[name]), name


# ---------- Prediction ----------
def test_predict_ties_by_index():
    params, _ = _params("rnn")
    ranked = predict(params, [2, 3], [[4], [5, 6], [4]])
    assert len(ranked) == 3
    positions = [i for i, _ in ranked]
    assert positions.index(0) < positions.index(2)
    assert predict(params, [2], []) == []


def test_predict_probabilities_descend():
    params, _ = _params("lstm", jitter=0.3)
    ranked = predict(params, [2, 3, 4], [[5], [6, 2], [3], [4, 4]])
    probs = [p for _, p in ranked]
    assert probs == sorted(probs, reverse=True)
    assert all(0.0 < p < 1.0 for p in probs)


# ---------- Training ----------
def test_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(cell="gru")
    with pytest.raises(ConfigError):
        TrainConfig(batch_size=0)
    assert TrainConfig(cell="rnn").hidden == 50
    assert TrainConfig(cell="lstm").hidden == 200


def test_zero_epochs_returns_initialisation():
    cfg = TrainConfig(cell="rnn", hidden=4, embedding_dim=3, epochs=0, seed=9)
    result = train(TINY_TRIPLES, cfg, show_progress=False)
    expected = init_params(len(result.vocab), cfg, np.random.default_rng(9))
    for name, tensor in result.params.tensors().items():
        assert np.array_equal(tensor, expected.tensors()[name]), name
    assert result.history == []


def test_training_is_deterministic():
    cfg = TrainConfig(cell="lstm", hidden=4, embedding_dim=3, epochs=2, batch_size=2, seed=5)
    first = train(TINY_TRIPLES, cfg, show_progress=False)
    second = train(TINY_TRIPLES, cfg, show_progress=False)
    for name, tensor in first.params.tensors().items():
        assert np.array_equal(tensor, second.params.tensors()[name]), name
    assert [h.loss for h in first.history] == [h.loss for h in second.history]


def test_training_updates_embeddings():
    cfg = TrainConfig(cell="rnn", hidden=4, embedding_dim=3, epochs=1, batch_size=4, seed=1, learning_rate=0.01)
    before = train(TINY_TRIPLES, TrainConfig(**{**vars(cfg), "epochs": 0}), show_progress=False)
    after = train(TINY_TRIPLES, cfg, show_progress=False)
    raid = after.vocab.lookup("raid")
    assert not np.array_equal(before.params.E[raid], after.params.E[raid])


def test_training_needs_triples():
    with pytest.raises(FitError):
        train([], TrainConfig(cell="rnn", hidden=4, embedding_dim=3, epochs=1), show_progress=False)


def test_validation_split_holds_out_contexts():
    train_set, records = validation_split(TINY_TRIPLES, 0.5, np.random.default_rng(0))
    held_out = {r.context for r in records}
    assert len(held_out) == 1
    assert all(t.context not in held_out for t in train_set)
    assert len(train_set) == 2
    assert len(records[0].distractors) == 1


def test_history_file(tmp_path):
    cfg = TrainConfig(cell="rnn", hidden=4, embedding_dim=3, epochs=2, seed=1)
    result = train(TINY_TRIPLES, cfg, show_progress=False)
    path = tmp_path / "history.csv"
    write_history(result.history, path)
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "epoch,loss"
    assert len(lines) == 3


# ---------- Word vectors ----------
def test_word_vectors_replace_rows(tmp_path):
    vocab = build_vocab([["raid", "disk", "usb"]])
    E = np.zeros((len(vocab), 3))
    path = tmp_path / "vectors.txt"
    path.write_text("2 3\nraid 1 2 3\nzebra 4 5 6\nusb 0.5 0.5 0.5\n", encoding="utf-8")
    assert load_word_vectors(path, vocab, E) == 2
    assert np.array_equal(E[vocab.lookup("raid")], [1.0, 2.0, 3.0])
    assert np.array_equal(E[vocab.lookup("disk")], np.zeros(3))


def test_word_vectors_dimension_mismatch(tmp_path):
    vocab = build_vocab([["raid"]])
    path = tmp_path / "vectors.txt"
    path.write_text("raid 1 2\n", encoding="utf-8")
    with pytest.raises(CheckpointError):
        load_word_vectors(path, vocab, np.zeros((len(vocab), 3)))


# ---------- Checkpoints ----------
@pytest.mark.parametrize("cell", ["rnn", "lstm"])
def test_checkpoint_reload_is_exact(tmp_path, cell):
    cfg = TrainConfig(cell=cell, hidden=4, embedding_dim=3, epochs=1, batch_size=2, seed=2)
    result = train(TINY_TRIPLES, cfg, show_progress=False)
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, result.params, result.vocab, cfg)

    params, vocab, loaded_cfg = load_checkpoint(path)
    assert vocab.tokens == result.vocab.tokens
    assert loaded_cfg.cell == cell and loaded_cfg.hidden == 4
    for name, tensor in result.params.tensors().items():
        assert np.array_equal(params.tensors()[name], tensor), name

    ranker = DualEncoderRanker.from_result(result)
    reloaded = DualEncoderRanker.load(path)
    candidates = ["raid 5", "try firefox", "try safe mode"]
    assert reloaded.rank("firefox crashes", candidates) == ranker.rank("firefox crashes", candidates)


def test_checkpoint_bad_format(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_text("format=something-else\nvocab 0\n", encoding="utf-8")
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_checkpoint_truncated(tmp_path):
    cfg = TrainConfig(cell="rnn", hidden=3, embedding_dim=2, epochs=0)
    result = train(TINY_TRIPLES, cfg, show_progress=False)
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, result.params, result.vocab, cfg)
    text = path.read_text(encoding="utf-8")
    path.write_text(text[: text.index("tensor M")], encoding="utf-8")
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


# ---------- Keyword benchmark ----------
@pytest.mark.slow
def test_lstm_learns_keyword_task(keyword_task):
    cfg = TrainConfig(cell="lstm", hidden=32, embedding_dim=32, learning_rate=0.01, epochs=30, seed=3)
    result = train(keyword_task.train, cfg, show_progress=False)
    losses = [h.loss for h in result.history]
    assert all(later < earlier for earlier, later in zip(losses[:4], losses[1:5]))

    ranker = DualEncoderRanker.from_result(result)
    assert evaluate_ranker(ranker, keyword_task.test_pairs).recall_at_1 >= 0.95
    assert evaluate_ranker(ranker, keyword_task.test).recall_at_1 >= 0.80
