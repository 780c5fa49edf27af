import math

import numpy as np
import pytest

from pipeline.errors import CheckpointError, FitError
from pipeline.triples import Triple
from ranking.tfidf_ranker import IdfTable, TfidfRanker, fit_idf, rank_responses, vectorize


def test_fit_idf_values():
    idf = fit_idf([["a", "b"], ["a", "c"], ["a", "b"], ["a", "d"]])
    assert idf.n_documents == 4
    assert idf.get("a") == 0.0
    assert idf.get("b") == pytest.approx(math.log(2))
    assert idf.get("c") == pytest.approx(math.log(4))
    assert idf.get("unseen") == 0.0


def test_fit_idf_empty():
    with pytest.raises(FitError):
        fit_idf([])


def test_fit_idf_documents_without_tokens():
    idf = fit_idf([[], []])
    assert idf.n_documents == 2 and len(idf) == 0
    assert rank_responses(vectorize([["a"]], idf), vectorize([["a"], []], idf)) == [(0, 0.0), (1, 0.0)]


def test_vectorize():
    idf = IdfTable({"raid": math.log(2), "the": 0.0}, n_documents=4)
    vectors = vectorize([["raid", "raid", "raid", "the", "new"], []], idf)
    assert vectors.shape == (2, 2)
    assert vectors[0, idf.vocabulary["raid"]] == pytest.approx(3 * math.log(2))
    assert vectors[0, idf.vocabulary["the"]] == 0.0
    assert vectors[1].nnz == 0


def test_rank_by_shared_tokens():
    idf = IdfTable({t: 1.0 for t in "pqrst"}, n_documents=5)
    context = vectorize([["p", "q"]], idf)
    candidates = vectorize([["s"], ["p", "r"], ["p", "q"], []], idf)
    ranked = rank_responses(context, candidates)
    assert [i for i, _ in ranked] == [2, 1, 0, 3]
    assert ranked[0][1] == pytest.approx(1.0)
    assert ranked[2][1] == ranked[3][1] == 0.0


def test_scaling_keeps_ranking():
    rng = np.random.default_rng(3)
    idf = IdfTable({f"t{i}": float(rng.uniform(0.1, 2)) for i in range(10)}, n_documents=10)
    docs = [[f"t{j}" for j in rng.integers(10, size=6)] for _ in range(8)]
    context = vectorize(docs[:1], idf)
    candidates = vectorize(docs[1:], idf)
    scaled = candidates * 7.5
    assert [i for i, _ in rank_responses(context, candidates)] == [i for i, _ in rank_responses(context, scaled)]


def _dense_ranking(docs, query_index):
    vocab = sorted({t for d in docs for t in d})
    tf = np.array([[d.count(t) for t in vocab] for d in docs], dtype=np.float64)
    df = (tf > 0).sum(axis=0)
    weights = tf * np.log(len(docs) / df)
    norms = np.linalg.norm(weights, axis=1)
    q = weights[query_index]
    scores = []
    for i in range(len(docs)):
        denom = norms[i] * norms[query_index]
        scores.append(float(weights[i] @ q / denom) if denom > 0 else 0.0)
    return sorted(range(len(docs)), key=lambda i: (-round(scores[i], 12), i))


def test_matches_dense_oracle():
    rng = np.random.default_rng(42)
    for _ in range(100):
        vocab_size = int(rng.integers(3, 51))
        docs = [
            [f"w{j}" for j in rng.integers(vocab_size, size=int(rng.integers(1, 12)))]
            for _ in range(int(rng.integers(2, 21)))
        ]
        idf = fit_idf(docs)
        vectors = vectorize(docs, idf)
        query = int(rng.integers(len(docs)))
        ranked = rank_responses(vectors[query:query + 1], vectors)
        assert [i for i, _ in ranked] == _dense_ranking(docs, query)
        assert all(0.0 <= s <= 1.0 + 1e-12 for _, s in ranked)


def test_idf_table_save_load(tmp_path):
    idf = fit_idf([["a", "b"], ["b", "c"], ["c"]])
    path = tmp_path / "idf.tsv"
    idf.save(path)
    loaded = IdfTable.load(path)
    assert loaded == idf
    assert path.read_text(encoding="utf-8").startswith("#N\t3\n")


def test_idf_table_bad_file(tmp_path):
    path = tmp_path / "bad.tsv"
    path.write_text("token\t1.0\n", encoding="utf-8")
    with pytest.raises(CheckpointError):
        IdfTable.load(path)


def test_ranker_uses_distinct_positive_contexts():
    triples = [
        Triple("raid drives __EOS__ move", "no", 1),
        Triple("raid drives __EOS__ move", "yes", 0),
        Triple("raid drives __EOS__ move", "maybe", 1),
        Triple("usb enclosure", "copy", 1),
        Triple("never fitted", "x", 0),
    ]
    ranker = TfidfRanker.from_triples(triples)
    assert ranker.idf.n_documents == 2
    assert "__eos__" not in ranker.idf.weights and "__EOS__" not in ranker.idf.weights
    ranked = ranker.rank("can I move the raid drives", ["copy via usb", "the raid is fine", "move raid drives"])
    assert ranked[0][0] == 2
