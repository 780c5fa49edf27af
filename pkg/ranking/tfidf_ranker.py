"""
TF-IDF ranker
Scores each candidate response by the cosine similarity of its tf-idf vector
with the context's. idf = ln(N / df) over the distinct training contexts.

Counting goes through sklearn's CountVectorizer; the idf itself is computed
here because TfidfVectorizer always adds 1 to it.
"""

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Dict, Iterable, List, Sequence, Tuple

import numpy as np
from scipy import sparse
from sklearn.feature_extraction.text import CountVectorizer
from sklearn.metrics.pairwise import cosine_similarity

from pipeline.corpus_files import atomic_path
from pipeline.errors import CheckpointError, FitError
from pipeline.preprocess import sequence_tokens
from pipeline.triples import Triple

logger = logging.getLogger(__name__)

SCORE_DECIMALS = 12
Analyzer = Callable[..., List[str]]


def token_list(tokens: Sequence[str]) -> List[str]:
    return list(tokens)


def text_tokens(text: str) -> List[str]:
    return sequence_tokens(text, keep_eos=False)


def _counter(analyzer: Analyzer, **kwargs) -> CountVectorizer:
    return CountVectorizer(analyzer=analyzer, lowercase=False, token_pattern=None, **kwargs)


@dataclass(frozen=True)
class IdfTable:
    weights: Dict[str, float] = field(default_factory=dict)
    n_documents: int = 0

    def __len__(self) -> int:
        return len(self.weights)

    def get(self, token: str) -> float:
        return self.weights.get(token, 0.0)

    @cached_property
    def vocabulary(self) -> Dict[str, int]:
        """token -> column, in sorted token order"""
        return {token: i for i, token in enumerate(sorted(self.weights))}

    @cached_property
    def diagonal(self) -> sparse.spmatrix:
        return sparse.diags(np.array([self.weights[t] for t in self.vocabulary]), format="csr")

    def save(self, path) -> None:
        with atomic_path(path) as tmp:
            with open(tmp, "w", encoding="utf-8", newline="\n") as f:
                f.write(f"#N\t{self.n_documents}\n")
                for token in sorted(self.weights):
                    f.write(f"{token}\t{self.weights[token]:.17g}\n")
        logger.info(f"Saved idf table ({len(self.weights)} tokens, N={self.n_documents}) to {path}")

    @classmethod
    def load(cls, path) -> "IdfTable":
        with open(path, "r", encoding="utf-8") as f:
            lines = f.read().splitlines()
        if not lines or not lines[0].startswith("#N\t"):
            raise CheckpointError(f"{path}: not an idf table (missing #N header)")
        try:
            n_documents = int(lines[0].split("\t", 1)[1])
            weights = {}
            for ln in lines[1:]:
                if not ln:
                    continue
                token, value = ln.rsplit("\t", 1)
                weights[token] = float(value)
        except ValueError as e:
            raise CheckpointError(f"{path}: malformed idf table ({e})") from e
        return cls(weights=weights, n_documents=n_documents)


# ---------- Fit / vectorize ----------
def fit_idf(documents: Iterable, analyzer: Analyzer = token_list) -> IdfTable:
    """idf(w) = ln(N / df(w)); documents are token sequences unless another analyzer is given"""
    documents = list(documents)
    if not documents:
        raise FitError("Cannot fit idf weights on an empty corpus")

    counter = _counter(analyzer, binary=True)
    try:
        presence = counter.fit_transform(documents)
    except ValueError:
        # sklearn refuses an empty vocabulary: every document had no tokens
        logger.info(f"Fitted idf over {len(documents)} documents (no tokens)")
        return IdfTable(weights={}, n_documents=len(documents))

    df = np.asarray(presence.sum(axis=0)).ravel()
    idf = np.log(len(documents) / df)
    weights = dict(zip(counter.get_feature_names_out().tolist(), idf.tolist()))
    logger.info(f"Fitted idf over {len(documents)} documents ({len(weights)} tokens)")
    return IdfTable(weights=weights, n_documents=len(documents))


def vectorize(documents: Iterable, idf: IdfTable, analyzer: Analyzer = token_list) -> sparse.csr_matrix:
    """One tf-idf row per document; tokens outside the idf table weigh 0"""
    documents = list(documents)
    if not documents or not idf.weights:
        return sparse.csr_matrix((len(documents), len(idf)))
    counts = _counter(analyzer, vocabulary=idf.vocabulary).transform(documents)
    return sparse.csr_matrix(counts @ idf.diagonal)


def rank_responses(context: sparse.spmatrix, candidates: sparse.spmatrix) -> List[Tuple[int, float]]:
    """(candidate index, score) by descending cosine; ties by ascending index"""
    n = candidates.shape[0]
    if n == 0:
        return []
    if candidates.shape[1] == 0:
        scores = np.zeros(n)
    else:
        scores = cosine_similarity(context, candidates)[0]
    scored = [(i, float(s)) for i, s in enumerate(scores)]
    return sorted(scored, key=lambda s: (-round(s[1], SCORE_DECIMALS), s[0]))


# ---------- Ranker ----------
class TfidfRanker:
    name = "tfidf"

    def __init__(self, idf: IdfTable):
        self.idf = idf

    @classmethod
    def fit(cls, contexts: Iterable[str]) -> "TfidfRanker":
        return cls(fit_idf(dict.fromkeys(contexts), analyzer=text_tokens))

    @classmethod
    def from_triples(cls, triples: Sequence[Triple]) -> "TfidfRanker":
        return cls.fit(t.context for t in triples if t.flag == 1)

    def vectors(self, texts: Sequence[str]) -> sparse.csr_matrix:
        return vectorize(texts, self.idf, analyzer=text_tokens)

    def rank(self, context: str, candidates: Sequence[str]) -> List[Tuple[int, float]]:
        return rank_responses(self.vectors([context]), self.vectors(candidates))
