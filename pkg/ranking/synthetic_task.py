"""
Keyword-copy benchmark

Every example has one keyword that ends both the context and its true
response. Context and response filler words come from disjoint vocabularies,
so the keyword is the only token a context shares with its true response and
no distractor carries that keyword.
"""

import logging
from dataclasses import dataclass, field
from typing import List

import numpy as np

from pipeline.triples import EOS_SEPARATOR, TestRecord, Triple

logger = logging.getLogger(__name__)

KEYWORDS = [f"key{i:02d}" for i in range(40)]
CONTEXT_FILLERS = [f"ctx{i:02d}" for i in range(30)]
RESPONSE_FILLERS = [f"rsp{i:02d}" for i in range(30)]


@dataclass
class SyntheticTask:
    train: List[Triple] = field(default_factory=list)
    test: List[TestRecord] = field(default_factory=list)  # 1 in 10

    @property
    def test_pairs(self) -> List[TestRecord]:
        """The 1-in-2 view: true response against the first distractor"""
        return [TestRecord(r.context, r.true_response, r.distractors[:1]) for r in self.test]


def _words(rng: np.random.Generator, vocab: List[str], low: int, high: int) -> List[str]:
    return [vocab[i] for i in rng.integers(len(vocab), size=int(rng.integers(low, high + 1)))]


def make_context(keyword: str, rng: np.random.Generator) -> str:
    utterances = [" ".join(_words(rng, CONTEXT_FILLERS, 2, 5)) for _ in range(int(rng.integers(1, 3)))]
    utterances.append(" ".join(_words(rng, CONTEXT_FILLERS, 1, 4) + [keyword]))
    return EOS_SEPARATOR.join(utterances)


def make_response(keyword: str, rng: np.random.Generator) -> str:
    return " ".join(_words(rng, RESPONSE_FILLERS, 1, 4) + [keyword])


def _other_keywords(keyword: str, k: int, rng: np.random.Generator) -> List[str]:
    others = [w for w in KEYWORDS if w != keyword]
    return [others[i] for i in rng.choice(len(others), size=k, replace=k > len(others))]


def make_synthetic_task(n_train: int = 2000, n_test: int = 200, negatives: int = 9, seed: int = 1234) -> SyntheticTask:
    """n_train triples (half true, half false) and n_test records with `negatives` distractors"""
    rng = np.random.default_rng(seed)
    task = SyntheticTask()

    for i in range(n_train // 2):
        keyword = KEYWORDS[i % len(KEYWORDS)]
        context = make_context(keyword, rng)
        task.train.append(Triple(context, make_response(keyword, rng), 1))
        wrong = _other_keywords(keyword, 1, rng)[0]
        task.train.append(Triple(context, make_response(wrong, rng), 0))
    order = rng.permutation(len(task.train))
    task.train = [task.train[i] for i in order]

    for _ in range(n_test):
        keyword = KEYWORDS[int(rng.integers(len(KEYWORDS)))]
        task.test.append(TestRecord(
            make_context(keyword, rng),
            make_response(keyword, rng),
            [make_response(w, rng) for w in _other_keywords(keyword, negatives, rng)],
        ))

    logger.info(f"Synthetic task: {len(task.train)} training triples, {len(task.test)} test records")
    return task
