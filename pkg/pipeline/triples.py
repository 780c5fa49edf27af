"""
Train/test split and (context, response, flag) generation

Training: every turn from the 3rd on is a true response to the turns before
it, paired 1:1 with a random false response drawn from the other training
examples. Testing: one record per dialogue with a stochastic context length,
its next turn as the true response and k distractors from the rest of the
test set.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .disentangle import Dialogue
from .errors import ConfigError, GenerationError, InvalidDialogueError
from .preprocess import EOS, TextPreprocessor

logger = logging.getLogger(__name__)

EOS_SEPARATOR = f" {EOS} "


# ---------- Types ----------
@dataclass(frozen=True)
class Triple:
    context: str
    response: str
    flag: int

    def __post_init__(self):
        if self.flag not in (0, 1):
            raise ValueError(f"flag must be 0 or 1, got {self.flag!r}")


@dataclass
class TestRecord:
    """One test context with its true response and k distractors"""
    __test__ = False  # not a pytest class

    context: str
    true_response: str
    distractors: List[str] = field(default_factory=list)

    @property
    def candidates(self) -> List[Tuple[str, int]]:
        return [(self.true_response, 1)] + [(d, 0) for d in self.distractors]


@dataclass
class SplitConfig:
    test_fraction: float = 0.02
    seed: int = 1234
    negatives_per_positive: int = 1
    max_context_C: int = 20

    def __post_init__(self):
        if not 0 < self.test_fraction < 1:
            raise ConfigError(f"test_fraction must lie in (0, 1), got {self.test_fraction}")
        if self.negatives_per_positive < 1:
            raise ConfigError(f"negatives_per_positive must be >= 1, got {self.negatives_per_positive}")
        if self.max_context_C < 1:
            raise ConfigError(f"max_context_C must be >= 1, got {self.max_context_C}")


def join_context(turn_texts: Sequence[str]) -> str:
    return EOS_SEPARATOR.join(turn_texts)


def _texts(dialogue: Dialogue) -> List[str]:
    return [turn.text for turn in dialogue.turns]


# ---------- Split ----------
def split_corpus(dialogues: Sequence[Dialogue],
                 cfg: SplitConfig,
                 rng: Optional[np.random.Generator] = None) -> Tuple[List[Dialogue], List[Dialogue]]:
    """Seeded partition by whole dialogue; both halves keep corpus order"""
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    n = len(dialogues)
    n_test = int(round(cfg.test_fraction * n))
    test_idx = set(rng.permutation(n)[:n_test].tolist()) if n else set()

    train = [d for i, d in enumerate(dialogues) if i not in test_idx]
    test = [d for i, d in enumerate(dialogues) if i in test_idx]
    logger.info(f"Split {n} dialogues: {len(train)} train / {len(test)} test")
    return train, test


# ---------- Context length ----------
def sample_context_length(t: int, C: int, rng: np.random.Generator, eta: Optional[float] = None) -> int:
    """
    Number of context turns for a test record of a t-turn dialogue.

    eta ~ U[C/2, 10C], n = floor(10C / eta) + 2, c = min(t - 1, n - 1).
    Short contexts are favoured; with C=20, c lies in [2, min(t-1, 21)].
    Passing eta skips the draw.
    """
    if t < 3:
        raise InvalidDialogueError(f"Dialogue needs at least 3 turns for a test record, got {t}")
    if C < 1:
        raise ConfigError(f"C must be >= 1, got {C}")
    if eta is None:
        eta = rng.uniform(C / 2, 10 * C)
    n = math.floor(10 * C / eta) + 2
    return min(t - 1, n - 1)


# ---------- Test records ----------
def make_test_records(dialogues: Sequence[Dialogue],
                      cfg: SplitConfig,
                      rng: Optional[np.random.Generator] = None) -> List[TestRecord]:
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    k = cfg.negatives_per_positive

    pairs: List[Tuple[str, str]] = []
    for dialogue in dialogues:
        texts = _texts(dialogue)
        if len(texts) < 3:
            logger.warning(f"Skipping dialogue {dialogue.id}: {len(texts)} turns is too short for a test record")
            continue
        c = sample_context_length(len(texts), cfg.max_context_C, rng)
        if not texts[c]:
            logger.debug(f"Skipping dialogue {dialogue.id}: empty response at turn {c + 1}")
            continue
        pairs.append((join_context(texts[:c]), texts[c]))

    responses = list(dict.fromkeys(r for _, r in pairs))
    position = {r: i for i, r in enumerate(responses)}
    if pairs and len(responses) - 1 < k:
        raise GenerationError(
            f"Need {k} distractors but only {len(responses) - 1} distinct responses are available "
            f"({len(pairs)} test dialogues)"
        )

    records: List[TestRecord] = []
    for context, true_response in pairs:
        # draw from the pool with the true response's slot removed
        own = position[true_response]
        chosen = rng.choice(len(responses) - 1, size=k, replace=False)
        distractors = [responses[j + 1 if j >= own else j] for j in chosen]
        records.append(TestRecord(context, true_response, distractors))

    logger.info(f"Generated {len(records)} test records (1 in {k + 1})")
    return records


# ---------- Training triples ----------
def make_training_triples(dialogues: Sequence[Dialogue],
                          cfg: SplitConfig,
                          rng: Optional[np.random.Generator] = None) -> List[Triple]:
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)

    positives: List[Triple] = []
    for dialogue in dialogues:
        texts = _texts(dialogue)
        for i in range(3, len(texts) + 1):
            response = texts[i - 1]
            if not response:
                continue
            positives.append(Triple(join_context(texts[: i - 1]), response, 1))

    if not positives:
        logger.info("No training triples: every dialogue is shorter than 3 turns")
        return []
    if len({p.response for p in positives}) < 2:
        raise GenerationError("Negative sampling needs at least two distinct training responses")

    triples: List[Triple] = []
    n = len(positives)
    for k, positive in enumerate(positives):
        while True:
            j = int(rng.integers(n - 1))
            j = j + 1 if j >= k else j
            if positives[j].response != positive.response:
                break
        triples.append(positive)
        triples.append(Triple(positive.context, positives[j].response, 0))

    order = rng.permutation(len(triples))
    logger.info(f"Generated {len(triples)} training triples from {len(dialogues)} dialogues")
    return [triples[i] for i in order]


def preprocess_triples(triples: Sequence[Triple], preprocessor: TextPreprocessor) -> List[Triple]:
    return [Triple(preprocessor.context(t.context), preprocessor.utterance(t.response), t.flag) for t in triples]


def preprocess_records(records: Sequence[TestRecord], preprocessor: TextPreprocessor) -> List[TestRecord]:
    return [
        TestRecord(
            preprocessor.context(r.context),
            preprocessor.utterance(r.true_response),
            [preprocessor.utterance(d) for d in r.distractors],
        )
        for r in records
    ]
