"""
Recall@k evaluation of response rankers and the dataset-size learning curve
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Protocol, Sequence, Tuple

import numpy as np
import pandas as pd

from pipeline.corpus_files import atomic_path
from pipeline.triples import TestRecord, Triple

from .dual_encoder import DualEncoderRanker, TrainConfig, train
from .tfidf_ranker import TfidfRanker

logger = logging.getLogger(__name__)

DEFAULT_KS = (1, 2, 5)
REPORT_COLUMNS = ["model", "setting", "n_records", "recall_at_1", "recall_at_2", "recall_at_5"]


class Ranker(Protocol):
    name: str

    def rank(self, context: str, candidates: Sequence[str]) -> List[Tuple[int, float]]:
        ...


@dataclass
class RecallReport:
    model: str
    setting: str  # "1-in-2" | "1-in-10"
    n_records: int
    recall_at_1: Optional[float] = None
    recall_at_2: Optional[float] = None
    recall_at_5: Optional[float] = None

    def recall(self, k: int) -> Optional[float]:
        return getattr(self, f"recall_at_{k}", None)


@dataclass
class CurvePoint:
    fraction: float
    train_size: int
    recall_at_1: float


# ---------- Metrics ----------
def true_rank(ranked_flags: Sequence[int]) -> int:
    """1-based position of the flag-1 candidate"""
    return list(ranked_flags).index(1) + 1


def recall_at_k(records: Sequence[Sequence[int]], k: int) -> float:
    """Fraction of records (ranked candidate flags) whose true candidate is in the top k"""
    if not records:
        return 0.0
    hits = sum(1 for flags in records if true_rank(flags) <= k)
    return hits / len(records)


def ranked_flags(ranker: Ranker, record: TestRecord) -> List[int]:
    candidates = record.candidates
    ranked = ranker.rank(record.context, [text for text, _ in candidates])
    return [candidates[i][1] for i, _ in ranked]


def evaluate_ranker(ranker: Ranker, records: Sequence[TestRecord], ks: Sequence[int] = DEFAULT_KS) -> RecallReport:
    """R@k for every k smaller than the candidate count (so 1-in-2 reports R@1 only)"""
    n_candidates = len(records[0].candidates) if records else 2
    report = RecallReport(model=ranker.name, setting=f"1-in-{n_candidates}", n_records=len(records))
    flags = [ranked_flags(ranker, r) for r in records]
    for k in ks:
        if k < n_candidates and hasattr(report, f"recall_at_{k}"):
            setattr(report, f"recall_at_{k}", recall_at_k(flags, k))
    logger.info(f"{report.model} {report.setting}: R@1={report.recall_at_1} over {report.n_records} records")
    return report


def evaluate_all(ranker: Ranker, records: Sequence[TestRecord], ks: Sequence[int] = DEFAULT_KS) -> List[RecallReport]:
    """The file's own setting, plus 1-in-2 (true response vs. first distractor) when it has more candidates"""
    reports = []
    if records and len(records[0].distractors) > 1:
        pairwise = [TestRecord(r.context, r.true_response, r.distractors[:1]) for r in records]
        reports.append(evaluate_ranker(ranker, pairwise, ks))
    reports.append(evaluate_ranker(ranker, records, ks))
    return reports


# ---------- Learning curve ----------
def fit_ranker(model: str, triples: Sequence[Triple], cfg: Optional[TrainConfig] = None,
               word_vectors=None, show_progress: bool = False) -> Ranker:
    if model == "tfidf":
        return TfidfRanker.from_triples(triples)
    cfg = cfg or TrainConfig(cell=model)
    return DualEncoderRanker.from_result(train(triples, cfg, word_vectors=word_vectors, show_progress=show_progress))


def learning_curve(triples: Sequence[Triple],
                   records: Sequence[TestRecord],
                   fractions: Sequence[float],
                   model: str,
                   cfg: Optional[TrainConfig] = None,
                   seed: int = 1234) -> List[CurvePoint]:
    """Fit on nested prefixes of one seeded shuffle of the training triples; R@1 on a fixed test set"""
    order = np.random.default_rng(seed).permutation(len(triples))
    shuffled = [triples[i] for i in order]
    points = []
    for fraction in sorted(fractions):
        size = int(round(fraction * len(shuffled)))
        ranker = fit_ranker(model, shuffled[:size], cfg)
        report = evaluate_ranker(ranker, records, ks=(1,))
        points.append(CurvePoint(fraction, size, report.recall_at_1))
        logger.info(f"Learning curve {model}: {size} triples -> R@1 {report.recall_at_1:.4f}")
    return points


# ---------- Output ----------
def write_reports(reports: Sequence[RecallReport], path) -> None:
    df = pd.DataFrame([vars(r) for r in reports], columns=REPORT_COLUMNS)
    with atomic_path(path) as tmp:
        df.to_csv(tmp, index=False, lineterminator="\n", float_format="%.6f")


def format_reports(reports: Sequence[RecallReport]) -> str:
    lines = [f"{'model':<8}{'setting':<10}{'records':>9}{'R@1':>9}{'R@2':>9}{'R@5':>9}"]
    for r in reports:
        cells = "".join(f"{v:>9.4f}" if v is not None else f"{'-':>9}" for v in (r.recall_at_1, r.recall_at_2, r.recall_at_5))
        lines.append(f"{r.model:<8}{r.setting:<10}{r.n_records:>9}{cells}")
    return "\n".join(lines)


def write_curve(points: Sequence[CurvePoint], path) -> None:
    df = pd.DataFrame([vars(p) for p in points], columns=["fraction", "train_size", "recall_at_1"])
    with atomic_path(path) as tmp:
        df.to_csv(tmp, index=False, lineterminator="\n", float_format="%.6f")
