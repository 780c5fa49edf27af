"""
Corpus statistics: sizes, turn-count histogram and its log-log slope
Word counts use the preprocess tokenizer.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence

import numpy as np
import pandas as pd

from pipeline.corpus_files import atomic_path
from pipeline.disentangle import Dialogue
from pipeline.preprocess import tokenize

logger = logging.getLogger(__name__)

MINUTES_PER_DAY = 24 * 60


@dataclass
class CorpusStats:
    n_dialogues: int = 0
    n_utterances: int = 0
    n_words: int = 0
    min_turns: int = 0
    avg_turns: float = 0.0
    avg_words_per_utterance: float = 0.0
    median_duration_mins: float = 0.0
    histogram: Dict[int, int] = field(default_factory=dict)
    loglog_slope: Optional[float] = None


def dialogue_duration(dialogue: Dialogue) -> int:
    """Minutes from the first turn to the last"""
    first, last = dialogue.turns[0], dialogue.turns[-1]
    return (last.day - first.day).days * MINUTES_PER_DAY + last.time - first.time


def loglog_slope(histogram: Dict[int, int]) -> Optional[float]:
    """Least-squares slope of log(count) against log(turns); None with fewer than two points"""
    if len(histogram) < 2:
        return None
    turns = np.array(sorted(histogram), dtype=np.float64)
    counts = np.array([histogram[int(t)] for t in turns], dtype=np.float64)
    slope, _ = np.polyfit(np.log(turns), np.log(counts), 1)
    return float(slope)


def corpus_stats(dialogues: Sequence[Dialogue]) -> CorpusStats:
    dialogues = [d for d in dialogues if d.turns]
    if not dialogues:
        return CorpusStats()

    turns = pd.Series([len(d.turns) for d in dialogues])
    words = pd.Series([len(tokenize(t.text)) for d in dialogues for t in d.turns])
    durations = np.array([dialogue_duration(d) for d in dialogues], dtype=np.float64)
    histogram = {int(k): int(v) for k, v in turns.value_counts().sort_index().items()}

    stats = CorpusStats(
        n_dialogues=len(dialogues),
        n_utterances=int(turns.sum()),
        n_words=int(words.sum()),
        min_turns=int(turns.min()),
        avg_turns=float(turns.mean()),
        avg_words_per_utterance=float(words.mean()),
        median_duration_mins=float(np.median(durations)),
        histogram=histogram,
        loglog_slope=loglog_slope(histogram),
    )
    logger.info(f"Corpus: {stats.n_dialogues} dialogues, {stats.n_utterances} turns, {stats.n_words} words")
    return stats


def format_stats(stats: CorpusStats) -> str:
    slope = f"{stats.loglog_slope:.4f}" if stats.loglog_slope is not None else "n/a"
    rows = [
        ("dialogues", f"{stats.n_dialogues}"),
        ("utterances", f"{stats.n_utterances}"),
        ("words", f"{stats.n_words}"),
        ("min turns per dialogue", f"{stats.min_turns}"),
        ("avg turns per dialogue", f"{stats.avg_turns:.2f}"),
        ("avg words per utterance", f"{stats.avg_words_per_utterance:.2f}"),
        ("median duration (min)", f"{stats.median_duration_mins:g}"),
        ("log-log histogram slope", slope),
    ]
    return "\n".join(f"{name:<26}{value}" for name, value in rows)


def write_histogram(stats: CorpusStats, path) -> None:
    df = pd.DataFrame(sorted(stats.histogram.items()), columns=["turns", "count"])
    with atomic_path(path) as tmp:
        df.to_csv(tmp, index=False, lineterminator="\n")
