"""
On-disk formats: corpus TSV, triples CSVs, participant names
All writes go through a temp file in the target directory and os.replace.
"""

import os
import logging
import tempfile
from contextlib import contextmanager
from datetime import date
from pathlib import Path
from typing import Iterable, Iterator, List, Sequence

import pandas as pd

from .disentangle import Dialogue, Turn
from .log_ingest import format_clock, parse_clock
from .triples import TestRecord, Triple

logger = logging.getLogger(__name__)

CORPUS_COLUMNS = ["dialogue_id", "turn_index", "date", "time", "sender", "recipient", "text"]
TRAIN_COLUMNS = ["context", "response", "flag"]


@contextmanager
def atomic_path(path) -> Iterator[str]:
    """Yield a temp path next to `path`; it replaces `path` only if the block succeeds"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    os.close(fd)
    try:
        yield tmp
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.remove(tmp)


def _write_frame(df: pd.DataFrame, path, sep: str = ",") -> None:
    with atomic_path(path) as tmp:
        df.to_csv(tmp, sep=sep, index=False, lineterminator="\n", encoding="utf-8")


def _read_frame(path, sep: str = ",") -> pd.DataFrame:
    return pd.read_csv(path, sep=sep, dtype=str, keep_default_na=False, encoding="utf-8")


def _one_line(text: str) -> str:
    return " ".join(text.replace("\t", " ").splitlines()) if text else ""


# ---------- Corpus TSV ----------
def write_corpus(dialogues: Sequence[Dialogue], path) -> None:
    rows = []
    for dialogue in dialogues:
        for idx, turn in enumerate(dialogue.turns):
            rows.append({
                "dialogue_id": dialogue.id,
                "turn_index": idx,
                "date": turn.day.isoformat(),
                "time": format_clock(turn.time),
                "sender": turn.sender,
                "recipient": turn.recipient or "",
                "text": _one_line(turn.text),
            })
    _write_frame(pd.DataFrame(rows, columns=CORPUS_COLUMNS), path, sep="\t")
    logger.info(f"Wrote {len(dialogues)} dialogues ({len(rows)} turns) to {path}")


def read_corpus(path) -> List[Dialogue]:
    df = _read_frame(path, sep="\t")
    missing = [c for c in CORPUS_COLUMNS if c not in df.columns]
    if missing:
        raise ValueError(f"{path}: not a corpus file, missing columns {missing}")

    dialogues: List[Dialogue] = []
    for dialogue_id, group in df.groupby("dialogue_id", sort=False):
        group = group.sort_values("turn_index", key=lambda s: s.astype(int), kind="stable")
        turns = [
            Turn(
                day=date.fromisoformat(row.date),
                time=parse_clock(row.time, row.time),
                sender=row.sender,
                recipient=row.recipient or None,
                text=row.text,
            )
            for row in group.itertuples(index=False)
        ]
        senders = list(dict.fromkeys(t.sender for t in turns))
        other = senders[1] if len(senders) > 1 else (turns[0].recipient or "")
        dialogues.append(Dialogue(
            id=dialogue_id,
            participants=(senders[0], other),
            turns=turns,
            source=("", turns[0].day),
            utterance_count=len(turns),
        ))
    logger.debug(f"Read {len(dialogues)} dialogues from {path}")
    return dialogues


# ---------- Triples ----------
def write_triples(triples: Sequence[Triple], path) -> None:
    df = pd.DataFrame([(t.context, t.response, t.flag) for t in triples], columns=TRAIN_COLUMNS)
    _write_frame(df, path)
    logger.info(f"Wrote {len(triples)} training triples to {path}")


def read_triples(path) -> List[Triple]:
    df = _read_frame(path)
    if list(df.columns[:3]) != TRAIN_COLUMNS:
        raise ValueError(f"{path}: expected columns {TRAIN_COLUMNS}, got {list(df.columns)}")
    return [Triple(row.context, row.response, int(row.flag)) for row in df.itertuples(index=False)]


def write_test_records(records: Sequence[TestRecord], path) -> None:
    k = max((len(r.distractors) for r in records), default=1)
    columns = ["context", "true_response"] + [f"distractor_{i}" for i in range(1, k + 1)]
    df = pd.DataFrame([[r.context, r.true_response] + list(r.distractors) for r in records], columns=columns)
    _write_frame(df, path)
    logger.info(f"Wrote {len(records)} test records (1 in {k + 1}) to {path}")


def read_test_records(path) -> List[TestRecord]:
    df = _read_frame(path)
    if list(df.columns[:2]) != ["context", "true_response"]:
        raise ValueError(f"{path}: expected context,true_response,distractor_1.. columns")
    distractor_columns = [c for c in df.columns if c.startswith("distractor_")]
    return [
        TestRecord(row["context"], row["true_response"], [row[c] for c in distractor_columns])
        for _, row in df.iterrows()
    ]


# ---------- Names ----------
def corpus_names(dialogues: Iterable[Dialogue]) -> List[str]:
    names = {p for d in dialogues for p in d.participants if p}
    return sorted(names, key=lambda n: (n.lower(), n))


def names_path(corpus_path) -> Path:
    corpus_path = Path(corpus_path)
    return corpus_path.with_name(corpus_path.name + ".names.txt")


def write_names(names: Sequence[str], path) -> None:
    with atomic_path(path) as tmp:
        with open(tmp, "w", encoding="utf-8", newline="\n") as f:
            f.writelines(f"{n}\n" for n in names)
