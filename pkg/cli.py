"""
Command-line entry point for the dialogue corpus toolkit

  extract         chat logs -> dyadic dialogue corpus (TSV)
  stats           corpus statistics and turn histogram
  triples         corpus -> training triples and test records (CSV)
  train           fit a tfidf / rnn / lstm ranker
  evaluate        Recall@k of a ranker on a test file
  rank            rank candidate responses for one context
  learning-curve  R@1 against training-set size
  synth           write the keyword-copy benchmark files

Exit codes: 0 success, 1 validation error, 2 I/O error, 3 numeric failure.
"""

import sys
import argparse
import logging
from collections import Counter, defaultdict
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError
from tqdm import tqdm

import config
from pipeline.corpus_files import (
    corpus_names,
    names_path,
    read_corpus,
    read_test_records,
    read_triples,
    write_corpus,
    write_names,
    write_test_records,
    write_triples,
)
from pipeline.disentangle import ExtractionConfig, disentangle_channel, load_common_words
from pipeline.errors import ConfigError, DialogueToolkitError, TrainingError
from pipeline.log_ingest import read_channel_day, scan_log_tree
from pipeline.preprocess import TextPreprocessor
from pipeline.triples import (
    SplitConfig,
    make_test_records,
    make_training_triples,
    preprocess_records,
    preprocess_triples,
    split_corpus,
)
from ranking.corpus_stats import corpus_stats, format_stats, write_histogram
from ranking.dual_encoder import DualEncoderRanker, TrainConfig, train, write_history
from ranking.evaluation import evaluate_all, format_reports, learning_curve, write_curve, write_reports
from ranking.synthetic_task import make_synthetic_task
from ranking.tfidf_ranker import IdfTable, TfidfRanker

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_VALIDATION, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3


# ---------- Logging ----------
def setup_logging():
    handlers: List[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    if config.LOG_FILE:
        handlers.append(logging.FileHandler(config.LOG_FILE))
    logging.basicConfig(
        level=getattr(logging, config.LOG_LEVEL, logging.INFO),
        format="%(asctime)s - %(levelname)s - %(message)s",
        handlers=handlers,
    )


# ---------- Run configuration ----------
class RunConfig(BaseModel):
    """Validated command-line options; every subcommand reads the fields it needs"""
    model_config = ConfigDict(extra="ignore")

    command: str
    quiet: bool = False
    seed: int = config.DEFAULT_SEED
    workers: int = Field(default=config.MAX_WORKERS, ge=1)

    # extract
    logs: Optional[Path] = None
    window_mins: int = Field(default=config.WINDOW_MINS, ge=0)
    min_turns: int = Field(default=config.MIN_TURNS, ge=1)
    dominance_len: int = Field(default=config.DOMINANCE_LEN, ge=0)
    dominance_frac: float = Field(default=config.DOMINANCE_FRAC, gt=0, le=1)
    prev_days: int = Field(default=config.PREV_DAYS, ge=0)
    common_words: Path = Path(config.COMMON_WORDS_FILE)
    match_last_token: bool = False
    include_actions: bool = False
    strict: bool = False

    # files
    corpus: Optional[Path] = None
    out: Optional[Path] = None
    out_dir: Optional[Path] = None
    train: Optional[Path] = None
    test: Optional[Path] = None
    checkpoint: Optional[Path] = None
    report: Optional[Path] = None
    histogram: Optional[Path] = None
    log: Optional[Path] = None
    candidates: Optional[Path] = None
    context: Optional[str] = None

    # triples
    test_fraction: float = Field(default=config.TEST_FRACTION, gt=0, lt=1)
    negatives: Literal[1, 9] = config.NEGATIVES
    context_max: int = Field(default=config.CONTEXT_MAX_C, ge=1)
    preprocess: bool = False
    names: Optional[Path] = None
    locations: Optional[Path] = None
    organizations: Optional[Path] = None

    # rankers
    model: Literal["tfidf", "rnn", "lstm"] = "tfidf"
    hidden: Optional[int] = Field(default=None, ge=1)
    embedding_dim: int = Field(default=config.EMBEDDING_DIM, ge=1)
    lr: float = Field(default=config.LEARNING_RATE, gt=0)
    batch_size: int = Field(default=config.BATCH_SIZE, ge=1)
    epochs: int = Field(default=config.EPOCHS, ge=0)
    clip: float = Field(default=config.CLIP_NORM, gt=0)
    l2: float = Field(default=config.L2_LAMBDA, ge=0)
    max_context_tokens: int = Field(default=config.MAX_CONTEXT_TOKENS, ge=1)
    max_response_tokens: int = Field(default=config.MAX_RESPONSE_TOKENS, ge=1)
    min_count: int = Field(default=config.MIN_COUNT, ge=1)
    val_fraction: float = Field(default=0.0, ge=0, lt=1)
    embeddings: Optional[Path] = None
    fractions: List[float] = Field(default_factory=lambda: [0.25, 0.5, 1.0])

    # synth
    n_train: int = Field(default=2000, ge=2)
    n_test: int = Field(default=200, ge=1)

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            cell=self.model,
            hidden=self.hidden or (config.RNN_HIDDEN if self.model == "rnn" else config.LSTM_HIDDEN),
            embedding_dim=self.embedding_dim,
            learning_rate=self.lr,
            batch_size=self.batch_size,
            epochs=self.epochs,
            clip=self.clip,
            l2=self.l2,
            seed=self.seed,
            max_context_tokens=self.max_context_tokens,
            max_response_tokens=self.max_response_tokens,
            min_count=self.min_count,
            val_fraction=self.val_fraction,
        )


# ---------- Commands ----------
def cmd_extract(cfg: RunConfig) -> int:
    entries = scan_log_tree(cfg.logs)
    common_words = load_common_words(cfg.common_words)
    extraction = ExtractionConfig(
        window_mins=cfg.window_mins,
        min_turns=cfg.min_turns,
        dominance_len=cfg.dominance_len,
        dominance_frac=cfg.dominance_frac,
        prev_days=cfg.prev_days,
        match_last_token=cfg.match_last_token,
    )

    def read(entry):
        return read_channel_day(entry.path, entry.day, entry.channel,
                                strict=cfg.strict, include_actions=cfg.include_actions)

    with ThreadPoolExecutor(max_workers=cfg.workers) as executor:
        days = list(tqdm(executor.map(read, entries), total=len(entries), desc="parsing", disable=cfg.quiet))
        by_channel = defaultdict(list)
        for channel_day in days:
            by_channel[channel_day.channel].append(channel_day)
        results = list(executor.map(
            lambda channel: disentangle_channel(by_channel[channel], common_words, extraction),
            sorted(by_channel),
        ))

    dialogues = [d for channel_dialogues, _ in results for d in channel_dialogues]
    rejections = Counter()
    for _, channel_rejections in results:
        rejections.update(channel_rejections)

    write_corpus(dialogues, cfg.out)
    write_names(corpus_names(dialogues), names_path(cfg.out))

    print(f"channel-days: {len(days)}")
    print(f"dialogues: {len(dialogues)}")
    print(f"turns: {sum(len(d.turns) for d in dialogues)}")
    print(f"utterances: {sum(d.utterance_count for d in dialogues)}")
    print(f"skipped lines: {sum(d.skipped for d in days)}")
    for reason in ("min_turns", "dominance"):
        print(f"rejected ({reason}): {rejections[reason]}")
    return EXIT_OK


def cmd_stats(cfg: RunConfig) -> int:
    stats = corpus_stats(read_corpus(cfg.corpus))
    print(format_stats(stats))
    if cfg.histogram:
        write_histogram(stats, cfg.histogram)
    return EXIT_OK


def _preprocessor(cfg: RunConfig, default_names: Optional[Path] = None) -> TextPreprocessor:
    names = cfg.names or (default_names if default_names and default_names.exists() else None)
    return TextPreprocessor.from_files(names, cfg.locations, cfg.organizations)


def cmd_triples(cfg: RunConfig) -> int:
    dialogues = read_corpus(cfg.corpus)
    split = SplitConfig(
        test_fraction=cfg.test_fraction,
        seed=cfg.seed,
        negatives_per_positive=cfg.negatives,
        max_context_C=cfg.context_max,
    )
    rng = np.random.default_rng(cfg.seed)
    train_dialogues, test_dialogues = split_corpus(dialogues, split, rng)
    records = make_test_records(test_dialogues, split, rng)
    triples = make_training_triples(train_dialogues, split, rng)

    if cfg.preprocess:
        preprocessor = _preprocessor(cfg, names_path(cfg.corpus))
        records = preprocess_records(records, preprocessor)
        triples = preprocess_triples(triples, preprocessor)

    out_dir = cfg.out_dir
    write_triples(triples, out_dir / "train.csv")
    write_test_records(records, out_dir / "test.csv")
    print(f"train dialogues: {len(train_dialogues)}")
    print(f"test dialogues: {len(test_dialogues)}")
    print(f"training triples: {len(triples)}")
    print(f"test records: {len(records)} (1 in {cfg.negatives + 1})")
    return EXIT_OK


def _load_ranker(cfg: RunConfig):
    if cfg.model == "tfidf":
        if cfg.checkpoint:
            return TfidfRanker(IdfTable.load(cfg.checkpoint))
        if cfg.train:
            return TfidfRanker.from_triples(read_triples(cfg.train))
        raise ConfigError("tfidf needs --checkpoint (idf table) or --train to fit on")
    if not cfg.checkpoint:
        raise ConfigError(f"{cfg.model} needs --checkpoint")
    ranker = DualEncoderRanker.load(cfg.checkpoint)
    if ranker.name != cfg.model:
        raise ConfigError(f"Checkpoint {cfg.checkpoint} holds a {ranker.name} model, not {cfg.model}")
    return ranker


def cmd_train(cfg: RunConfig) -> int:
    triples = read_triples(cfg.train)
    if cfg.model == "tfidf":
        ranker = TfidfRanker.from_triples(triples)
        ranker.idf.save(cfg.out)
        print(f"idf table: {len(ranker.idf)} tokens over {ranker.idf.n_documents} contexts")
        return EXIT_OK

    result = train(triples, cfg.train_config(), word_vectors=cfg.embeddings, show_progress=not cfg.quiet)
    DualEncoderRanker.from_result(result).save(cfg.out)
    if cfg.log:
        write_history(result.history, cfg.log)
    for log in result.history:
        val = f" val_R@1={log.val_recall_at_1:.4f}" if log.val_recall_at_1 is not None else ""
        print(f"epoch {log.epoch}: loss={log.loss:.6f}{val}")
    return EXIT_OK


def cmd_evaluate(cfg: RunConfig) -> int:
    records = read_test_records(cfg.test)
    reports = evaluate_all(_load_ranker(cfg), records)
    print(format_reports(reports))
    if cfg.report:
        write_reports(reports, cfg.report)
    return EXIT_OK


def cmd_rank(cfg: RunConfig) -> int:
    with open(cfg.candidates, "r", encoding="utf-8") as f:
        candidates = [ln.rstrip("\r\n") for ln in f if ln.strip()]
    ranked = _load_ranker(cfg).rank(cfg.context, candidates)
    for position, (idx, score) in enumerate(ranked, 1):
        print(f"{position}\t{score:.6f}\t{candidates[idx]}")
    return EXIT_OK


def cmd_learning_curve(cfg: RunConfig) -> int:
    triples = read_triples(cfg.train)
    records = read_test_records(cfg.test)
    train_cfg = cfg.train_config() if cfg.model != "tfidf" else None
    points = learning_curve(triples, records, cfg.fractions, cfg.model, train_cfg, seed=cfg.seed)
    for p in points:
        print(f"{p.fraction:g}\t{p.train_size}\t{p.recall_at_1:.4f}")
    if cfg.out:
        write_curve(points, cfg.out)
    return EXIT_OK


def cmd_synth(cfg: RunConfig) -> int:
    task = make_synthetic_task(cfg.n_train, cfg.n_test, negatives=9, seed=cfg.seed)
    write_triples(task.train, cfg.out_dir / "train.csv")
    write_test_records(task.test, cfg.out_dir / "test_1in10.csv")
    write_test_records(task.test_pairs, cfg.out_dir / "test_1in2.csv")
    print(f"training triples: {len(task.train)}")
    print(f"test records: {len(task.test)}")
    return EXIT_OK


COMMANDS = {
    "extract": cmd_extract,
    "stats": cmd_stats,
    "triples": cmd_triples,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "rank": cmd_rank,
    "learning-curve": cmd_learning_curve,
    "synth": cmd_synth,
}


# ---------- CLI ----------
def _fractions(text: str) -> List[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _add_model_args(parser: argparse.ArgumentParser, training: bool = True):
    parser.add_argument("--model", choices=["tfidf", "rnn", "lstm"], default="tfidf")
    if not training:
        parser.add_argument("--checkpoint", type=Path, help="idf table (tfidf) or dual encoder checkpoint")
        return
    parser.add_argument("--hidden", type=int, default=None,
                        help=f"hidden size (default {config.RNN_HIDDEN} for rnn, {config.LSTM_HIDDEN} for lstm)")
    parser.add_argument("--embedding-dim", type=int, default=config.EMBEDDING_DIM)
    parser.add_argument("--lr", type=float, default=config.LEARNING_RATE, help="Adam learning rate")
    parser.add_argument("--batch-size", type=int, default=config.BATCH_SIZE)
    parser.add_argument("--epochs", type=int, default=config.EPOCHS)
    parser.add_argument("--clip", type=float, default=config.CLIP_NORM, help="global gradient-norm threshold")
    parser.add_argument("--l2", type=float, default=config.L2_LAMBDA, help="L2 weight on M and b")
    parser.add_argument("--max-context-tokens", type=int, default=config.MAX_CONTEXT_TOKENS)
    parser.add_argument("--max-response-tokens", type=int, default=config.MAX_RESPONSE_TOKENS)
    parser.add_argument("--min-count", type=int, default=config.MIN_COUNT, help="vocabulary frequency cut-off")
    parser.add_argument("--val-fraction", type=float, default=0.0, help="held-out contexts for per-epoch R@1")
    parser.add_argument("--embeddings", type=Path, help="word vectors, one `token v1 ... vd` per line")


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(description="Dyadic dialogue corpus toolkit", formatter_class=fmt)
    parser.add_argument("--seed", type=int, default=config.DEFAULT_SEED, help="single source of randomness")
    parser.add_argument("--quiet", action="store_true", help="no progress bars")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="extract dyadic dialogues from chat logs", formatter_class=fmt)
    p.add_argument("--logs", type=Path, required=True, help="log root laid out as YYYY/MM/DD/#channel.txt")
    p.add_argument("--out", type=Path, required=True, help="corpus TSV")
    p.add_argument("--window-mins", type=int, default=config.WINDOW_MINS, help="initial-question window")
    p.add_argument("--min-turns", type=int, default=config.MIN_TURNS)
    p.add_argument("--dominance-len", type=int, default=config.DOMINANCE_LEN)
    p.add_argument("--dominance-frac", type=float, default=config.DOMINANCE_FRAC)
    p.add_argument("--prev-days", type=int, default=config.PREV_DAYS, help="roster look-back in days")
    p.add_argument("--common-words", type=Path, default=Path(config.COMMON_WORDS_FILE))
    p.add_argument("--match-last-token", action="store_true", help="also accept a name at the end of a message")
    p.add_argument("--include-actions", action="store_true", help="keep `* nick does` lines as messages")
    p.add_argument("--strict", action="store_true", help="fail on malformed lines instead of skipping")
    p.add_argument("--workers", type=int, default=config.MAX_WORKERS)

    p = sub.add_parser("stats", help="corpus statistics", formatter_class=fmt)
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--histogram", type=Path, help="write turns,count CSV")

    p = sub.add_parser("triples", help="split the corpus and write train/test files", formatter_class=fmt)
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--out-dir", type=Path, required=True)
    p.add_argument("--test-fraction", type=float, default=config.TEST_FRACTION)
    p.add_argument("--negatives", type=int, default=config.NEGATIVES, help="distractors per test record (1 or 9)")
    p.add_argument("--context-max", type=int, default=config.CONTEXT_MAX_C, help="C of the context-length sampler")
    p.add_argument("--preprocess", action="store_true", help="tokenize and entity-tag every utterance")
    p.add_argument("--names", type=Path, help="user names to tag (default: the corpus .names.txt)")
    p.add_argument("--locations", type=Path)
    p.add_argument("--organizations", type=Path)

    p = sub.add_parser("train", help="fit a ranker on training triples", formatter_class=fmt)
    p.add_argument("--train", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="idf table or checkpoint to write")
    p.add_argument("--log", type=Path, help="per-epoch CSV")
    _add_model_args(p)

    p = sub.add_parser("evaluate", help="Recall@k on a test file", formatter_class=fmt)
    p.add_argument("--test", type=Path, required=True)
    p.add_argument("--train", type=Path, help="fit tfidf on these triples instead of loading a table")
    p.add_argument("--report", type=Path, help="write the report CSV")
    _add_model_args(p, training=False)

    p = sub.add_parser("rank", help="rank candidate responses for a context", formatter_class=fmt)
    p.add_argument("--context", required=True, help="utterances joined by ' __EOS__ '")
    p.add_argument("--candidates", type=Path, required=True, help="one candidate per line")
    p.add_argument("--train", type=Path, help="fit tfidf on these triples instead of loading a table")
    _add_model_args(p, training=False)

    p = sub.add_parser("learning-curve", help="R@1 against training-set size", formatter_class=fmt)
    p.add_argument("--train", type=Path, required=True)
    p.add_argument("--test", type=Path, required=True)
    p.add_argument("--fractions", type=_fractions, default=[0.25, 0.5, 1.0], help="comma-separated")
    p.add_argument("--out", type=Path, help="write fraction,train_size,recall_at_1 CSV")
    _add_model_args(p)

    p = sub.add_parser("synth", help="write the keyword-copy benchmark", formatter_class=fmt)
    p.add_argument("--out-dir", type=Path, required=True)
    p.add_argument("--n-train", type=int, default=2000, help="training triples")
    p.add_argument("--n-test", type=int, default=200, help="test records")

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    setup_logging()
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig(**vars(args))
        return COMMANDS[cfg.command](cfg)
    except ValidationError as e:
        print(f"error: invalid options: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except TrainingError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except DialogueToolkitError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
