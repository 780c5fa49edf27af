"""
Dual encoder ranker

Context and response are read by the same recurrent cell over the same
embeddings; the final hidden states c and r are scored as
p(valid | c, r) = sigmoid(c^T M r + b). Trained on (context, response, flag)
triples with mean cross-entropy, global-norm clipping and Adam. Gradients are
analytic (backpropagation through time), all arithmetic in float64.
"""

import math
import logging
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from tqdm import tqdm

from pipeline.corpus_files import atomic_path
from pipeline.errors import CheckpointError, ConfigError, FitError, TrainingError
from pipeline.preprocess import Vocabulary, build_vocab, encode, sequence_tokens
from pipeline.triples import TestRecord, Triple

from .optim import AdamState, adam_step, clip_gradients
from .recurrent_cells import CELL_TYPES, init_cell, sigmoid

logger = logging.getLogger(__name__)

EMBEDDING_INIT_SCALE = 0.25
DEFAULT_HIDDEN = {"rnn": 50, "lstm": 200}
CHECKPOINT_FORMAT = "dual-encoder-v1"
SCORE_DECIMALS = 12


# ---------- Config / params ----------
@dataclass
class TrainConfig:
    cell: str = "lstm"
    hidden: Optional[int] = None  # None: 50 for rnn, 200 for lstm
    embedding_dim: int = 50
    learning_rate: float = 1e-3
    batch_size: int = 32
    epochs: int = 10
    clip: float = 10.0
    l2: float = 0.0  # penalty on M and b only; embeddings and cell weights are not regularised
    seed: int = 1234
    max_context_tokens: int = 160
    max_response_tokens: int = 80
    min_count: int = 1
    val_fraction: float = 0.0

    def __post_init__(self):
        if self.cell not in CELL_TYPES:
            raise ConfigError(f"Unknown cell {self.cell!r}; expected one of {sorted(CELL_TYPES)}")
        if self.hidden is None:
            self.hidden = DEFAULT_HIDDEN[self.cell]
        for name in ("hidden", "embedding_dim", "batch_size", "max_context_tokens", "max_response_tokens", "min_count"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.learning_rate <= 0 or self.clip <= 0:
            raise ConfigError("learning_rate and clip must be > 0")
        if self.l2 < 0:
            raise ConfigError(f"l2 must be >= 0, got {self.l2}")
        if not 0 <= self.val_fraction < 1:
            raise ConfigError(f"val_fraction must lie in [0, 1), got {self.val_fraction}")


@dataclass
class EncoderParams:
    E: np.ndarray
    cell: object  # RnnCell | LstmCell
    M: np.ndarray
    b: np.ndarray  # shape (1,)

    @property
    def hidden(self) -> int:
        return self.M.shape[0]

    def tensors(self) -> Dict[str, np.ndarray]:
        """Named views of every trainable array; updating them in place updates the model"""
        return {"E": self.E, **self.cell.tensors(), "M": self.M, "b": self.b}


def init_params(vocab_size: int, cfg: TrainConfig, rng: np.random.Generator) -> EncoderParams:
    E = rng.uniform(-EMBEDDING_INIT_SCALE, EMBEDDING_INIT_SCALE, size=(vocab_size, cfg.embedding_dim))
    cell = init_cell(cfg.cell, cfg.hidden, cfg.embedding_dim, rng)
    return EncoderParams(E=E, cell=cell, M=np.eye(cfg.hidden), b=np.zeros(1))


# ---------- Word vectors ----------
def load_word_vectors(path, vocab: Vocabulary, E: np.ndarray) -> int:
    """Overwrite rows of E for vocabulary tokens found in a `token v1 ... vd` text file"""
    dim = E.shape[1]
    replaced = 0
    with open(path, "r", encoding="utf-8", errors="replace") as f:
        for line_no, line in enumerate(f, 1):
            parts = line.split()
            if not parts:
                continue
            if line_no == 1 and len(parts) == 2 and all(p.isdigit() for p in parts):
                continue  # word2vec "<count> <dim>" header
            token, values = parts[0], parts[1:]
            if len(values) != dim:
                raise CheckpointError(
                    f"{path}:{line_no}: vector for {token!r} has {len(values)} values, embedding_dim is {dim}"
                )
            idx = vocab.index.get(token)
            if idx is None:
                continue
            try:
                E[idx] = np.asarray(values, dtype=np.float64)
            except ValueError:
                logger.warning(f"{path}:{line_no}: skipping non-numeric vector for {token!r}")
                continue
            replaced += 1
    logger.info(f"Initialised {replaced} of {len(vocab)} embeddings from {path}")
    return replaced


# ---------- Encoding / scoring ----------
def pad_batch(seqs: Sequence[Sequence[int]]) -> Tuple[np.ndarray, np.ndarray]:
    """(T, B) index matrix padded with 0 and the matching 0/1 mask"""
    T = max((len(s) for s in seqs), default=0)
    idx = np.zeros((T, len(seqs)), dtype=np.int64)
    mask = np.zeros((T, len(seqs)))
    for j, seq in enumerate(seqs):
        idx[: len(seq), j] = seq
        mask[: len(seq), j] = 1.0
    return idx, mask


def encode_batch(params: EncoderParams, seqs: Sequence[Sequence[int]]):
    idx, mask = pad_batch(seqs)
    X = params.E[idx]
    H, cell_cache = params.cell.forward(X, mask)
    return H, (idx, X, cell_cache)


def encode_sequence(params: EncoderParams, seq: Sequence[int]) -> np.ndarray:
    """Final hidden state from a zero start; the empty sequence encodes to zeros"""
    H, _ = encode_batch(params, [seq])
    return H[0]


def score_pair(params: EncoderParams, c: np.ndarray, r: np.ndarray) -> float:
    return float(sigmoid(c @ params.M @ r + params.b[0]))


def loss_and_grads(params: EncoderParams,
                   contexts: Sequence[Sequence[int]],
                   responses: Sequence[Sequence[int]],
                   flags: Sequence[int],
                   l2: float = 0.0,
                   batch_id: Optional[int] = None) -> Tuple[float, Dict[str, np.ndarray]]:
    """Mean cross-entropy over the batch plus (l2/2)(|M|^2 + b^2), and its gradient for every tensor"""
    B = len(flags)
    y = np.asarray(flags, dtype=np.float64)
    H, (idx, X, cell_cache) = encode_batch(params, list(contexts) + list(responses))
    C, R = H[:B], H[B:]

    CM = C @ params.M
    s = np.sum(CM * R, axis=1) + params.b[0]
    loss = float(np.mean(np.logaddexp(0.0, s) - y * s))
    loss += 0.5 * l2 * float(np.sum(params.M ** 2) + np.sum(params.b ** 2))
    if not math.isfinite(loss):
        raise TrainingError("Non-finite loss", batch_id)

    ds = (sigmoid(s) - y) / B
    dH = np.concatenate([ds[:, None] * (R @ params.M.T), ds[:, None] * CM])
    cell_grads, dX = params.cell.backward(X, cell_cache, dH)

    dE = np.zeros_like(params.E)
    np.add.at(dE, idx, dX)

    grads = {
        "E": dE,
        **cell_grads,
        "M": (C * ds[:, None]).T @ R + l2 * params.M,
        "b": np.array([ds.sum()]) + l2 * params.b,
    }
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"Non-finite gradient for {name}", batch_id)
    return loss, grads


def predict(params: EncoderParams,
            context: Sequence[int],
            candidates: Sequence[Sequence[int]]) -> List[Tuple[int, float]]:
    """(candidate index, probability) by descending probability; ties by ascending index"""
    if not candidates:
        return []
    H, _ = encode_batch(params, [context] + list(candidates))
    probs = sigmoid(H[1:] @ (H[0] @ params.M) + params.b[0])
    scored = [(i, float(p)) for i, p in enumerate(probs)]
    return sorted(scored, key=lambda s: (-round(s[1], SCORE_DECIMALS), s[0]))


# ---------- Training ----------
@dataclass
class EpochLog:
    epoch: int
    loss: float
    val_recall_at_1: Optional[float] = None


@dataclass
class TrainResult:
    params: EncoderParams
    vocab: Vocabulary
    config: TrainConfig
    history: List[EpochLog] = field(default_factory=list)


def context_indices(text: str, vocab: Vocabulary, cfg: TrainConfig) -> List[int]:
    return encode(sequence_tokens(text), vocab, cfg.max_context_tokens, keep="tail")


def response_indices(text: str, vocab: Vocabulary, cfg: TrainConfig) -> List[int]:
    return encode(sequence_tokens(text), vocab, cfg.max_response_tokens, keep="head")


def validation_split(triples: Sequence[Triple], fraction: float,
                     rng: np.random.Generator) -> Tuple[List[Triple], List[TestRecord]]:
    """Hold out whole contexts; each held-out context with a true and a false response is a 1-in-2 record"""
    if fraction <= 0:
        return list(triples), []
    contexts = list(dict.fromkeys(t.context for t in triples))
    n_val = int(round(fraction * len(contexts)))
    held_out = {contexts[i] for i in rng.permutation(len(contexts))[:n_val]}

    train = [t for t in triples if t.context not in held_out]
    by_context: Dict[str, Dict[int, str]] = {}
    for t in triples:
        if t.context in held_out:
            by_context.setdefault(t.context, {}).setdefault(t.flag, t.response)
    records = [TestRecord(ctx, flags[1], [flags[0]]) for ctx, flags in by_context.items() if 0 in flags and 1 in flags]
    logger.info(f"Validation split: {len(train)} training triples, {len(records)} 1-in-2 validation records")
    return train, records


def train(triples: Sequence[Triple],
          cfg: TrainConfig,
          vocab: Optional[Vocabulary] = None,
          word_vectors=None,
          show_progress: bool = True) -> TrainResult:
    rng = np.random.default_rng(cfg.seed)
    train_set, val_records = validation_split(triples, cfg.val_fraction, rng)
    if vocab is None:
        vocab = build_vocab(
            (sequence_tokens(text) for t in train_set for text in (t.context, t.response)),
            min_count=cfg.min_count,
        )
    params = init_params(len(vocab), cfg, rng)
    if word_vectors:
        load_word_vectors(word_vectors, vocab, params.E)
    result = TrainResult(params=params, vocab=vocab, config=cfg)
    if cfg.epochs == 0:
        return result
    if not train_set:
        raise FitError("No training triples to fit the dual encoder on")

    contexts = [context_indices(t.context, vocab, cfg) for t in train_set]
    responses = [response_indices(t.response, vocab, cfg) for t in train_set]
    flags = [t.flag for t in train_set]

    tensors = params.tensors()
    state = AdamState()
    n = len(train_set)
    step = 0
    logger.info(
        f"Training {cfg.cell} dual encoder: {n} triples, vocab {len(vocab)}, hidden {cfg.hidden}, "
        f"{cfg.epochs} epochs of {math.ceil(n / cfg.batch_size)} batches"
    )
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        batches = range(0, n, cfg.batch_size)
        for start in tqdm(batches, desc=f"epoch {epoch}/{cfg.epochs}", disable=not show_progress, leave=False):
            batch = order[start:start + cfg.batch_size]
            loss, grads = loss_and_grads(
                params,
                [contexts[i] for i in batch],
                [responses[i] for i in batch],
                [flags[i] for i in batch],
                l2=cfg.l2,
                batch_id=step,
            )
            grads, _ = clip_gradients(grads, cfg.clip)
            adam_step(state, tensors, grads, cfg.learning_rate)
            total += loss * len(batch)
            step += 1

        log = EpochLog(epoch, total / n)
        if val_records:
            log.val_recall_at_1 = recall_at_1(params, vocab, cfg, val_records)
        result.history.append(log)
        val_msg = f", val R@1 {log.val_recall_at_1:.4f}" if log.val_recall_at_1 is not None else ""
        logger.info(f"Epoch {epoch}: loss {log.loss:.6f}{val_msg}")
    return result


def recall_at_1(params: EncoderParams, vocab: Vocabulary, cfg: TrainConfig,
                records: Sequence[TestRecord]) -> float:
    if not records:
        return 0.0
    hits = 0
    for record in records:
        ranked = predict(
            params,
            context_indices(record.context, vocab, cfg),
            [response_indices(text, vocab, cfg) for text, _ in record.candidates],
        )
        hits += ranked[0][0] == 0
    return hits / len(records)


def write_history(history: Sequence[EpochLog], path) -> None:
    df = pd.DataFrame([asdict(h) for h in history], columns=["epoch", "loss", "val_recall_at_1"])
    if df["val_recall_at_1"].isna().all():
        df = df.drop(columns=["val_recall_at_1"])
    with atomic_path(path) as tmp:
        df.to_csv(tmp, index=False, lineterminator="\n", float_format="%.10g")


# ---------- Checkpoints ----------
def save_checkpoint(path, params: EncoderParams, vocab: Vocabulary, cfg: TrainConfig) -> None:
    header = {
        "format": CHECKPOINT_FORMAT,
        "cell": params.cell.kind,
        "hidden": params.hidden,
        "embedding_dim": params.E.shape[1],
        "vocab_size": len(vocab),
        "seed": cfg.seed,
        "lr": repr(cfg.learning_rate),
        "batch_size": cfg.batch_size,
        "epochs": cfg.epochs,
        "clip": repr(cfg.clip),
        "l2": repr(cfg.l2),
        "max_context_tokens": cfg.max_context_tokens,
        "max_response_tokens": cfg.max_response_tokens,
    }
    with atomic_path(path) as tmp:
        with open(tmp, "w", encoding="utf-8", newline="\n") as f:
            for key, value in header.items():
                f.write(f"{key}={value}\n")
            f.write(f"vocab {len(vocab)}\n")
            f.writelines(f"{token}\n" for token in vocab.tokens)
            for name, tensor in params.tensors().items():
                rows = tensor if tensor.ndim == 2 else tensor.reshape(1, -1)
                f.write(f"tensor {name} {rows.shape[0]} {rows.shape[1]}\n")
                for row in rows:
                    f.write(" ".join(f"{v:.17g}" for v in row) + "\n")
    logger.info(f"Saved {params.cell.kind} checkpoint to {path}")


def load_checkpoint(path) -> Tuple[EncoderParams, Vocabulary, TrainConfig]:
    with open(path, "r", encoding="utf-8") as f:
        lines = f.read().splitlines()

    try:
        pos = 0
        header: Dict[str, str] = {}
        while not lines[pos].startswith("vocab "):
            key, _, value = lines[pos].partition("=")
            header[key] = value
            pos += 1
        if header.get("format") != CHECKPOINT_FORMAT:
            raise CheckpointError(f"{path}: unsupported checkpoint format {header.get('format')!r}")

        n_vocab = int(lines[pos].split()[1])
        tokens = lines[pos + 1: pos + 1 + n_vocab]
        pos += 1 + n_vocab

        cfg = TrainConfig(
            cell=header["cell"],
            hidden=int(header["hidden"]),
            embedding_dim=int(header["embedding_dim"]),
            learning_rate=float(header["lr"]),
            batch_size=int(header["batch_size"]),
            epochs=int(header["epochs"]),
            clip=float(header["clip"]),
            l2=float(header["l2"]),
            seed=int(header["seed"]),
            max_context_tokens=int(header["max_context_tokens"]),
            max_response_tokens=int(header["max_response_tokens"]),
        )
        params = init_params(n_vocab, cfg, np.random.default_rng(0))
        tensors = params.tensors()
        loaded = set()
        while pos < len(lines):
            if not lines[pos]:
                pos += 1
                continue
            _, name, rows, cols = lines[pos].split()
            rows, cols = int(rows), int(cols)
            values = np.array(
                [[float(v) for v in ln.split()] for ln in lines[pos + 1: pos + 1 + rows]],
                dtype=np.float64,
            )
            if name not in tensors or values.shape != (rows, cols) or values.size != tensors[name].size:
                raise CheckpointError(f"{path}: tensor {name} has unexpected shape {values.shape}")
            tensors[name][...] = values.reshape(tensors[name].shape)
            loaded.add(name)
            pos += 1 + rows
    except (IndexError, KeyError, ValueError) as e:
        raise CheckpointError(f"{path}: malformed checkpoint ({e})") from e

    missing = set(tensors) - loaded
    if missing:
        raise CheckpointError(f"{path}: missing tensors {sorted(missing)}")
    if len(tokens) != n_vocab:
        raise CheckpointError(f"{path}: vocabulary truncated")
    return params, Vocabulary(tokens=tokens), cfg


# ---------- Ranker ----------
class DualEncoderRanker:
    def __init__(self, params: EncoderParams, vocab: Vocabulary, config: TrainConfig):
        self.params = params
        self.vocab = vocab
        self.config = config
        self.name = params.cell.kind

    @classmethod
    def from_result(cls, result: TrainResult) -> "DualEncoderRanker":
        return cls(result.params, result.vocab, result.config)

    @classmethod
    def load(cls, path) -> "DualEncoderRanker":
        return cls(*load_checkpoint(path))

    def save(self, path) -> None:
        save_checkpoint(path, self.params, self.vocab, self.config)

    def rank(self, context: str, candidates: Sequence[str]) -> List[Tuple[int, float]]:
        return predict(
            self.params,
            context_indices(context, self.vocab, self.config),
            [response_indices(c, self.vocab, self.config) for c in candidates],
        )
