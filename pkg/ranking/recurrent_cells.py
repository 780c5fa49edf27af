"""
Recurrent cells for the dual encoder (numpy, float64)

Row-vector convention: a batch of hidden states is (B, d), inputs are
(T, B, d_emb) with a (T, B) mask. A masked step carries h (and c) over
unchanged, so padding never alters a sequence's final state.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np

logger = logging.getLogger(__name__)

INPUT_INIT_SCALE = 0.01
FORGET_BIAS = 1.0
LSTM_GATES = ("i", "f", "o", "g")


def sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def orthogonal_init(d: int, rng: np.random.Generator) -> np.ndarray:
    """Q from the QR factorisation of a Gaussian matrix, signs fixed so diag(R) >= 0"""
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs


# ---------- Single steps ----------
def rnn_step(cell: "RnnCell", h_prev: np.ndarray, x: np.ndarray) -> np.ndarray:
    return np.tanh(h_prev @ cell.W_h.T + x @ cell.W_x.T)


def lstm_step(cell: "LstmCell", h_prev: np.ndarray, c_prev: np.ndarray,
              x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    z = np.concatenate([h_prev, x], axis=-1)
    i = sigmoid(z @ cell.W_i.T + cell.b_i)
    f = sigmoid(z @ cell.W_f.T + cell.b_f)
    o = sigmoid(z @ cell.W_o.T + cell.b_o)
    g = np.tanh(z @ cell.W_g.T + cell.b_g)
    c = f * c_prev + i * g
    h = o * np.tanh(c)
    return h, c


# ---------- Cells ----------
@dataclass
class RnnCell:
    """h_t = tanh(W_h h_{t-1} + W_x x_t)"""
    W_h: np.ndarray
    W_x: np.ndarray

    kind = "rnn"

    @classmethod
    def init(cls, hidden: int, embedding_dim: int, rng: np.random.Generator) -> "RnnCell":
        W_h = orthogonal_init(hidden, rng)
        W_x = rng.uniform(-INPUT_INIT_SCALE, INPUT_INIT_SCALE, size=(hidden, embedding_dim))
        return cls(W_h, W_x)

    @property
    def hidden(self) -> int:
        return self.W_h.shape[0]

    def tensors(self) -> Dict[str, np.ndarray]:
        return {"W_h": self.W_h, "W_x": self.W_x}

    def forward(self, X: np.ndarray, mask: np.ndarray) -> Tuple[np.ndarray, List]:
        T, B, _ = X.shape
        h = np.zeros((B, self.hidden))
        cache = []
        for t in range(T):
            m = mask[t][:, None]
            h_new = rnn_step(self, h, X[t])
            cache.append((h, h_new, m))
            h = m * h_new + (1.0 - m) * h
        return h, cache

    def backward(self, X: np.ndarray, cache: List, dh: np.ndarray) -> Tuple[Dict[str, np.ndarray], np.ndarray]:
        grads = {"W_h": np.zeros_like(self.W_h), "W_x": np.zeros_like(self.W_x)}
        dX = np.zeros_like(X)
        for t in reversed(range(len(cache))):
            h_prev, h_new, m = cache[t]
            da = m * dh * (1.0 - h_new ** 2)
            grads["W_h"] += da.T @ h_prev
            grads["W_x"] += da.T @ X[t]
            dX[t] = da @ self.W_x
            dh = da @ self.W_h + (1.0 - m) * dh
        return grads, dX


@dataclass
class LstmCell:
    """Input, forget and output gates plus a tanh candidate; no peepholes"""
    W_i: np.ndarray
    W_f: np.ndarray
    W_o: np.ndarray
    W_g: np.ndarray
    b_i: np.ndarray
    b_f: np.ndarray
    b_o: np.ndarray
    b_g: np.ndarray

    kind = "lstm"

    @classmethod
    def init(cls, hidden: int, embedding_dim: int, rng: np.random.Generator) -> "LstmCell":
        weights = {}
        for gate in LSTM_GATES:
            recurrent = orthogonal_init(hidden, rng)
            inputs = rng.uniform(-INPUT_INIT_SCALE, INPUT_INIT_SCALE, size=(hidden, embedding_dim))
            weights[f"W_{gate}"] = np.concatenate([recurrent, inputs], axis=1)
        biases = {f"b_{gate}": np.zeros(hidden) for gate in LSTM_GATES}
        biases["b_f"] += FORGET_BIAS
        return cls(**weights, **biases)

    @property
    def hidden(self) -> int:
        return self.W_i.shape[0]

    def tensors(self) -> Dict[str, np.ndarray]:
        names = [f"W_{g}" for g in LSTM_GATES] + [f"b_{g}" for g in LSTM_GATES]
        return {name: getattr(self, name) for name in names}

    def forward(self, X: np.ndarray, mask: np.ndarray) -> Tuple[np.ndarray, List]:
        T, B, _ = X.shape
        d = self.hidden
        h = np.zeros((B, d))
        c = np.zeros((B, d))
        cache = []
        for t in range(T):
            m = mask[t][:, None]
            z = np.concatenate([h, X[t]], axis=1)
            i = sigmoid(z @ self.W_i.T + self.b_i)
            f = sigmoid(z @ self.W_f.T + self.b_f)
            o = sigmoid(z @ self.W_o.T + self.b_o)
            g = np.tanh(z @ self.W_g.T + self.b_g)
            c_new = f * c + i * g
            tc = np.tanh(c_new)
            h_new = o * tc
            cache.append((z, c, i, f, o, g, tc, m))
            h = m * h_new + (1.0 - m) * h
            c = m * c_new + (1.0 - m) * c
        return h, cache

    def backward(self, X: np.ndarray, cache: List, dh: np.ndarray) -> Tuple[Dict[str, np.ndarray], np.ndarray]:
        d = self.hidden
        grads = {name: np.zeros_like(value) for name, value in self.tensors().items()}
        dX = np.zeros_like(X)
        dc = np.zeros_like(dh)
        for t in reversed(range(len(cache))):
            z, c_prev, i, f, o, g, tc, m = cache[t]
            dh_new = m * dh
            dc_new = m * dc + dh_new * o * (1.0 - tc ** 2)

            pre = {
                "i": dc_new * g * i * (1.0 - i),
                "f": dc_new * c_prev * f * (1.0 - f),
                "o": dh_new * tc * o * (1.0 - o),
                "g": dc_new * i * (1.0 - g ** 2),
            }
            dz = np.zeros_like(z)
            for gate, da in pre.items():
                W = getattr(self, f"W_{gate}")
                grads[f"W_{gate}"] += da.T @ z
                grads[f"b_{gate}"] += da.sum(axis=0)
                dz += da @ W

            dX[t] = dz[:, d:]
            dh = dz[:, :d] + (1.0 - m) * dh
            dc = dc_new * f + (1.0 - m) * dc
        return grads, dX


CELL_TYPES = {"rnn": RnnCell, "lstm": LstmCell}


def init_cell(kind: str, hidden: int, embedding_dim: int, rng: np.random.Generator):
    if kind not in CELL_TYPES:
        raise ValueError(f"Unknown cell type {kind!r}; expected one of {sorted(CELL_TYPES)}")
    return CELL_TYPES[kind].init(hidden, embedding_dim, rng)
