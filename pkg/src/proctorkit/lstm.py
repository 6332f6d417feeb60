"""Sequence cheat classifier: single-layer LSTM, two dense layers, sigmoid.

Forward/backward are batched numpy; gradients flow through the full
unrolled recurrence (BPTT) and every analytic gradient is covered by a
finite-difference test.  Training uses Adam on binary cross-entropy with
inverted dropout on the final hidden state, so inference needs no
rescaling and is deterministic.  Streaming prediction keeps a FIFO window
of raw feature rows and scores it through the persisted preprocessor once
the window is full, emitting one probability per subsequent frame.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from . import kernels
from .errors import (
    EmptyDataset,
    NonFiniteInput,
    SchemaMismatch,
    ShapeMismatch,
    SingleClass,
)
from .features import LabeledSequence, Preprocessor, SCHEMA_VERSION, WindowBuffer
from .metrics import roc_auc

WEIGHT_KEYS = ("Wi", "Wf", "Wo", "Wg", "bi", "bf", "bo", "bg", "W1", "b1", "W2", "b2")

_P_CLAMP = 1e-7


@dataclass(frozen=True)
class LSTMParams:
    input_dim: int = 27
    hidden: int = 64
    dropout_rate: float = 0.35
    fc1_dim: int = 32
    window: int = 15
    learning_rate: float = 0.001
    batch_size: int = 64
    max_epochs: int = 30
    seed: int = 0

    def __post_init__(self):
        if min(self.input_dim, self.hidden, self.fc1_dim, self.window,
               self.batch_size, self.max_epochs) <= 0:
            raise SchemaMismatch("all size parameters must be positive")
        if not (0.0 <= self.dropout_rate < 1.0):
            raise SchemaMismatch("dropout_rate must be in [0, 1)")
        if self.learning_rate <= 0:
            raise SchemaMismatch("learning_rate must be positive")


@dataclass
class LSTMModel:
    params: LSTMParams
    weights: dict[str, np.ndarray]
    scaler_hash: Optional[str] = None
    threshold_opt: Optional[float] = None
    schema_version: int = SCHEMA_VERSION

    def copy_weights(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.weights.items()}


def init_model(params: LSTMParams) -> LSTMModel:
    """Uniform +/- 1/sqrt(hidden) init; forget-gate bias starts at 1."""
    rng = np.random.default_rng(params.seed)
    bound = 1.0 / math.sqrt(params.hidden)
    z = params.input_dim + params.hidden

    def u(*shape):
        return rng.uniform(-bound, bound, shape)

    weights = {
        "Wi": u(params.hidden, z),
        "Wf": u(params.hidden, z),
        "Wo": u(params.hidden, z),
        "Wg": u(params.hidden, z),
        "bi": u(params.hidden),
        "bf": u(params.hidden),
        "bo": u(params.hidden),
        "bg": u(params.hidden),
        "W1": u(params.fc1_dim, params.hidden),
        "b1": u(params.fc1_dim),
        "W2": u(1, params.fc1_dim),
        "b2": u(1),
    }
    weights["bf"] = np.ones(params.hidden)
    return LSTMModel(params=params, weights=weights)


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def forward_batch(model: LSTMModel, X: np.ndarray, dropout_mask: Optional[np.ndarray] = None):
    """Probabilities for a (B, w, input_dim) batch plus the backprop cache.

    ``dropout_mask`` is an inverted-dropout multiplier for the final hidden
    state (None means inference: no dropout).
    """
    p_ = model.params
    if X.ndim != 3 or X.shape[2] != p_.input_dim:
        raise ShapeMismatch(f"expected (B, w, {p_.input_dim}), got {X.shape}")
    if not np.isfinite(X).all():
        raise NonFiniteInput("sequence batch contains NaN or inf")
    W = model.weights
    B, w, _ = X.shape
    H = p_.hidden
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    steps = []
    for t in range(w):
        z = np.concatenate((X[:, t, :], h), axis=1)
        i = _sigmoid(z @ W["Wi"].T + W["bi"])
        f = _sigmoid(z @ W["Wf"].T + W["bf"])
        o = _sigmoid(z @ W["Wo"].T + W["bo"])
        g = np.tanh(z @ W["Wg"].T + W["bg"])
        c_prev = c
        c = f * c_prev + i * g
        tc = np.tanh(c)
        h = o * tc
        steps.append((z, i, f, o, g, c_prev, tc))
    d = h if dropout_mask is None else h * dropout_mask
    pre1 = d @ W["W1"].T + W["b1"]
    a1 = np.maximum(pre1, 0.0)
    logit = (a1 @ W["W2"].T + W["b2"]).ravel()
    p = _sigmoid(logit)
    cache = (X, steps, d, pre1, a1, dropout_mask)
    return p, cache


def bce_loss(p, y) -> float:
    """Mean binary cross-entropy with probability clamped away from {0, 1}."""
    p = np.clip(np.asarray(p, dtype=np.float64), _P_CLAMP, 1.0 - _P_CLAMP)
    y = np.asarray(y, dtype=np.float64)
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


def backward_batch(model: LSTMModel, p: np.ndarray, y: np.ndarray, cache):
    """Gradients of mean BCE over the batch for every weight tensor."""
    W = model.weights
    X, steps, d, pre1, a1, dropout_mask = cache
    B = X.shape[0]
    D = model.params.input_dim
    grads = {k: np.zeros_like(v) for k, v in model.weights.items()}

    dlogit = (p - np.asarray(y, dtype=np.float64)) / B
    grads["W2"] = dlogit[None, :] @ a1
    grads["b2"] = np.array([dlogit.sum()])
    da1 = dlogit[:, None] @ W["W2"]
    da1 = da1 * (pre1 > 0.0)
    grads["W1"] = da1.T @ d
    grads["b1"] = da1.sum(axis=0)
    dd = da1 @ W["W1"]
    dh = dd if dropout_mask is None else dd * dropout_mask

    dc_next = np.zeros_like(dh)
    for t in range(len(steps) - 1, -1, -1):
        z, i, f, o, g, c_prev, tc = steps[t]
        do = dh * tc
        dc = dc_next + dh * o * (1.0 - tc * tc)
        di = dc * g
        df = dc * c_prev
        dg = dc * i
        dc_next = dc * f
        dai = di * i * (1.0 - i)
        daf = df * f * (1.0 - f)
        dao = do * o * (1.0 - o)
        dag = dg * (1.0 - g * g)
        grads["Wi"] += dai.T @ z
        grads["Wf"] += daf.T @ z
        grads["Wo"] += dao.T @ z
        grads["Wg"] += dag.T @ z
        grads["bi"] += dai.sum(axis=0)
        grads["bf"] += daf.sum(axis=0)
        grads["bo"] += dao.sum(axis=0)
        grads["bg"] += dag.sum(axis=0)
        dz = dai @ W["Wi"] + daf @ W["Wf"] + dao @ W["Wo"] + dag @ W["Wg"]
        dh = dz[:, D:]
    return grads


def lstm_forward(model: LSTMModel, sequence: np.ndarray, training: bool = False,
                 seed: int = 0):
    """Probability for one (w, input_dim) window; inference is dropout-free."""
    seq = np.asarray(sequence, dtype=np.float64)
    if seq.ndim != 2:
        raise ShapeMismatch(f"expected a 2D window, got shape {seq.shape}")
    mask = None
    rate = model.params.dropout_rate
    if training and rate > 0.0:
        rng = np.random.default_rng(seed)
        mask = (rng.random((1, model.params.hidden)) >= rate) / (1.0 - rate)
    p, cache = forward_batch(model, seq[None, :, :], dropout_mask=mask)
    return float(p[0]), cache


@dataclass(frozen=True)
class TrainHistory:
    train_loss: list[float]
    val_auc: list[float]
    best_epoch: int


class AdamState:
    """First/second moment accumulators mirroring the weight tensors."""

    def __init__(self, weights: dict[str, np.ndarray],
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.m = {k: np.zeros_like(v) for k, v in weights.items()}
        self.v = {k: np.zeros_like(v) for k, v in weights.items()}
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0

    def step(self, weights: dict[str, np.ndarray], grads: dict[str, np.ndarray],
             lr: float) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        corr1 = 1.0 - b1 ** self.t
        corr2 = 1.0 - b2 ** self.t
        for k in weights:
            g = grads[k]
            self.m[k] = b1 * self.m[k] + (1.0 - b1) * g
            self.v[k] = b2 * self.v[k] + (1.0 - b2) * (g * g)
            weights[k] -= lr * (self.m[k] / corr1) / (np.sqrt(self.v[k] / corr2) + self.eps)


def _stack_sequences(sequences: Sequence[LabeledSequence], params: LSTMParams):
    if not sequences:
        raise EmptyDataset("no training sequences")
    X = np.stack([s.matrix for s in sequences]).astype(np.float64)
    y = np.array([s.target for s in sequences], dtype=np.float64)
    if X.shape[1] != params.window or X.shape[2] != params.input_dim:
        raise ShapeMismatch(
            f"sequences are {X.shape[1:]}, params expect "
            f"({params.window}, {params.input_dim})"
        )
    return X, y


def train_lstm(sequences: Sequence[LabeledSequence], params: LSTMParams = LSTMParams(),
               val_sequences: Optional[Sequence[LabeledSequence]] = None):
    """Mini-batch Adam training; returns (best-validation model, history).

    When no validation sequences are given the training set doubles as the
    validation set (useful for overfit checks); the returned model is the
    snapshot of the epoch with the highest validation AUC.
    """
    X, y = _stack_sequences(sequences, params)
    if val_sequences is None:
        Xv, yv = X, y
    else:
        Xv, yv = _stack_sequences(val_sequences, params)
    return train_lstm_arrays(X, y, params, Xv, yv)


def train_lstm_arrays(X: np.ndarray, y: np.ndarray, params: LSTMParams,
                      Xv: np.ndarray, yv: np.ndarray):
    """Array-native training core; see train_lstm."""
    if X.shape[0] == 0:
        raise EmptyDataset("no training sequences")
    if y.min() == y.max():
        raise SingleClass("training sequences contain a single class")

    model = init_model(params)
    adam = AdamState(model.weights)
    rng = np.random.default_rng(params.seed)
    n = X.shape[0]
    rate = params.dropout_rate
    history_loss: list[float] = []
    history_auc: list[float] = []
    best_auc = -1.0
    best_epoch = -1
    best_weights = model.copy_weights()

    for epoch in range(params.max_epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, params.batch_size):
            idx = order[start:start + params.batch_size]
            mask = None
            if rate > 0.0:
                mask = (rng.random((idx.size, params.hidden)) >= rate) / (1.0 - rate)
            p, cache = forward_batch(model, X[idx], dropout_mask=mask)
            epoch_loss += bce_loss(p, y[idx]) * idx.size
            grads = backward_batch(model, p, y[idx], cache)
            adam.step(model.weights, grads, params.learning_rate)
        history_loss.append(epoch_loss / n)

        pv, _ = forward_batch(model, Xv)
        auc = roc_auc(pv, yv.astype(bool))
        history_auc.append(auc)
        if auc > best_auc:
            best_auc = auc
            best_epoch = epoch
            best_weights = model.copy_weights()

    best = LSTMModel(params=params, weights=best_weights)
    return best, TrainHistory(train_loss=history_loss, val_auc=history_auc,
                              best_epoch=best_epoch)


def predict_proba_sequences(model: LSTMModel, X: np.ndarray) -> np.ndarray:
    """Inference probabilities for a (B, w, input_dim) batch."""
    p, _ = forward_batch(model, np.asarray(X, dtype=np.float64))
    return np.clip(p, _P_CLAMP, 1.0 - _P_CLAMP)


class StreamScorer:
    """Streaming window scorer: buffer raw rows, scale, emit once full."""

    def __init__(self, model: LSTMModel, preprocessor: Preprocessor,
                 window: Optional[int] = None):
        if model.scaler_hash is not None and model.scaler_hash != preprocessor.content_hash():
            raise SchemaMismatch("preprocessing state does not match the model's scaler hash")
        self.model = model
        self.preprocessor = preprocessor
        self.buffer = WindowBuffer(window or model.params.window)
        self._kernel_weights = tuple(
            np.ascontiguousarray(model.weights[k]) for k in WEIGHT_KEYS
        )

    def push(self, row: np.ndarray) -> Optional[float]:
        """Algorithm: append, evict beyond w, score when exactly full."""
        row = np.asarray(row, dtype=np.float64)
        if row.shape != (self.model.params.input_dim,):
            raise SchemaMismatch(
                f"expected {self.model.params.input_dim} features, got {row.shape}"
            )
        self.buffer.push(row)
        if not self.buffer.full:
            return None
        window = self.preprocessor.transform(self.buffer.as_matrix())
        logit = kernels.lstm_window_logit(
            *self._kernel_weights, np.ascontiguousarray(window)
        )
        return float(min(max(_sigmoid(logit), _P_CLAMP), 1.0 - _P_CLAMP))


def stream_predict(scorer: StreamScorer, frame_vector: np.ndarray) -> Optional[float]:
    """Functional alias for StreamScorer.push."""
    return scorer.push(frame_vector)


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def save_lstm(model: LSTMModel, path) -> None:
    p_ = model.params
    obj = {
        "kind": "lstm",
        "schema_version": model.schema_version,
        "scaler_hash": model.scaler_hash,
        "threshold_opt": model.threshold_opt,
        "params": {
            "input_dim": p_.input_dim,
            "hidden": p_.hidden,
            "dropout_rate": p_.dropout_rate,
            "fc1_dim": p_.fc1_dim,
            "window": p_.window,
            "learning_rate": p_.learning_rate,
            "batch_size": p_.batch_size,
            "max_epochs": p_.max_epochs,
            "seed": p_.seed,
        },
        "weights": {k: model.weights[k].tolist() for k in WEIGHT_KEYS},
    }
    with open(str(path), "w", encoding="utf-8") as fh:
        json.dump(obj, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_lstm(path) -> LSTMModel:
    with open(str(path), "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    if obj.get("kind") != "lstm":
        raise SchemaMismatch(f"{path} is not an lstm model file")
    if obj.get("schema_version") != SCHEMA_VERSION:
        raise SchemaMismatch(
            f"model schema_version {obj.get('schema_version')} != {SCHEMA_VERSION}"
        )
    params = LSTMParams(**obj["params"])
    weights = {k: np.asarray(obj["weights"][k], dtype=np.float64) for k in WEIGHT_KEYS}
    hidden, z = params.hidden, params.input_dim + params.hidden
    shapes = {
        "Wi": (hidden, z), "Wf": (hidden, z), "Wo": (hidden, z), "Wg": (hidden, z),
        "bi": (hidden,), "bf": (hidden,), "bo": (hidden,), "bg": (hidden,),
        "W1": (params.fc1_dim, hidden), "b1": (params.fc1_dim,),
        "W2": (1, params.fc1_dim), "b2": (1,),
    }
    for k, shape in shapes.items():
        if weights[k].shape != shape:
            raise ShapeMismatch(f"weight {k} has shape {weights[k].shape}, expected {shape}")
    return LSTMModel(
        params=params,
        weights=weights,
        scaler_hash=obj.get("scaler_hash"),
        threshold_opt=obj.get("threshold_opt"),
    )


def attach_scaler(model: LSTMModel, preprocessor: Preprocessor) -> LSTMModel:
    """Record the preprocessor's content hash so loads can validate pairing."""
    return replace(model, scaler_hash=preprocessor.content_hash())
