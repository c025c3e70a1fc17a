"""Connectionist bidirectional RNN over a path sequence, with a softmax head.

    hf_t = tanh(V i_t + W hf_{t-1})
    hb_t = tanh(V i_t + W hb_{t+1})
    h_t  = tanh(hf_t + hb_t + W h_{t-1})
    y    = softmax(U h_N + b_y)

One recurrent matrix W serves all three recurrences. Boundary states are zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np


@dataclass
class SequenceParams:
    V: np.ndarray
    W: np.ndarray
    U: np.ndarray
    b_y: np.ndarray
    labels: Tuple[str, ...]

    @property
    def hidden(self) -> int:
        return self.W.shape[0]

    @property
    def input_dim(self) -> int:
        return self.V.shape[1]

    @classmethod
    def init(cls, input_dim: int, hidden: int, labels: Sequence[str], rng: np.random.Generator) -> "SequenceParams":
        sv = np.sqrt(6.0 / (hidden + input_dim))
        su = np.sqrt(6.0 / (len(labels) + hidden))
        V = rng.uniform(-sv, sv, size=(hidden, input_dim))
        U = rng.uniform(-su, su, size=(len(labels), hidden))
        return cls(V, np.eye(hidden), U, np.zeros(len(labels)), tuple(labels))

    @classmethod
    def zeros(cls, input_dim: int, hidden: int, labels: Sequence[str]) -> "SequenceParams":
        n = len(labels)
        return cls(np.zeros((hidden, input_dim)), np.zeros((hidden, hidden)), np.zeros((n, hidden)), np.zeros(n), tuple(labels))


@dataclass
class EncoderStates:
    inputs: np.ndarray  # N x |i|
    hf: np.ndarray  # N x H
    hb: np.ndarray
    h: np.ndarray
    y: np.ndarray

    @property
    def h_last(self) -> np.ndarray:
        return self.h[-1]


@dataclass
class SequenceGrads:
    V: np.ndarray
    W: np.ndarray
    U: np.ndarray
    b_y: np.ndarray
    inputs: np.ndarray


@dataclass
class Prediction:
    label: str
    probability: float
    distribution: np.ndarray
    candidate: Optional[Tuple[str, str, str]] = None


def softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max())
    return e / e.sum()


def _as_inputs(inputs, params: SequenceParams) -> np.ndarray:
    # float64 unless the caller works in a wider type
    X = np.asarray(inputs)
    X = X.astype(np.result_type(X, params.V, np.float64), copy=False)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("need a non-empty sequence of input vectors")
    if X.shape[1] != params.input_dim:
        raise ValueError(f"input dimension {X.shape[1]} does not match V ({params.input_dim})")
    return X


def forward(inputs, params: SequenceParams) -> EncoderStates:
    X = _as_inputs(inputs, params)
    N, H = X.shape[0], params.hidden
    V, W = params.V, params.W
    proj = [V @ x for x in X]
    hf = np.zeros((N, H), dtype=X.dtype)
    hb = np.zeros_like(hf)
    h = np.zeros_like(hf)
    prev = np.zeros(H, dtype=X.dtype)
    for t in range(N):
        prev = hf[t] = np.tanh(proj[t] + W @ prev)
    prev = np.zeros(H, dtype=X.dtype)
    for t in range(N - 1, -1, -1):
        prev = hb[t] = np.tanh(proj[t] + W @ prev)
    prev = np.zeros(H, dtype=X.dtype)
    for t in range(N):
        prev = h[t] = np.tanh(hf[t] + hb[t] + W @ prev)
    y = softmax(params.U @ h[-1] + params.b_y)
    return EncoderStates(X, hf, hb, h, y)


def backward(states: EncoderStates, gold: int | str, params: SequenceParams) -> SequenceGrads:
    """Gradients of -log y[gold] through the head and all three recurrences."""
    if isinstance(gold, str):
        if gold not in params.labels:
            raise ValueError(f"gold label {gold!r} not in label list {params.labels}")
        gold = params.labels.index(gold)
    elif not 0 <= gold < len(params.labels):
        raise ValueError(f"gold label id {gold} out of range")
    X, hf, hb, h = states.inputs, states.hf, states.hb, states.h
    N, H = h.shape
    V, W = params.V, params.W
    dz = states.y.copy()
    dz[gold] -= 1.0
    dU = np.outer(dz, h[-1])
    db = dz.copy()
    dW = np.zeros_like(W)
    dV = np.zeros_like(V)
    dX = np.zeros_like(X)
    zero = np.zeros(H)

    d_hf = np.zeros((N, H))
    d_hb = np.zeros((N, H))
    carry = params.U.T @ dz
    for t in range(N - 1, -1, -1):
        da = carry * (1.0 - h[t] ** 2)
        dW += np.outer(da, h[t - 1] if t > 0 else zero)
        d_hf[t] += da
        d_hb[t] += da
        carry = W.T @ da

    carry = zero
    for t in range(N - 1, -1, -1):
        da = (d_hf[t] + carry) * (1.0 - hf[t] ** 2)
        dV += np.outer(da, X[t])
        dX[t] += V.T @ da
        dW += np.outer(da, hf[t - 1] if t > 0 else zero)
        carry = W.T @ da

    carry = zero
    for t in range(N):
        da = (d_hb[t] + carry) * (1.0 - hb[t] ** 2)
        dV += np.outer(da, X[t])
        dX[t] += V.T @ da
        dW += np.outer(da, hb[t + 1] if t + 1 < N else zero)
        carry = W.T @ da

    return SequenceGrads(dV, dW, dU, db, dX)


def predict(inputs, params: SequenceParams, candidate=None) -> Prediction:
    y = forward(inputs, params).y
    k = int(np.argmax(y))  # first maximum wins ties
    return Prediction(params.labels[k], float(y[k]), y, candidate)
