"""Attention encoder over the sensor axis with a next-window prediction head.

A segment enters as a (sensors x window_length) matrix. Each attention head
projects the per-sensor time rows to query/key/value spaces, so the attention
matrix is (sensors x sensors): sensors attend to each other, sharing temporal
information. Scores are scaled by sqrt(window_length). The feed-forward
refinement uses full per-sensor bias matrices, and a linear head predicts the
next window; training minimizes the mean squared prediction error over all
(window, successor) pairs drawn from normal data.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import math

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import DataError


@dataclass
class TemporalEmbedding:
    """Per-segment encoder output: one embedding row per sensor."""

    values: np.ndarray
    segment_index: int = -1


def positional_ramp(sensors: int, window: int) -> np.ndarray:
    """A fixed monotone profile over the time axis, repeated for each sensor."""
    steps = np.arange(window) / max(window - 1, 1)
    return np.tile(np.sin(0.5 * np.pi * steps), (sensors, 1))


class TemporalEncoder:
    """Multi-head sensor attention encoder plus next-window prediction head."""

    def __init__(self, sensors: int, window: int, heads: int, head_dim: int,
                 model_dim: int, rng: np.random.Generator,
                 positional_encoding: bool = False):
        self.sensors = sensors
        self.window = window
        self.heads = heads
        self.head_dim = head_dim
        self.model_dim = model_dim
        self.positional_encoding = positional_encoding
        self.w_query = [ad.uniform_init(rng, window, head_dim) for _ in range(heads)]
        self.w_key = [ad.uniform_init(rng, window, head_dim) for _ in range(heads)]
        self.w_value = [ad.uniform_init(rng, window, head_dim) for _ in range(heads)]
        self.w_out = ad.uniform_init(rng, heads * head_dim, model_dim)
        self.w_ff1 = ad.uniform_init(rng, model_dim, model_dim)
        self.w_ff2 = ad.uniform_init(rng, model_dim, model_dim)
        self.b_ff1 = ad.zeros_init(sensors, model_dim)
        self.b_ff2 = ad.zeros_init(sensors, model_dim)
        self.w_pred = ad.uniform_init(rng, model_dim, window)
        self.b_pred = ad.zeros_init(sensors, window)
        self._pos = positional_ramp(sensors, window) if positional_encoding else None

    def parameters(self) -> list[Tensor]:
        params = []
        params.extend(self.w_query)
        params.extend(self.w_key)
        params.extend(self.w_value)
        params.extend([self.w_out, self.w_ff1, self.w_ff2, self.b_ff1,
                       self.b_ff2, self.w_pred, self.b_pred])
        return params

    def _check_input(self, t: Tensor) -> None:
        if t.shape != (self.sensors, self.window):
            raise ValueError(
                f"segment shape {t.shape} does not match encoder "
                f"({self.sensors}, {self.window})")

    def _prepare(self, t: Tensor) -> Tensor:
        if self._pos is not None:
            return ad.add(t, Tensor(self._pos))
        return t

    def attention_weights(self, t: Tensor, head: int) -> Tensor:
        """The (sensors x sensors) softmax attention matrix of one head."""
        self._check_input(t)
        t = self._prepare(t)
        q = ad.matmul(t, self.w_query[head])
        k = ad.matmul(t, self.w_key[head])
        scores = ad.scale(ad.matmul(q, ad.transpose(k)), 1.0 / math.sqrt(self.window))
        return ad.softmax_rows(scores)

    def attention_head(self, t: Tensor, head: int) -> Tensor:
        """One head's output: attention-weighted value projections, (sensors x head_dim)."""
        weights = self.attention_weights(t, head)
        v = ad.matmul(self._prepare(t), self.w_value[head])
        return ad.matmul(weights, v)

    def encode(self, t: Tensor) -> Tensor:
        """Embed one segment as a (sensors x model_dim) matrix."""
        self._check_input(t)
        merged = ad.matmul(
            ad.concat_cols([self.attention_head(t, h) for h in range(self.heads)]),
            self.w_out)
        hidden = ad.relu(ad.add(ad.matmul(merged, self.w_ff1), self.b_ff1))
        return ad.add(merged, ad.add(ad.matmul(hidden, self.w_ff2), self.b_ff2))

    def predict_next(self, embedding: Tensor) -> Tensor:
        """Linear prediction of the next window from an embedding."""
        if embedding.shape != (self.sensors, self.model_dim):
            raise ValueError(
                f"embedding shape {embedding.shape} does not match encoder "
                f"({self.sensors}, {self.model_dim})")
        return ad.add(ad.matmul(embedding, self.w_pred), self.b_pred)

    def embed(self, segment_values: np.ndarray, segment_index: int = -1) -> TemporalEmbedding:
        """Inference-mode embedding of a raw segment matrix."""
        return TemporalEmbedding(self.encode(Tensor(segment_values)).value,
                                 segment_index)


def prediction_loss(encoder: TemporalEncoder,
                    pairs: Sequence[tuple[np.ndarray, np.ndarray]]) -> Tensor:
    """Mean squared Frobenius error of next-window predictions over pairs."""
    if not pairs:
        raise DataError("no training pairs with successor windows")
    total = None
    for current, successor in pairs:
        predicted = encoder.predict_next(encoder.encode(Tensor(current)))
        err = ad.frobenius_sq(ad.sub(Tensor(successor), predicted))
        total = err if total is None else ad.add(total, err)
    return ad.scale(total, 1.0 / len(pairs))


def train_temporal(encoder: TemporalEncoder,
                   pairs: Sequence[tuple[np.ndarray, np.ndarray]],
                   epochs: int, lr: float,
                   log: Callable[[str], None] | None = None) -> list[float]:
    """Fit the encoder on (window, successor) pairs; returns per-epoch losses."""
    optimizer = ad.Adam(encoder.parameters(), lr=lr)
    trace: list[float] = []
    for epoch in range(epochs):
        optimizer.zero_grad()
        loss = prediction_loss(encoder, pairs)
        loss.backward()
        optimizer.step()
        trace.append(float(loss.value[0, 0]))
        if log is not None and (epoch + 1) % max(1, epochs // 10) == 0:
            log(f"[temporal] epoch {epoch + 1}/{epochs} loss={trace[-1]:.6f}")
    return trace
