"""One-class hypersphere detector over flattened graph embeddings.

A small bias-free network maps each embedding vector into an output space
where training pulls normal samples toward a fixed center; the anomaly score
of a sample is its squared distance to that center. Bias-free layers and an
unbounded leaky activation are deliberate: together with a nonzero fixed
center they block the degenerate solution where everything collapses onto
the center regardless of input.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import DataError

CENTER_FLOOR = 0.1


@dataclass
class DetectionResult:
    segment_index: int
    score: float
    threshold: float
    predicted: int


def flatten_embedding(matrix: np.ndarray) -> np.ndarray:
    """Row-major flattening of a per-node embedding to a single sample row."""
    return np.asarray(matrix, dtype=float).reshape(1, -1)


def pool_embedding(matrix: np.ndarray, mode: str = "flatten") -> np.ndarray:
    if mode == "flatten":
        return flatten_embedding(matrix)
    if mode == "mean":
        return np.asarray(matrix, dtype=float).mean(axis=0, keepdims=True)
    raise ValueError(f"unknown pooling mode {mode!r}")


class SvddNet:
    """Bias-free multilayer map plus a fixed hypersphere center."""

    def __init__(self, input_dim: int, widths: Sequence[int],
                 slope: float, rng: np.random.Generator):
        if not widths:
            raise ValueError("need at least one layer width")
        self.input_dim = input_dim
        self.widths = tuple(int(w) for w in widths)
        self.slope = slope
        dims = [input_dim, *self.widths]
        self.weights = [ad.uniform_init(rng, dims[i], dims[i + 1])
                        for i in range(len(self.widths))]
        self.center: np.ndarray | None = None
        self.trained = False

    @property
    def output_dim(self) -> int:
        return self.widths[-1]

    def parameters(self) -> list[Tensor]:
        return list(self.weights)

    def forward(self, x: Tensor) -> Tensor:
        """Map a batch of sample rows through the network."""
        out = x
        for w in self.weights[:-1]:
            out = ad.leaky_relu(ad.matmul(out, w), self.slope)
        return ad.matmul(out, self.weights[-1])

    def init_center(self, samples: np.ndarray) -> np.ndarray:
        """Fix the center at the mean initial image of the training samples.

        Coordinates closer to zero than the floor are pushed outward
        (sign-preserving; exact zeros go positive) so the center cannot sit
        at the trivial all-zeros solution.
        """
        samples = np.atleast_2d(samples)
        if samples.shape[0] == 0:
            raise DataError("cannot initialize the center from zero samples")
        image = self.forward(Tensor(samples)).value
        center = image.mean(axis=0)
        small = np.abs(center) < CENTER_FLOOR
        center[small] = np.where(center[small] < 0.0, -CENTER_FLOOR, CENTER_FLOOR)
        self.center = center
        return center

    def _require_center(self) -> np.ndarray:
        if self.center is None:
            raise RuntimeError("hypersphere center is not initialized")
        return self.center

    def _require_trained(self) -> None:
        if not self.trained:
            raise RuntimeError("scoring requires a trained network")

    def scores(self, samples: np.ndarray) -> np.ndarray:
        """Squared distances to the center, one per sample row."""
        self._require_trained()
        center = self._require_center()
        image = self.forward(Tensor(np.atleast_2d(samples))).value
        diff = image - center
        return (diff * diff).sum(axis=1)

    def score(self, sample: np.ndarray) -> float:
        return float(self.scores(np.atleast_2d(sample))[0])


def svdd_objective(net: SvddNet, samples: np.ndarray,
                   weight_decay: float) -> Tensor:
    """Mean squared center distance plus the (decay/2) squared weight norm."""
    samples = np.atleast_2d(samples)
    center = net._require_center()
    tiled = Tensor(np.tile(center, (samples.shape[0], 1)))
    distance = ad.scale(
        ad.frobenius_sq(ad.sub(net.forward(Tensor(samples)), tiled)),
        1.0 / samples.shape[0])
    if weight_decay == 0.0:
        return distance
    penalty = None
    for w in net.weights:
        term = ad.frobenius_sq(w)
        penalty = term if penalty is None else ad.add(penalty, term)
    return ad.add(distance, ad.scale(penalty, weight_decay / 2.0))


def train_svdd(net: SvddNet, samples: np.ndarray, epochs: int, lr: float,
               weight_decay: float,
               log: Callable[[str], None] | None = None) -> list[float]:
    """Shrink the hypersphere around the fixed center; returns loss trace.

    The weight penalty is realized as decoupled decay inside the optimizer;
    the recorded trace is the mean squared distance term.
    """
    samples = np.atleast_2d(samples)
    if samples.shape[0] == 0:
        raise DataError("no training samples")
    net._require_center()
    optimizer = ad.Adam(net.parameters(), lr=lr, weight_decay=weight_decay)
    trace: list[float] = []
    for epoch in range(epochs):
        optimizer.zero_grad()
        loss = svdd_objective(net, samples, weight_decay=0.0)
        loss.backward()
        optimizer.step()
        trace.append(float(loss.value[0, 0]))
        if log is not None and (epoch + 1) % max(1, epochs // 10) == 0:
            log(f"[svdd] epoch {epoch + 1}/{epochs} loss={trace[-1]:.6f}")
    net.trained = True
    return trace


def calibrate_threshold(net: SvddNet, samples: np.ndarray,
                        quantile: float) -> float:
    """Empirical quantile of calibration scores (linear interpolation)."""
    if not 0.0 < quantile <= 1.0:
        raise ValueError(f"quantile must be in (0, 1], got {quantile}")
    samples = np.atleast_2d(samples)
    if samples.shape[0] == 0:
        raise DataError("no calibration samples")
    return float(np.quantile(net.scores(samples), quantile))


def detect(net: SvddNet, sample: np.ndarray, threshold: float,
           segment_index: int = -1) -> DetectionResult:
    """Score one sample; positive only when strictly above the threshold."""
    score = net.score(sample)
    return DetectionResult(segment_index, score, threshold,
                           int(score > threshold))
