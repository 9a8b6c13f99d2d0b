"""Variational graph autoencoder over weighted attributed graphs.

Two graph-convolution layers share one symmetrically normalized adjacency
(self-loops added before normalization, degree magnitudes floored so
isolated or negatively weighted rows stay finite). The second layer emits
mean and log-variance heads side by side; reparameterized samples decode
back to edge probabilities through a sigmoid Gram matrix. The training loss
is squared reconstruction error against the binary edge support (plus
self-loops) plus a weighted diagonal-Gaussian KL term.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import DataError
from .graphgen import WeightedGraph

DEGREE_FLOOR = 1e-8
LOGVAR_RANGE = 10.0


@dataclass
class GraphEmbedding:
    """Latent summary of one graph: sampled rows plus the posterior moments."""

    r: Tensor
    mean: Tensor
    logvar: Tensor
    segment_index: int = -1

    @property
    def values(self) -> np.ndarray:
        return self.r.value


def normalize_adjacency(adjacency: np.ndarray) -> np.ndarray:
    """Symmetric degree normalization of the self-looped adjacency.

    Degrees are sums of edge-weight magnitudes, the signed-graph convention:
    negative weights then cannot cancel the unit self-loop, so every degree
    is at least 1 and the normalized entries stay bounded. The floor only
    guards pathological all-zero rows.
    """
    with_loops = adjacency + np.eye(adjacency.shape[0])
    degrees = np.maximum(np.abs(with_loops).sum(axis=1), DEGREE_FLOOR)
    inv_sqrt = 1.0 / np.sqrt(degrees)
    return inv_sqrt[:, None] * with_loops * inv_sqrt[None, :]


def reconstruction_target(adjacency: np.ndarray) -> np.ndarray:
    """Binary edge support plus self-loops, matching the sigmoid decoder range."""
    return ((adjacency != 0.0) | np.eye(adjacency.shape[0], dtype=bool)).astype(float)


class VgaeEncoder:
    """Two-layer graph convolution with mean / log-variance output heads."""

    def __init__(self, input_dim: int, hidden_dim: int, embed_dim: int,
                 rng: np.random.Generator, kl_weight: float = 1.0):
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        self.embed_dim = embed_dim
        self.kl_weight = kl_weight
        self.w_hidden = ad.uniform_init(rng, input_dim, hidden_dim)
        self.w_heads = ad.uniform_init(rng, hidden_dim, 2 * embed_dim)

    def parameters(self) -> list[Tensor]:
        return [self.w_hidden, self.w_heads]

    def encode_normalized(self, norm: Tensor, attributes: Tensor,
                          noise: np.ndarray | None,
                          segment_index: int = -1) -> GraphEmbedding:
        """Encode with a precomputed normalized adjacency (training fast path)."""
        hidden = ad.relu(ad.matmul(ad.matmul(norm, attributes), self.w_hidden))
        heads = ad.matmul(ad.matmul(norm, hidden), self.w_heads)
        mean = ad.slice_cols(heads, 0, self.embed_dim)
        logvar = ad.clamp(ad.slice_cols(heads, self.embed_dim, 2 * self.embed_dim),
                          -LOGVAR_RANGE, LOGVAR_RANGE)
        if noise is None:
            r = mean
        else:
            std = ad.exp(ad.scale(logvar, 0.5))
            r = ad.add(mean, ad.mul(std, Tensor(noise)))
        return GraphEmbedding(r, mean, logvar, segment_index)

    def encode(self, graph: WeightedGraph,
               noise: np.ndarray | None = None) -> GraphEmbedding:
        """Encode a weighted attributed graph; ``noise=None`` is deterministic."""
        if graph.attributes.shape[1] != self.input_dim:
            raise ValueError(
                f"attribute dim {graph.attributes.shape[1]} does not match "
                f"encoder input dim {self.input_dim}")
        norm = Tensor(normalize_adjacency(graph.adjacency))
        return self.encode_normalized(norm, Tensor(graph.attributes), noise,
                                      graph.segment_index)


def decode(r: Tensor) -> Tensor:
    """Edge probabilities: elementwise sigmoid of the Gram matrix."""
    return ad.sigmoid(ad.matmul(r, ad.transpose(r)))


def kl_divergence(mean: Tensor, logvar: Tensor) -> Tensor:
    """KL from the diagonal Gaussian posterior to the standard normal prior."""
    variance = ad.exp(logvar)
    inner = ad.sub(ad.add(ad.mul(mean, mean), variance), logvar)
    ones = Tensor(np.ones(inner.shape))
    return ad.scale(ad.total_sum(ad.sub(inner, ones)), 0.5)


def vgae_loss(target: np.ndarray, reconstructed: Tensor,
              embedding: GraphEmbedding, kl_weight: float) -> Tensor:
    """Squared reconstruction error plus weighted KL."""
    recon = ad.frobenius_sq(ad.sub(Tensor(target), reconstructed))
    return ad.add(recon, ad.scale(kl_divergence(embedding.mean,
                                                embedding.logvar), kl_weight))


def vgae_objective(encoder: VgaeEncoder, graphs: Sequence[WeightedGraph],
                   noises: Sequence[np.ndarray | None]) -> Tensor:
    """Mean training loss over graphs with fixed per-graph noise draws."""
    if not graphs:
        raise DataError("no graphs to train on")
    total = None
    for graph, noise in zip(graphs, noises):
        embedding = encoder.encode(graph, noise)
        loss = vgae_loss(reconstruction_target(graph.adjacency),
                         decode(embedding.r), embedding, encoder.kl_weight)
        total = loss if total is None else ad.add(total, loss)
    return ad.scale(total, 1.0 / len(graphs))


def train_vgae(encoder: VgaeEncoder, graphs: Sequence[WeightedGraph],
               epochs: int, lr: float, rng: np.random.Generator,
               log: Callable[[str], None] | None = None) -> list[float]:
    """Fit the encoder on training graphs; returns per-epoch mean losses."""
    if not graphs:
        raise DataError("no graphs to train on")
    prepared = [(Tensor(normalize_adjacency(g.adjacency)),
                 Tensor(g.attributes),
                 reconstruction_target(g.adjacency),
                 g.adjacency.shape[0]) for g in graphs]
    optimizer = ad.Adam(encoder.parameters(), lr=lr)
    trace: list[float] = []
    for epoch in range(epochs):
        optimizer.zero_grad()
        total = None
        for norm, attrs, target, nodes in prepared:
            noise = rng.standard_normal((nodes, encoder.embed_dim))
            embedding = encoder.encode_normalized(norm, attrs, noise)
            loss = vgae_loss(target, decode(embedding.r), embedding,
                             encoder.kl_weight)
            total = loss if total is None else ad.add(total, loss)
        mean_loss = ad.scale(total, 1.0 / len(prepared))
        mean_loss.backward()
        optimizer.step()
        trace.append(float(mean_loss.value[0, 0]))
        if log is not None and (epoch + 1) % max(1, epochs // 10) == 0:
            log(f"[vgae] epoch {epoch + 1}/{epochs} loss={trace[-1]:.6f}")
    return trace
