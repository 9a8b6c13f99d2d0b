"""Stage-wise training and scoring orchestration.

Training order: fit the temporal encoder on next-window prediction over
normal data, freeze it, build weighted attributed graphs from its
embeddings, fit the graph autoencoder, freeze it, then fit the hypersphere
detector on the resulting features and calibrate the alarm threshold on a
held-out slice of normal segments. Ablation toggles swap a stage for the
identity: raw window matrices stand in for missing temporal embeddings, the
binary adjacency for missing edge weighting, and pooled embeddings for the
missing graph autoencoder.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import svdd as svdd_mod
from . import vgae as vgae_mod
from .autodiff import Tensor
from .config import PipelineConfig
from .data import (Normalizer, Segment, SensorTopology, apply_normalizer,
                   fit_normalizer, segment_stream)
from .errors import DataError, NumericError
from .graphgen import weighted_graph
from .svdd import DetectionResult, SvddNet, calibrate_threshold, train_svdd
from .temporal import TemporalEncoder, train_temporal
from .vgae import VgaeEncoder, train_vgae


@dataclass
class TrainedPipeline:
    config: PipelineConfig
    topology: SensorTopology
    normalizer: Normalizer | None
    temporal: TemporalEncoder | None
    vgae: VgaeEncoder | None
    svdd: SvddNet
    threshold: float
    traces: dict[str, list[float]] = field(default_factory=dict)


def _embed_segment(pipe_temporal: TemporalEncoder | None,
                   segment_values: np.ndarray) -> np.ndarray:
    if pipe_temporal is None:
        return segment_values
    return pipe_temporal.encode(Tensor(segment_values)).value


def segment_graphs(config: PipelineConfig, topology: SensorTopology,
                   temporal: TemporalEncoder | None,
                   segments: Sequence[Segment]):
    """Weighted attributed graphs for each segment (ablations honored)."""
    graphs = []
    for index, segment in enumerate(segments):
        attrs = _embed_segment(temporal, segment.values)
        graphs.append(weighted_graph(topology, attrs, index,
                                     weighting=config.graph.weighting))
    return graphs


def segment_features(config: PipelineConfig, topology: SensorTopology,
                     temporal: TemporalEncoder | None,
                     vgae_encoder: VgaeEncoder | None,
                     segments: Sequence[Segment]) -> np.ndarray:
    """One feature row per segment, through whichever stages are enabled.

    Inference is deterministic: the graph autoencoder contributes its
    posterior means, not samples.
    """
    rows = []
    for index, segment in enumerate(segments):
        attrs = _embed_segment(temporal, segment.values)
        if vgae_encoder is not None:
            graph = weighted_graph(topology, attrs, index,
                                   weighting=config.graph.weighting)
            attrs = vgae_encoder.encode(graph, noise=None).values
        rows.append(svdd_mod.pool_embedding(attrs, config.svdd.pooling)[0])
    return np.asarray(rows)


def _successor_is_clean(segment: Segment, labels: np.ndarray, length: int) -> bool:
    if segment.successor_start is None:
        return False
    window = labels[segment.successor_start:segment.successor_start + length]
    return not window.any()


def train_pipeline(config: PipelineConfig, topology: SensorTopology,
                   values: np.ndarray, labels: np.ndarray,
                   log: Callable[[str], None] | None = None) -> TrainedPipeline:
    """Run all enabled training stages on one stream and calibrate."""
    config.validate()
    topology.validate()
    if values.shape[1] != topology.n:
        raise DataError(
            f"stream has {values.shape[1]} columns, topology has {topology.n} sensors")

    def say(message: str) -> None:
        if log is not None:
            log(message)

    if config.run.train_fraction < 1.0:
        keep = max(int(round(values.shape[0] * config.run.train_fraction)), 1)
        values, labels = values[:keep], labels[:keep]
        say(f"[data] training on first {keep} rows "
            f"(fraction {config.run.train_fraction})")

    normalizer = None
    if config.run.normalize:
        normalizer = fit_normalizer(values)
        values = apply_normalizer(normalizer, values)

    length, stride = config.window.length, config.window.stride
    segments = segment_stream(values, labels, length, stride)
    normal = [s for s in segments if s.label == 0]
    dropped = len(segments) - len(normal)
    anomalous_rows = int(labels.sum())
    if dropped:
        say(f"[data] filtered {dropped} anomalous training segments "
            f"({anomalous_rows} anomalous rows)")
    if not normal:
        raise DataError("no normal training segments remain after filtering")
    say(f"[data] {len(normal)} normal training segments of length {length}")

    seeds = np.random.SeedSequence(config.run.seed).spawn(4)
    traces: dict[str, list[float]] = {}

    temporal = None
    if config.temporal.enabled:
        temporal = TemporalEncoder(
            topology.n, length, config.temporal.heads, config.temporal.head_dim,
            config.temporal.model_dim, np.random.default_rng(seeds[0]),
            positional_encoding=config.temporal.positional_encoding)
        pairs = [(s.values, s.successor) for s in normal
                 if _successor_is_clean(s, labels, length)]
        if not pairs:
            raise DataError("no normal (window, successor) pairs for "
                            "prediction training; need a longer stream")
        say(f"[temporal] training on {len(pairs)} prediction pairs")
        traces["temporal"] = train_temporal(
            temporal, pairs, config.temporal.epochs, config.temporal.lr, log)

    vgae_encoder = None
    if config.vgae.enabled:
        graphs = segment_graphs(config, topology, temporal, normal)
        input_dim = graphs[0].attributes.shape[1]
        vgae_encoder = VgaeEncoder(
            input_dim, config.vgae.hidden_dim, config.vgae.embed_dim,
            np.random.default_rng(seeds[1]), kl_weight=config.vgae.kl_weight)
        say(f"[vgae] training on {len(graphs)} graphs "
            f"(attribute dim {input_dim})")
        traces["vgae"] = train_vgae(vgae_encoder, graphs, config.vgae.epochs,
                                    config.vgae.lr,
                                    np.random.default_rng(seeds[2]), log)

    features = segment_features(config, topology, temporal, vgae_encoder, normal)
    split = len(features)
    if config.run.calibration_fraction > 0.0 and len(features) > 1:
        split = max(1, int(round(len(features) *
                                 (1.0 - config.run.calibration_fraction))))
    fit_features = features[:split]
    calibration_features = features[split:] if split < len(features) else fit_features

    net = SvddNet(features.shape[1], config.svdd.widths, config.svdd.slope,
                  np.random.default_rng(seeds[3]))
    net.init_center(fit_features)
    say(f"[svdd] training on {fit_features.shape[0]} samples of dim "
        f"{features.shape[1]}, calibrating on {len(calibration_features)}")
    traces["svdd"] = train_svdd(net, fit_features, config.svdd.epochs,
                                config.svdd.lr, config.svdd.weight_decay, log)
    threshold = calibrate_threshold(net, calibration_features,
                                    config.svdd.quantile)
    say(f"[svdd] threshold at quantile {config.svdd.quantile}: {threshold:.6f}")

    for name, trace in traces.items():
        if trace and not np.isfinite(trace).all():
            raise NumericError(f"{name} training produced a non-finite loss")

    return TrainedPipeline(config, topology, normalizer, temporal,
                           vgae_encoder, net, threshold, traces)


def score_stream(pipe: TrainedPipeline, values: np.ndarray
                 ) -> tuple[list[Segment], list[DetectionResult]]:
    """Segment and score a stream with a trained pipeline.

    Streams shorter than one window yield no segments (and no error), so
    header-only outputs are possible downstream.
    """
    config = pipe.config
    if values.shape[0] and values.shape[1] != pipe.topology.n:
        raise DataError(
            f"stream has {values.shape[1]} columns, topology has "
            f"{pipe.topology.n} sensors")
    if pipe.normalizer is not None and values.shape[0]:
        values = apply_normalizer(pipe.normalizer, values)
    if values.shape[0] < config.window.length:
        return [], []
    dummy_labels = np.zeros(values.shape[0], dtype=np.int64)
    segments = segment_stream(values, dummy_labels, config.window.length,
                              config.window.stride)
    features = segment_features(config, pipe.topology, pipe.temporal,
                                pipe.vgae, segments)
    scores = pipe.svdd.scores(features)
    results = [
        DetectionResult(i, float(s), pipe.threshold, int(s > pipe.threshold))
        for i, s in enumerate(scores)
    ]
    return segments, results


def expand_to_timestamps(segments: Sequence[Segment],
                         results: Sequence[DetectionResult],
                         threshold: float
                         ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-timestamp scores over the covered span.

    A timestamp covered by several (overlapping) segments takes the maximum
    segment score; its prediction is the strict threshold comparison, which
    equals the OR of the covering segments' predictions.
    """
    if not segments:
        empty = np.array([], dtype=np.int64)
        return empty, np.array([]), empty.copy()
    covered = max(s.end for s in segments)
    scores = np.full(covered, -np.inf)
    for segment, result in zip(segments, results):
        span = slice(segment.start, segment.end)
        scores[span] = np.maximum(scores[span], result.score)
    indices = np.flatnonzero(np.isfinite(scores))
    scores = scores[indices]
    predictions = (scores > threshold).astype(np.int64)
    return indices, scores, predictions
