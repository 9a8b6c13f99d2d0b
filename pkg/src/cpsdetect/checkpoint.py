"""Self-describing binary checkpoint container.

Layout (all integers little-endian):

    magic  b"CPSD"
    u32    format version
    u32    block count
    blocks, each:
        u8   kind  (M = matrix, S = scalar, T = text)
        u16  name length, then the utf-8 name
        M: u32 rows, u32 cols, rows*cols little-endian float64
        S: one little-endian float64
        T: u64 byte length, then utf-8 text

Block names are namespaced per stage (``temporal/w_out``) and written in a
fixed order, so identical training runs produce byte-identical files. A
version mismatch on load is an error, never a silent migration.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .config import PipelineConfig, config_to_text, parse_config_text
from .data import Normalizer, SensorTopology
from .errors import ConfigError, DataError
from .pipeline import TrainedPipeline
from .svdd import SvddNet
from .temporal import TemporalEncoder
from .vgae import VgaeEncoder

MAGIC = b"CPSD"
VERSION = 1


def _matrix_blocks(pipe: TrainedPipeline) -> list[tuple[str, np.ndarray]]:
    blocks: list[tuple[str, np.ndarray]] = []
    if pipe.normalizer is not None:
        blocks.append(("normalizer/mean", pipe.normalizer.mean.reshape(1, -1)))
        blocks.append(("normalizer/std", pipe.normalizer.std.reshape(1, -1)))
    if pipe.temporal is not None:
        enc = pipe.temporal
        for h in range(enc.heads):
            blocks.append((f"temporal/w_query{h}", enc.w_query[h].value))
            blocks.append((f"temporal/w_key{h}", enc.w_key[h].value))
            blocks.append((f"temporal/w_value{h}", enc.w_value[h].value))
        blocks.extend([
            ("temporal/w_out", enc.w_out.value),
            ("temporal/w_ff1", enc.w_ff1.value),
            ("temporal/b_ff1", enc.b_ff1.value),
            ("temporal/w_ff2", enc.w_ff2.value),
            ("temporal/b_ff2", enc.b_ff2.value),
            ("temporal/w_pred", enc.w_pred.value),
            ("temporal/b_pred", enc.b_pred.value),
        ])
    if pipe.vgae is not None:
        blocks.append(("vgae/w_hidden", pipe.vgae.w_hidden.value))
        blocks.append(("vgae/w_heads", pipe.vgae.w_heads.value))
    for i, w in enumerate(pipe.svdd.weights):
        blocks.append((f"svdd/w{i}", w.value))
    blocks.append(("detector/center", pipe.svdd.center.reshape(1, -1)))
    return blocks


def save_checkpoint(path, pipe: TrainedPipeline) -> None:
    matrices = _matrix_blocks(pipe)
    chunks = [MAGIC, struct.pack("<II", VERSION, len(matrices) + 2)]

    def write_name(kind: bytes, name: str) -> None:
        encoded = name.encode("utf-8")
        chunks.append(kind + struct.pack("<H", len(encoded)) + encoded)

    config_text = config_to_text(pipe.config).encode("utf-8")
    write_name(b"T", "config")
    chunks.append(struct.pack("<Q", len(config_text)) + config_text)
    write_name(b"S", "detector/threshold")
    chunks.append(struct.pack("<d", pipe.threshold))
    for name, matrix in matrices:
        write_name(b"M", name)
        matrix = np.ascontiguousarray(matrix, dtype="<f8")
        chunks.append(struct.pack("<II", matrix.shape[0], matrix.shape[1]))
        chunks.append(matrix.tobytes())
    Path(path).write_bytes(b"".join(chunks))


class _Reader:
    def __init__(self, blob: bytes, path):
        self.blob = blob
        self.pos = 0
        self.path = path

    def take(self, count: int) -> bytes:
        if self.pos + count > len(self.blob):
            raise DataError(f"{self.path}: truncated checkpoint")
        out = self.blob[self.pos:self.pos + count]
        self.pos += count
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def _read_blocks(path) -> dict[str, object]:
    reader = _Reader(Path(path).read_bytes(), path)
    if reader.take(4) != MAGIC:
        raise DataError(f"{path}: not a checkpoint file")
    version, count = reader.unpack("<II")
    if version != VERSION:
        raise ConfigError(
            f"{path}: checkpoint format version {version} is not "
            f"supported (expected {VERSION})")
    blocks: dict[str, object] = {}
    for _ in range(count):
        kind = reader.take(1)
        (name_len,) = reader.unpack("<H")
        name = reader.take(name_len).decode("utf-8")
        if kind == b"M":
            rows, cols = reader.unpack("<II")
            payload = reader.take(rows * cols * 8)
            blocks[name] = np.frombuffer(payload, dtype="<f8").reshape(rows, cols).copy()
        elif kind == b"S":
            (blocks[name],) = reader.unpack("<d")
        elif kind == b"T":
            (length,) = reader.unpack("<Q")
            blocks[name] = reader.take(length).decode("utf-8")
        else:
            raise DataError(f"{path}: unknown block kind {kind!r}")
    return blocks


def _restore(target, name: str, blocks: dict) -> None:
    if name not in blocks:
        raise DataError(f"checkpoint is missing block {name!r}")
    stored = blocks[name]
    if stored.shape != target.value.shape:
        raise DataError(
            f"checkpoint block {name!r} has shape {stored.shape}, "
            f"model expects {target.value.shape}")
    target.value = stored


def load_checkpoint(path, topology: SensorTopology) -> TrainedPipeline:
    """Rebuild a trained pipeline; the topology must match the training one."""
    blocks = _read_blocks(path)
    if "config" not in blocks:
        raise DataError(f"{path}: checkpoint has no config snapshot")
    config = parse_config_text(blocks["config"], base=PipelineConfig())
    config.validate()

    normalizer = None
    if config.run.normalize:
        if "normalizer/mean" not in blocks:
            raise DataError(f"{path}: checkpoint has no normalizer block")
        mean = blocks["normalizer/mean"][0]
        std = blocks["normalizer/std"][0]
        if mean.shape[0] != topology.n:
            raise DataError(
                f"checkpoint was trained on {mean.shape[0]} sensors, "
                f"topology has {topology.n}")
        normalizer = Normalizer(mean, std)

    rng = np.random.default_rng(0)  # weights are overwritten below
    temporal = None
    if config.temporal.enabled:
        temporal = TemporalEncoder(
            topology.n, config.window.length, config.temporal.heads,
            config.temporal.head_dim, config.temporal.model_dim, rng,
            positional_encoding=config.temporal.positional_encoding)
        for h in range(temporal.heads):
            _restore(temporal.w_query[h], f"temporal/w_query{h}", blocks)
            _restore(temporal.w_key[h], f"temporal/w_key{h}", blocks)
            _restore(temporal.w_value[h], f"temporal/w_value{h}", blocks)
        for name in ("w_out", "w_ff1", "b_ff1", "w_ff2", "b_ff2",
                     "w_pred", "b_pred"):
            _restore(getattr(temporal, name), f"temporal/{name}", blocks)

    vgae = None
    if config.vgae.enabled:
        if "vgae/w_hidden" not in blocks:
            raise DataError(f"{path}: checkpoint has no vgae blocks")
        input_dim = blocks["vgae/w_hidden"].shape[0]
        vgae = VgaeEncoder(input_dim, config.vgae.hidden_dim,
                           config.vgae.embed_dim, rng,
                           kl_weight=config.vgae.kl_weight)
        _restore(vgae.w_hidden, "vgae/w_hidden", blocks)
        _restore(vgae.w_heads, "vgae/w_heads", blocks)

    if "svdd/w0" not in blocks:
        raise DataError(f"{path}: checkpoint has no svdd blocks")
    input_dim = blocks["svdd/w0"].shape[0]
    net = SvddNet(input_dim, config.svdd.widths, config.svdd.slope, rng)
    for i in range(len(net.weights)):
        _restore(net.weights[i], f"svdd/w{i}", blocks)
    if "detector/center" not in blocks:
        raise DataError(f"{path}: checkpoint has no center block")
    net.center = blocks["detector/center"][0]
    net.trained = True

    if "detector/threshold" not in blocks:
        raise DataError(f"{path}: checkpoint has no threshold block")
    return TrainedPipeline(config, topology, normalizer, temporal, vgae,
                           net, float(blocks["detector/threshold"]))
