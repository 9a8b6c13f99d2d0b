"""Pipeline configuration: dataclasses plus the key = value file format.

Config files are INI-style: ``[section]`` headers with ``key = value`` lines.
Every field has a CLI flag override; unknown sections or keys are errors so
typos fail loudly. Anomaly specs for the synthetic generator use a compact
``kind:start:duration:sensor[:magnitude]`` syntax, multiple windows joined
with ``|``.
"""
from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field, fields

from .data import AnomalyWindow, SyntheticConfig
from .errors import ConfigError


@dataclass
class PathsConfig:
    data: str = ""
    topology: str = ""
    checkpoint: str = ""
    out: str = "."


@dataclass
class WindowConfig:
    length: int = 30
    stride: int = 30


@dataclass
class TemporalConfig:
    enabled: bool = True
    heads: int = 4
    head_dim: int = 8
    model_dim: int = 32
    epochs: int = 40
    lr: float = 2e-3
    positional_encoding: bool = False


@dataclass
class GraphConfig:
    weighting: bool = True


@dataclass
class VgaeConfig:
    enabled: bool = True
    hidden_dim: int = 32
    embed_dim: int = 8
    kl_weight: float = 1.0
    epochs: int = 60
    lr: float = 1e-2


@dataclass
class SvddConfig:
    widths: tuple[int, ...] = (64, 32)
    slope: float = 0.1
    weight_decay: float = 1e-4
    epochs: int = 1500
    lr: float = 1e-3
    quantile: float = 0.99
    pooling: str = "flatten"


@dataclass
class RunConfig:
    seed: int = 7
    normalize: bool = True
    train_fraction: float = 1.0
    calibration_fraction: float = 0.15


@dataclass
class PipelineConfig:
    paths: PathsConfig = field(default_factory=PathsConfig)
    window: WindowConfig = field(default_factory=WindowConfig)
    temporal: TemporalConfig = field(default_factory=TemporalConfig)
    graph: GraphConfig = field(default_factory=GraphConfig)
    vgae: VgaeConfig = field(default_factory=VgaeConfig)
    svdd: SvddConfig = field(default_factory=SvddConfig)
    run: RunConfig = field(default_factory=RunConfig)
    synthetic: SyntheticConfig = field(default_factory=SyntheticConfig)

    def validate(self) -> None:
        w, t, v, s, r = self.window, self.temporal, self.vgae, self.svdd, self.run
        positive = {
            "window.length": w.length, "window.stride": w.stride,
            "temporal.heads": t.heads, "temporal.head_dim": t.head_dim,
            "temporal.model_dim": t.model_dim, "temporal.lr": t.lr,
            "vgae.hidden_dim": v.hidden_dim, "vgae.embed_dim": v.embed_dim,
            "vgae.lr": v.lr, "svdd.lr": s.lr,
        }
        for name, value in positive.items():
            if value <= 0:
                raise ConfigError(f"{name} must be positive, got {value}")
        for name, value in (("temporal.epochs", t.epochs),
                            ("vgae.epochs", v.epochs),
                            ("svdd.epochs", s.epochs)):
            if value < 0:
                raise ConfigError(f"{name} must be non-negative, got {value}")
        if v.kl_weight < 0:
            raise ConfigError(f"vgae.kl_weight must be non-negative, got {v.kl_weight}")
        if s.weight_decay < 0:
            raise ConfigError(f"svdd.weight_decay must be non-negative, got {s.weight_decay}")
        if not s.widths or any(width <= 0 for width in s.widths):
            raise ConfigError(f"svdd.widths must be positive, got {s.widths}")
        if not 0.0 < s.quantile <= 1.0:
            raise ConfigError(f"svdd.quantile must be in (0, 1], got {s.quantile}")
        if s.pooling not in ("flatten", "mean"):
            raise ConfigError(f"svdd.pooling must be flatten or mean, got {s.pooling!r}")
        if not 0.0 < r.train_fraction <= 1.0:
            raise ConfigError(f"run.train_fraction must be in (0, 1], got {r.train_fraction}")
        if not 0.0 <= r.calibration_fraction < 1.0:
            raise ConfigError(
                f"run.calibration_fraction must be in [0, 1), got {r.calibration_fraction}")


_SECTIONS = {
    "paths": "paths",
    "window": "window",
    "temporal": "temporal",
    "graph": "graph",
    "vgae": "vgae",
    "svdd": "svdd",
    "run": "run",
    "synthetic": "synthetic",
}


def parse_anomaly_spec(text: str) -> tuple[AnomalyWindow, ...]:
    windows = []
    text = text.strip()
    if not text:
        return ()
    for chunk in text.split("|"):
        parts = [p.strip() for p in chunk.strip().split(":")]
        if len(parts) not in (4, 5):
            raise ConfigError(
                f"anomaly spec {chunk.strip()!r} is not "
                "kind:start:duration:sensor[:magnitude]")
        try:
            window = AnomalyWindow(
                kind=parts[0],
                start=int(parts[1]),
                duration=int(parts[2]),
                sensor=int(parts[3]),
                magnitude=float(parts[4]) if len(parts) == 5 else 3.0,
            )
        except ValueError as err:
            raise ConfigError(f"bad anomaly spec {chunk.strip()!r}: {err}") from None
        if window.kind not in AnomalyWindow.KINDS:
            raise ConfigError(f"unknown anomaly kind {window.kind!r}")
        windows.append(window)
    return tuple(windows)


def format_anomaly_spec(windows) -> str:
    return " | ".join(
        f"{w.kind}:{w.start}:{w.duration}:{w.sensor}:{w.magnitude:g}"
        for w in windows)


def _coerce(section: str, key: str, raw, current):
    if key == "anomalies":
        return raw if isinstance(raw, tuple) else parse_anomaly_spec(str(raw))
    if section == "synthetic" and key == "split":
        if raw is None or isinstance(raw, int):
            return raw
        text = str(raw).strip()
        return int(text) if text and text.lower() != "none" else None
    if section == "svdd" and key == "widths":
        if isinstance(raw, tuple):
            return raw
        try:
            return tuple(int(p.strip()) for p in str(raw).split(",") if p.strip())
        except ValueError:
            raise ConfigError(f"[svdd] widths: cannot parse {raw!r}") from None
    if isinstance(current, bool):
        if isinstance(raw, bool):
            return raw
        text = str(raw).strip().lower()
        if text in ("1", "true", "yes", "on"):
            return True
        if text in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"[{section}] {key}: expected a boolean, got {raw!r}")
    try:
        if isinstance(current, int):
            return int(str(raw).strip())
        if isinstance(current, float):
            return float(str(raw).strip())
    except ValueError:
        raise ConfigError(f"[{section}] {key}: cannot parse {raw!r}") from None
    return str(raw).strip()


def apply_setting(config: PipelineConfig, section: str, key: str, raw) -> None:
    if section not in _SECTIONS:
        raise ConfigError(f"unknown config section [{section}]")
    group = getattr(config, _SECTIONS[section])
    names = {f.name for f in fields(group)}
    if key not in names:
        raise ConfigError(f"unknown key {key!r} in section [{section}]")
    setattr(group, key, _coerce(section, key, raw, getattr(group, key)))


def parse_config_text(text: str, base: PipelineConfig | None = None) -> PipelineConfig:
    config = base if base is not None else PipelineConfig()
    parser = configparser.ConfigParser()
    try:
        parser.read_string(text)
    except configparser.Error as err:
        raise ConfigError(f"cannot parse config: {err}") from None
    for section in parser.sections():
        for key, raw in parser.items(section):
            apply_setting(config, section, key, raw)
    return config


def load_config(path) -> PipelineConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as err:
        raise ConfigError(f"cannot read config file {path}: {err}") from None
    return parse_config_text(text)


def config_to_text(config: PipelineConfig) -> str:
    """Deterministic serialization; parse_config_text inverts it."""
    out = io.StringIO()
    for section, attr in _SECTIONS.items():
        group = getattr(config, attr)
        out.write(f"[{section}]\n")
        for f in fields(group):
            value = getattr(group, f.name)
            if f.name == "anomalies":
                value = format_anomaly_spec(value)
            elif isinstance(value, tuple):
                value = ",".join(str(v) for v in value)
            elif value is None:
                value = "none"
            elif isinstance(value, float):
                value = repr(value)
            out.write(f"{f.name} = {value}\n")
        out.write("\n")
    return out.getvalue()
