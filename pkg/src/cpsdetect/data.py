"""Stream ingestion, windowing, and the labeled synthetic benchmark generator.

File formats:

* data CSV: UTF-8 with a header row. Columns that match topology sensor
  names are the signal; an optional ``label`` column carries 0/1 or
  Normal/Attack; any other column (e.g. a timestamp) is kept for reporting
  but ignored for math.
* topology file: line oriented, ``sensor <name> <type>`` lines followed by
  ``edge <nameA> <nameB>`` lines. Blank lines and ``#`` comments allowed.
"""
from __future__ import annotations

import csv
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError

STD_FLOOR = 1e-8


# ---------------------------------------------------------------------------
# topology


@dataclass
class SensorTopology:
    """Static sensor set: names, binary adjacency, and type assignment."""

    names: list[str]
    adjacency: np.ndarray
    type_of: np.ndarray
    type_names: list[str]

    @property
    def n(self) -> int:
        return len(self.names)

    @property
    def type_count(self) -> int:
        return len(self.type_names)

    def validate(self) -> None:
        a = self.adjacency
        if a.shape != (self.n, self.n):
            raise DataError(f"adjacency shape {a.shape} does not match {self.n} sensors")
        if not np.isin(a, (0, 1)).all():
            raise DataError("adjacency entries must be 0 or 1")
        if not np.array_equal(a, a.T):
            raise DataError("adjacency must be symmetric")
        if np.diag(a).any():
            raise DataError("adjacency must have a zero diagonal")
        if len(self.type_of) != self.n:
            raise DataError("every sensor needs exactly one type")
        used = set(int(t) for t in self.type_of)
        expected = set(range(self.type_count))
        if used != expected:
            raise DataError(
                f"type indices used {sorted(used)} do not cover 0..{self.type_count - 1}")

    def index_of(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise DataError(f"unknown sensor name {name!r}") from None

    def hop_distances(self, source: int) -> np.ndarray:
        """BFS hop counts from ``source``; unreachable sensors get -1."""
        dist = np.full(self.n, -1, dtype=np.int64)
        dist[source] = 0
        queue = deque([source])
        while queue:
            u = queue.popleft()
            for v in np.flatnonzero(self.adjacency[u]):
                if dist[v] < 0:
                    dist[v] = dist[u] + 1
                    queue.append(int(v))
        return dist


def parse_topology(text: str) -> SensorTopology:
    names: list[str] = []
    type_names: list[str] = []
    sensor_type: dict[str, str] = {}
    edges: list[tuple[str, str]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] == "sensor" and len(parts) == 3:
            _, name, tname = parts
            if name in sensor_type:
                raise DataError(f"line {lineno}: duplicate sensor {name!r}")
            sensor_type[name] = tname
            names.append(name)
            if tname not in type_names:
                type_names.append(tname)
        elif parts[0] == "edge" and len(parts) == 3:
            edges.append((parts[1], parts[2]))
        else:
            raise DataError(f"line {lineno}: cannot parse topology line {raw!r}")
    if not names:
        raise DataError("topology defines no sensors")
    index = {name: i for i, name in enumerate(names)}
    adjacency = np.zeros((len(names), len(names)), dtype=np.int64)
    for a, b in edges:
        if a not in index:
            raise DataError(f"edge references unknown sensor {a!r}")
        if b not in index:
            raise DataError(f"edge references unknown sensor {b!r}")
        if a == b:
            raise DataError(f"self edge on {a!r} is not allowed")
        adjacency[index[a], index[b]] = 1
        adjacency[index[b], index[a]] = 1
    type_of = np.array([type_names.index(sensor_type[n]) for n in names])
    topology = SensorTopology(names, adjacency, type_of, type_names)
    topology.validate()
    return topology


def format_topology(topology: SensorTopology) -> str:
    lines = [f"sensor {name} {topology.type_names[topology.type_of[i]]}"
             for i, name in enumerate(topology.names)]
    for i in range(topology.n):
        for j in range(i + 1, topology.n):
            if topology.adjacency[i, j]:
                lines.append(f"edge {topology.names[i]} {topology.names[j]}")
    return "\n".join(lines) + "\n"


def load_topology(path) -> SensorTopology:
    return parse_topology(Path(path).read_text(encoding="utf-8"))


def save_topology(path, topology: SensorTopology) -> None:
    Path(path).write_text(format_topology(topology), encoding="utf-8")


# ---------------------------------------------------------------------------
# CSV streams


@dataclass
class RawStream:
    """A loaded stream: values are (timesteps x sensors) in topology order."""

    values: np.ndarray
    labels: np.ndarray
    timestamps: list[str] | None = None

    def __len__(self) -> int:
        return self.values.shape[0]


def _parse_label(cell: str, row: int) -> int:
    text = cell.strip().lower()
    if text in ("0", "0.0", "normal"):
        return 0
    if text in ("1", "1.0", "attack"):
        return 1
    raise DataError(f"row {row}: cannot parse label value {cell!r}")


def load_csv(path, topology: SensorTopology,
             label_column: str = "label") -> RawStream:
    """Read a stream CSV, mapping columns onto topology sensor order."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: missing header row") from None
        header = [h.strip() for h in header]
        column_of = {name: i for i, name in enumerate(header)}
        missing = [name for name in topology.names if name not in column_of]
        if missing:
            raise DataError(f"{path}: sensor columns missing from header: {missing}")
        sensor_cols = [column_of[name] for name in topology.names]
        label_col = column_of.get(label_column)
        passthrough = [i for i, name in enumerate(header)
                       if name not in topology.names and i != label_col]
        ts_col = passthrough[0] if passthrough else None

        rows: list[list[float]] = []
        labels: list[int] = []
        timestamps: list[str] = []
        for rownum, record in enumerate(reader, start=2):
            if not record or all(not c.strip() for c in record):
                continue
            values = []
            for name, col in zip(topology.names, sensor_cols):
                cell = record[col] if col < len(record) else ""
                try:
                    values.append(float(cell))
                except ValueError:
                    raise DataError(
                        f"{path}: row {rownum}, column {name!r}: "
                        f"cannot parse numeric value {cell!r}") from None
            rows.append(values)
            labels.append(_parse_label(record[label_col], rownum)
                          if label_col is not None else 0)
            if ts_col is not None and ts_col < len(record):
                timestamps.append(record[ts_col])

    values = np.asarray(rows, dtype=np.float64).reshape(len(rows), topology.n)
    if len(rows) and not np.isfinite(values).all():
        bad = np.argwhere(~np.isfinite(values))[0]
        raise DataError(
            f"{path}: non-finite value at row {bad[0] + 2}, "
            f"column {topology.names[bad[1]]!r}")
    return RawStream(values, np.asarray(labels, dtype=np.int64),
                     timestamps if ts_col is not None else None)


def load_labels(path, label_column: str = "label") -> np.ndarray:
    """Read just the label column of a stream CSV."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: missing header row") from None
        if label_column not in header:
            raise DataError(f"{path}: no {label_column!r} column in header")
        col = header.index(label_column)
        labels = [
            _parse_label(record[col], rownum)
            for rownum, record in enumerate(reader, start=2)
            if record and any(c.strip() for c in record)
        ]
    return np.asarray(labels, dtype=np.int64)


def save_csv(path, topology: SensorTopology, values: np.ndarray,
             labels: np.ndarray | None = None,
             timestamps=None) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        header = ["timestamp"] + list(topology.names)
        if labels is not None:
            header.append("label")
        writer.writerow(header)
        for t in range(values.shape[0]):
            row = [timestamps[t] if timestamps is not None else t]
            row.extend(repr(float(v)) for v in values[t])
            if labels is not None:
                row.append(int(labels[t]))
            writer.writerow(row)


# ---------------------------------------------------------------------------
# normalization


@dataclass
class Normalizer:
    """Per-sensor z-score statistics, fit on the training split only."""

    mean: np.ndarray
    std: np.ndarray


def fit_normalizer(values: np.ndarray, start: int = 0,
                   stop: int | None = None) -> Normalizer:
    stop = values.shape[0] if stop is None else stop
    window = values[start:stop]
    if window.shape[0] == 0:
        raise DataError(f"empty normalization range [{start}:{stop})")
    mean = window.mean(axis=0)
    std = window.std(axis=0)
    # Constant sensors get a floored std, so their normalized values are 0.
    std = np.maximum(std, STD_FLOOR)
    return Normalizer(mean, std)


def apply_normalizer(normalizer: Normalizer, values: np.ndarray) -> np.ndarray:
    return (values - normalizer.mean) / normalizer.std


# ---------------------------------------------------------------------------
# windowing


@dataclass
class Segment:
    """One sliding-window slice: values are (sensors x window_length)."""

    values: np.ndarray
    start: int
    labels: np.ndarray
    label: int
    successor_start: int | None = None
    successor: np.ndarray | None = field(default=None, repr=False)

    @property
    def end(self) -> int:
        return self.start + self.values.shape[1]


def segment_stream(values: np.ndarray, labels: np.ndarray,
                   length: int, stride: int) -> list[Segment]:
    """Cut the stream into windows of ``length`` every ``stride`` steps.

    Each segment records where its successor window (the next ``length``
    timestamps) starts when one exists, for use as a prediction target.
    The trailing remainder that does not fill a window is dropped.
    """
    if length < 2:
        raise ConfigError(f"window length must be >= 2, got {length}")
    if stride < 1:
        raise ConfigError(f"stride must be >= 1, got {stride}")
    total = values.shape[0]
    if total < length:
        raise DataError(f"stream of length {total} is shorter than one window ({length})")
    segments = []
    for start in range(0, total - length + 1, stride):
        window_labels = labels[start:start + length]
        succ = start + length if start + 2 * length <= total else None
        segments.append(Segment(
            values=values[start:start + length].T.copy(),
            start=start,
            labels=window_labels.copy(),
            label=int(window_labels.any()),
            successor_start=succ,
            successor=(values[succ:succ + length].T.copy()
                       if succ is not None else None),
        ))
    return segments


# ---------------------------------------------------------------------------
# synthetic generator


@dataclass
class AnomalyWindow:
    """One injected event. ``kind`` is offset, drift, or cascade."""

    kind: str
    start: int
    duration: int
    sensor: int
    magnitude: float = 3.0

    KINDS = ("offset", "drift", "cascade")

    def validate(self, length: int, n: int) -> None:
        if self.kind not in self.KINDS:
            raise ConfigError(f"unknown anomaly kind {self.kind!r}")
        if self.duration < 1:
            raise ConfigError(f"anomaly duration must be positive, got {self.duration}")
        if self.start < 0 or self.start + self.duration > length:
            raise DataError(
                f"anomaly window [{self.start}, {self.start + self.duration}) "
                f"outside stream of length {length}")
        if not 0 <= self.sensor < n:
            raise DataError(f"anomaly sensor {self.sensor} out of range for {n} sensors")


@dataclass
class SyntheticConfig:
    sensors: int = 12
    types: int = 3
    length: int = 28_000
    density: float = 0.25
    noise: float = 0.12
    seed: int = 7
    anomalies: tuple[AnomalyWindow, ...] = ()
    drift_delay: int = 60
    cascade_lag: int = 5
    cascade_attenuation: float = 0.6
    split: int | None = None

    def validate(self) -> None:
        if self.sensors < 4:
            raise ConfigError(f"need at least 4 sensors, got {self.sensors}")
        if self.types < 2:
            raise ConfigError(f"need at least 2 sensor types, got {self.types}")
        if self.types > self.sensors:
            raise ConfigError("more types than sensors")
        if not 0.0 <= self.density <= 1.0:
            raise ConfigError(f"density must be in [0, 1], got {self.density}")
        if self.drift_delay < 0 or self.cascade_lag < 0:
            raise ConfigError("delays must be non-negative")
        spans = sorted((w.start, w.start + w.duration) for w in self.anomalies)
        for (s0, e0), (s1, _) in zip(spans, spans[1:]):
            if s1 < e0:
                raise ConfigError(
                    f"anomaly windows overlap near timestamps {s1}..{e0}")
        for w in self.anomalies:
            w.validate(self.length, self.sensors)
            if w.kind == "drift" and self.drift_delay >= w.duration:
                raise ConfigError(
                    f"drift delay {self.drift_delay} swallows the whole "
                    f"window of {w.duration} steps")


def generate_topology(sensors: int, types: int, density: float,
                      rng: np.random.Generator) -> SensorTopology:
    """Random connected topology with round-robin type assignment."""
    names = [f"S{i:02d}" for i in range(sensors)]
    type_names = [f"T{j}" for j in range(types)]
    type_of = np.array([i % types for i in range(sensors)])
    adjacency = np.zeros((sensors, sensors), dtype=np.int64)
    # Spanning tree first, so cascades can always propagate somewhere.
    for i in range(1, sensors):
        j = int(rng.integers(0, i))
        adjacency[i, j] = adjacency[j, i] = 1
    target = int(round(density * sensors * (sensors - 1) / 2))
    candidates = [(i, j) for i in range(sensors) for j in range(i + 1, sensors)
                  if not adjacency[i, j]]
    rng.shuffle(candidates)
    for i, j in candidates:
        if adjacency.sum() // 2 >= target:
            break
        adjacency[i, j] = adjacency[j, i] = 1
    topology = SensorTopology(names, adjacency, type_of, type_names)
    topology.validate()
    return topology


def generate_normal_stream(topology: SensorTopology, length: int,
                           noise: float, rng: np.random.Generator) -> np.ndarray:
    """Per-type sinusoid mixtures plus AR(1) noise, phase-jittered per sensor."""
    t = np.arange(length)
    k = topology.type_count
    n = topology.n
    freqs = rng.uniform(1.0 / 400.0, 1.0 / 40.0, size=(k, 3))
    amps = rng.uniform(0.6, 1.4, size=(k, 3))
    phases = rng.uniform(0.0, 2.0 * np.pi, size=(k, 3))
    jitter = rng.uniform(-0.4, 0.4, size=n)
    gains = rng.uniform(0.9, 1.1, size=n)

    values = np.empty((length, n))
    for i in range(n):
        tau = int(topology.type_of[i])
        signal = np.zeros(length)
        for c in range(3):
            signal += amps[tau, c] * np.sin(
                2.0 * np.pi * freqs[tau, c] * t + phases[tau, c] + jitter[i])
        values[:, i] = gains[i] * signal

    # AR(1) noise, one innovation stream per sensor.
    innovations = rng.normal(scale=noise, size=(length, n))
    ar = np.zeros(n)
    for step in range(length):
        ar = 0.8 * ar + innovations[step]
        values[step] += ar
    return values


def inject_anomalies(values: np.ndarray, topology: SensorTopology,
                     windows, *, drift_delay: int = 60, cascade_lag: int = 5,
                     cascade_attenuation: float = 0.6) -> tuple[np.ndarray, np.ndarray]:
    """Additively inject the configured events; labels mark full windows."""
    length, n = values.shape
    out = values.copy()
    labels = np.zeros(length, dtype=np.int64)
    scale = values.std(axis=0)
    scale = np.maximum(scale, STD_FLOOR)
    for w in windows:
        w.validate(length, n)
        start, end = w.start, w.start + w.duration
        labels[start:end] = 1
        if w.kind == "offset":
            out[start:end, w.sensor] += w.magnitude * scale[w.sensor]
        elif w.kind == "drift":
            onset = start + drift_delay
            ramp = np.linspace(0.0, 1.0, end - onset, endpoint=True)
            out[onset:end, w.sensor] += w.magnitude * scale[w.sensor] * ramp
        elif w.kind == "cascade":
            hops = topology.hop_distances(w.sensor)
            for u in range(n):
                h = int(hops[u])
                if h < 0:
                    continue
                onset = start + h * cascade_lag
                if onset >= end:
                    continue
                out[onset:end, u] += (
                    w.magnitude * (cascade_attenuation ** h) * scale[u])
        else:  # pragma: no cover - blocked by validate
            raise ConfigError(f"unknown anomaly kind {w.kind!r}")
    return out, labels


def generate_synthetic(config: SyntheticConfig,
                       topology: SensorTopology | None = None
                       ) -> tuple[SensorTopology, np.ndarray, np.ndarray]:
    """Seed-deterministic synthetic stream with labeled anomaly windows."""
    config.validate()
    rng = np.random.default_rng(config.seed)
    if topology is None:
        topology = generate_topology(config.sensors, config.types,
                                     config.density, rng)
    elif topology.n != config.sensors:
        raise ConfigError(
            f"provided topology has {topology.n} sensors, config says {config.sensors}")
    clean = generate_normal_stream(topology, config.length, config.noise, rng)
    values, labels = inject_anomalies(
        clean, topology, config.anomalies,
        drift_delay=config.drift_delay,
        cascade_lag=config.cascade_lag,
        cascade_attenuation=config.cascade_attenuation)
    return topology, values, labels
