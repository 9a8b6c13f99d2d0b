"""Command-line entry point.

Subcommands: ``synth`` (generate a labeled synthetic dataset), ``train``
(stage-wise pipeline training to a checkpoint), ``score`` (per-segment and
per-timestamp anomaly scores), ``evaluate`` (run-adjusted metrics from score
and label files).

Every configuration field can be overridden with ``--set section.key=value``;
the most common ones also have dedicated flags. Exit codes: 0 success,
1 usage or configuration error, 2 data error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt
from . import data as data_mod
from . import metrics as metrics_mod
from . import pipeline as pipeline_mod
from .config import (PipelineConfig, apply_setting, config_to_text,
                     load_config, parse_anomaly_spec)
from .errors import ConfigError, DataError, NumericError


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors map to exit code 1
        raise ConfigError(message)


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key = value config file")
    parser.add_argument("--seed", type=int, help="override the run seed")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--set", action="append", default=[], metavar="SEC.KEY=VAL",
                        help="override any config field, repeatable")


def build_parser() -> _Parser:
    parser = _Parser(prog="cpsdetect",
                     description="Anomaly detection for networked sensor streams.")
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    synth = sub.add_parser("synth", help="generate a labeled synthetic dataset")
    _add_common(synth)
    synth.add_argument("--anomalies",
                       help="anomaly spec, kind:start:duration:sensor[:magnitude] "
                            "joined with |")
    synth.add_argument("--split", type=int,
                       help="row index separating train.csv from test.csv")

    train = sub.add_parser("train", help="train the pipeline to a checkpoint")
    _add_common(train)
    train.add_argument("--data", help="training stream CSV")
    train.add_argument("--topology", help="sensor topology file")
    train.add_argument("--checkpoint", help="checkpoint output path")
    train.add_argument("--train-fraction", type=float,
                       help="use only this leading fraction of the stream")
    train.add_argument("--no-temporal", action="store_true",
                       help="ablation: raw windows instead of temporal embeddings")
    train.add_argument("--no-graph-weighting", action="store_true",
                       help="ablation: binary adjacency instead of learned weights")
    train.add_argument("--no-vgae", action="store_true",
                       help="ablation: pooled embeddings instead of graph encoding")

    score = sub.add_parser("score", help="score a stream with a checkpoint")
    _add_common(score)
    score.add_argument("--data", help="stream CSV to score")
    score.add_argument("--topology", help="sensor topology file")
    score.add_argument("--checkpoint", help="checkpoint path")
    score.add_argument("--dump-graphs", action="store_true",
                       help="write each segment's weighted adjacency as CSV")

    evaluate = sub.add_parser("evaluate", help="metrics from score + label files")
    _add_common(evaluate)
    evaluate.add_argument("--scores", help="timestamps.csv or segments.csv from score")
    evaluate.add_argument("--data", help="labeled stream CSV")
    evaluate.add_argument("--granularity", choices=("timestamp", "segment"),
                          default="timestamp")
    return parser


def _build_config(args) -> PipelineConfig:
    config = load_config(args.config) if args.config else PipelineConfig()
    for override in args.set:
        if "=" not in override or "." not in override.split("=", 1)[0]:
            raise ConfigError(f"--set needs section.key=value, got {override!r}")
        target, value = override.split("=", 1)
        section, key = target.strip().split(".", 1)
        apply_setting(config, section.strip(), key.strip(), value.strip())
    if args.seed is not None:
        config.run.seed = args.seed
        config.synthetic.seed = args.seed
    if args.out is not None:
        config.paths.out = args.out
    for attr, field_name in (("data", "data"), ("topology", "topology"),
                             ("checkpoint", "checkpoint")):
        if getattr(args, attr, None):
            setattr(config.paths, field_name, getattr(args, attr))
    return config


def _out_dir(config: PipelineConfig) -> Path:
    out = Path(config.paths.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _require(value: str, what: str, flag: str) -> str:
    if not value:
        raise ConfigError(f"{what} is required (use {flag} or the config file)")
    return value


def cmd_synth(args) -> int:
    config = _build_config(args)
    synth = config.synthetic
    if args.anomalies is not None:
        synth.anomalies = parse_anomaly_spec(args.anomalies)
    if args.split is not None:
        synth.split = args.split
    topology, values, labels = data_mod.generate_synthetic(synth)
    out = _out_dir(config)
    data_mod.save_topology(out / "topology.txt", topology)
    if synth.split is not None:
        if not 0 < synth.split < synth.length:
            raise ConfigError(f"split {synth.split} outside stream of "
                              f"length {synth.length}")
        data_mod.save_csv(out / "train.csv", topology, values[:synth.split],
                          labels[:synth.split])
        data_mod.save_csv(out / "test.csv", topology,
                          values[synth.split:], labels[synth.split:],
                          timestamps=range(synth.split, synth.length))
        written = "train.csv + test.csv"
    else:
        data_mod.save_csv(out / "data.csv", topology, values, labels)
        written = "data.csv"
    fraction = labels.sum() / len(labels)
    print(f"wrote {written} and topology.txt to {out}")
    print(f"rows={len(labels)} sensors={topology.n} anomaly_fraction={fraction:.4f}")
    return 0


def _write_trace(path: Path, trace) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "loss"])
        for epoch, loss in enumerate(trace):
            writer.writerow([epoch, repr(loss)])


def cmd_train(args) -> int:
    config = _build_config(args)
    if args.train_fraction is not None:
        config.run.train_fraction = args.train_fraction
    if args.no_temporal:
        config.temporal.enabled = False
    if args.no_graph_weighting:
        config.graph.weighting = False
    if args.no_vgae:
        config.vgae.enabled = False
    topology = data_mod.load_topology(
        _require(config.paths.topology, "a topology file", "--topology"))
    stream = data_mod.load_csv(
        _require(config.paths.data, "a training CSV", "--data"), topology)
    print(f"loaded {len(stream)} rows x {topology.n} sensors")

    pipe = pipeline_mod.train_pipeline(config, topology, stream.values,
                                       stream.labels, log=print)
    out = _out_dir(config)
    ckpt_path = Path(config.paths.checkpoint or out / "model.ckpt")
    ckpt.save_checkpoint(ckpt_path, pipe)
    for stage, trace in pipe.traces.items():
        _write_trace(out / f"trace_{stage}.csv", trace)
    print(f"checkpoint written to {ckpt_path}")
    return 0


def cmd_score(args) -> int:
    config = _build_config(args)
    topology = data_mod.load_topology(
        _require(config.paths.topology, "a topology file", "--topology"))
    pipe = ckpt.load_checkpoint(
        _require(config.paths.checkpoint, "a checkpoint", "--checkpoint"), topology)
    stream = data_mod.load_csv(
        _require(config.paths.data, "a data CSV", "--data"), topology)
    segments, results = pipeline_mod.score_stream(pipe, stream.values)
    out = _out_dir(config)

    with (out / "segments.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["segment", "start", "end", "score", "threshold",
                         "predicted"])
        for segment, result in zip(segments, results):
            writer.writerow([result.segment_index, segment.start, segment.end,
                             repr(result.score), repr(result.threshold),
                             result.predicted])

    indices, ts_scores, ts_preds = pipeline_mod.expand_to_timestamps(
        segments, results, pipe.threshold)
    with (out / "timestamps.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "score", "predicted"])
        for i, s, p in zip(indices, ts_scores, ts_preds):
            writer.writerow([int(i), repr(float(s)), int(p)])

    if args.dump_graphs and segments:
        graph_dir = out / "graphs"
        graph_dir.mkdir(exist_ok=True)
        values = stream.values
        if pipe.normalizer is not None:
            values = data_mod.apply_normalizer(pipe.normalizer, values)
        labels = np.zeros(values.shape[0], dtype=np.int64)
        graph_segments = data_mod.segment_stream(
            values, labels, config.window.length, config.window.stride)
        for graph in pipeline_mod.segment_graphs(pipe.config, topology,
                                                 pipe.temporal, graph_segments):
            np.savetxt(graph_dir / f"graph_{graph.segment_index:05d}.csv",
                       graph.adjacency, delimiter=",")

    flagged = sum(r.predicted for r in results)
    print(f"scored {len(results)} segments ({flagged} flagged) "
          f"over {len(indices)} timestamps; outputs in {out}")
    return 0


def _read_score_csv(path, columns) -> dict[str, np.ndarray]:
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DataError(f"{path}: missing header row")
        for column in columns:
            if column not in reader.fieldnames:
                raise DataError(f"{path}: missing column {column!r}")
        rows = list(reader)
    return {column: np.array([float(r[column]) for r in rows])
            for column in columns}


def cmd_evaluate(args) -> int:
    config = _build_config(args)
    scores_path = _require(args.scores or "", "a score CSV", "--scores")
    data_path = _require(args.data or config.paths.data, "a labeled CSV", "--data")
    labels = data_mod.load_labels(data_path)

    if args.granularity == "timestamp":
        table = _read_score_csv(scores_path, ["index", "score", "predicted"])
        indices = table["index"].astype(np.int64)
        if indices.size and indices.max() >= len(labels):
            raise DataError(
                f"score index {indices.max()} exceeds {len(labels)} labeled rows")
        unit_labels = labels[indices]
    else:
        table = _read_score_csv(scores_path, ["start", "end", "score",
                                              "predicted"])
        starts = table["start"].astype(np.int64)
        ends = table["end"].astype(np.int64)
        if starts.size and ends.max() > len(labels):
            raise DataError(
                f"segment end {ends.max()} exceeds {len(labels)} labeled rows")
        unit_labels = np.array([int(labels[s:e].any())
                                for s, e in zip(starts, ends)])
    if len(unit_labels) == 0:
        raise DataError(f"{scores_path}: no score rows to evaluate")

    report = metrics_mod.evaluate_scores(
        unit_labels, table["score"], threshold=None, adjust=True,
        predictions=table["predicted"].astype(np.int64))
    out = _out_dir(config)
    (out / "metrics.txt").write_text(metrics_mod.report_text(report),
                                     encoding="utf-8")
    (out / "metrics.kv").write_text(metrics_mod.report_keyvalues(report),
                                    encoding="utf-8")
    print(metrics_mod.report_text(report), end="")
    print(f"metric files written to {out}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    commands = {"synth": cmd_synth, "train": cmd_train,
                "score": cmd_score, "evaluate": cmd_evaluate}
    try:
        args = parser.parse_args(argv)
        return commands[args.command](args)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except (DataError, FileNotFoundError) as err:
        print(f"data error: {err}", file=sys.stderr)
        return 2
    except NumericError as err:
        print(f"numeric failure: {err}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
