"""Repeated train/evaluate runs over several models, aggregated into a report.

An experiment is described by a ``key = value`` config (see
:mod:`descn.config`)::

    data.preset = imbalanced_biased      # or data.train / data.test / data.schema
    data.n_train = 50000
    data.n_test = 20000
    data.d = 20
    experiment.models = tarnet, esn_tarnet, x_network, descn
    experiment.baseline = tarnet
    experiment.repetitions = 5
    experiment.seed = 0
    experiment.workers = 1
    experiment.figures = true
    train.epochs = 15                    # defaults for every model
    model.descn.gamma1 = 0.5             # per-model overrides
    model.big.kind = descn               # extra named variant of a kind

Repetition ``r`` uses seed ``experiment.seed + r`` both to draw the
synthetic data (preset source) and to initialise and shuffle training.
"""
from __future__ import annotations

import csv
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from functools import lru_cache
from pathlib import Path

import numpy as np

from .config import ConfigError, read_config, section
from .data_io import Dataset, fit_standardizer, fmt_float, read_schema, read_table
from .dgp import default_config, generate
from .metrics import METRIC_NAMES, AggregateReport, RunMetrics, aggregate, run_metrics
from .model import (
    KINDS,
    RELEVANT_WEIGHTS,
    LossWeights,
    TrainConfig,
    check_ite_mode,
    check_kind,
    predict_ite,
    train,
)

_INT_FIELDS = {"shared_hidden", "head_hidden", "depth", "batch_size", "epochs", "seed"}
_FLOAT_FIELDS = {"lr", "decay", "l2"}
_WEIGHT_FIELDS = {f.name for f in fields(LossWeights)}


@dataclass(frozen=True)
class DataSource:
    preset: str | None = None
    n_train: int = 50_000
    n_test: int = 20_000
    d: int = 20
    train_path: str | None = None
    test_path: str | None = None
    schema_path: str | None = None

    def load(self, seed: int) -> tuple[Dataset, Dataset]:
        if self.preset is not None:
            return _generate_cached(self.preset, self.d, self.n_train, self.n_test, seed)
        schema = read_schema(self.schema_path) if self.schema_path else None
        return _read_cached(self.train_path, self.test_path, schema)


@lru_cache(maxsize=2)
def _generate_cached(preset, d, n_train, n_test, seed):
    return generate(default_config(preset, d=d, n_train=n_train, n_test=n_test, seed=seed))


@lru_cache(maxsize=2)
def _read_cached(train_path, test_path, schema):
    return read_table(train_path, schema), read_table(test_path, schema)


@dataclass(frozen=True)
class ModelSpec:
    name: str
    kind: str
    train: TrainConfig


@dataclass
class ExperimentConfig:
    data: DataSource
    models: list[ModelSpec]
    repetitions: int = 5
    seed: int = 0
    baseline: str | None = None
    workers: int = 1
    figures: bool = True
    out: str | None = None

    def __post_init__(self):
        if self.repetitions < 1:
            raise ConfigError("experiment.repetitions must be >= 1")
        names = [m.name for m in self.models]
        if not names:
            raise ConfigError("experiment.models is empty")
        if len(set(names)) != len(names):
            raise ConfigError("duplicate model names")
        if self.baseline is None:
            self.baseline = names[0]
        if self.baseline not in names:
            raise ConfigError(f"baseline {self.baseline!r} is not among the models")
        if self.data.preset is None:
            for p in (self.data.train_path, self.data.test_path, self.data.schema_path):
                if p is not None and not Path(p).is_file():
                    raise ConfigError(f"file not found: {p}")
            if self.data.train_path is None or self.data.test_path is None:
                raise ConfigError("file-based data needs data.train and data.test")


def _bool(v: str) -> bool:
    if v.lower() in ("1", "true", "yes", "on"):
        return True
    if v.lower() in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {v!r}")


def train_config_from(entries: dict[str, str], kind: str, base: TrainConfig | None = None) -> TrainConfig:
    """Build a TrainConfig from flat ``field = value`` entries.

    Loss weights not mentioned default to 1 for the terms the kind uses.
    """
    kw, weights = {}, {}
    for key, value in entries.items():
        if key in _INT_FIELDS:
            kw[key] = int(value)
        elif key in _FLOAT_FIELDS:
            kw[key] = float(value)
        elif key == "ite_mode":
            kw[key] = value
        elif key in _WEIGHT_FIELDS:
            weights[key] = float(value)
        elif key != "kind":
            raise ConfigError(f"unknown training option {key!r}")
    stray = {k: v for k, v in weights.items() if k not in RELEVANT_WEIGHTS[kind]}
    if any(stray.values()):
        raise ConfigError(f"weights {sorted(stray)} do not apply to {kind}")
    weights = {k: v for k, v in weights.items() if k in RELEVANT_WEIGHTS[kind]}
    base = base or TrainConfig()
    cfg = replace(base, loss_weights=LossWeights.default(kind, **weights), **kw)
    cfg.weights_for(kind)
    check_ite_mode(kind, cfg.ite_mode)
    return cfg


def experiment_config(cfg: dict[str, str], out: str | None = None) -> ExperimentConfig:
    data_cfg = section(cfg, "data")
    exp = section(cfg, "experiment")
    unknown = [k for k in cfg if k.split(".", 1)[0] not in ("data", "experiment", "train", "model", "output")]
    if unknown:
        raise ConfigError(f"unknown config keys: {unknown}")

    if "preset" in data_cfg:
        data = DataSource(
            preset=data_cfg["preset"],
            n_train=int(data_cfg.get("n_train", 50_000)),
            n_test=int(data_cfg.get("n_test", 20_000)),
            d=int(data_cfg.get("d", 20)),
        )
        default_config(data.preset, d=data.d)  # validates the preset name
    else:
        data = DataSource(train_path=data_cfg.get("train"), test_path=data_cfg.get("test"),
                          schema_path=data_cfg.get("schema"))

    common = section(cfg, "train")
    names = [s.strip() for s in exp.get("models", "tarnet, descn").split(",") if s.strip()]
    models = []
    for name in names:
        own = section(cfg, f"model.{name}")
        kind = own.get("kind", name)
        check_kind(kind)
        models.append(ModelSpec(name, kind, train_config_from({**common, **own}, kind)))

    return ExperimentConfig(
        data=data,
        models=models,
        repetitions=int(exp.get("repetitions", 5)),
        seed=int(exp.get("seed", 0)),
        baseline=exp.get("baseline"),
        workers=int(exp.get("workers", 1)),
        figures=_bool(exp.get("figures", "true")),
        out=out or cfg.get("output"),
    )


def load_experiment(path, out: str | None = None) -> ExperimentConfig:
    return experiment_config(read_config(path), out)


@dataclass
class CellResult:
    model: str
    rep: int
    metrics: RunMetrics | None = None
    history: list[dict] = field(default_factory=list)
    error: str | None = None
    score: np.ndarray | None = None  # test-set ranking score, first repetition only


def evaluate_model(params, test: Dataset, ite_mode: str = "head_diff") -> tuple[RunMetrics, np.ndarray]:
    """Metrics of a trained model on a (standardised) test set.

    In ``pte`` mode the pseudo-effect score only ranks rows for AUUC; the
    effect-size metrics use the head difference.
    """
    check_ite_mode(params.kind, ite_mode)
    tau_hat = predict_ite(params, test.X, "head_diff")
    score = tau_hat if ite_mode == "head_diff" else predict_ite(params, test.X, ite_mode)
    if ite_mode == "esn_ratio":
        tau_hat = score
    truth = test.truth.tau if test.truth is not None else None
    return run_metrics(tau_hat, test.y, test.w, truth, score=score), score


def run_cell(spec: ModelSpec, data: DataSource, seed: int, rep: int) -> CellResult:
    try:
        train_raw, test_raw = data.load(seed)
        st = fit_standardizer(train_raw)
        tr, te = st.apply(train_raw), st.apply(test_raw)
        params, history = train(spec.kind, tr, replace(spec.train, seed=seed))
        metrics, score = evaluate_model(params, te, spec.train.ite_mode)
        return CellResult(spec.name, rep, metrics, history, score=score if rep == 0 else None)
    except Exception as exc:  # reported per cell, the rest of the grid still runs
        return CellResult(spec.name, rep, error=f"{type(exc).__name__}: {exc}",
                          history=[], score=None)


def _cell_args(cfg: ExperimentConfig):
    # repetition-major so consecutive cells reuse the cached dataset
    return [(spec, cfg.data, cfg.seed + r, r) for r in range(cfg.repetitions) for spec in cfg.models]


def run_experiment(cfg: ExperimentConfig, progress=None) -> list[CellResult]:
    jobs = _cell_args(cfg)
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            futures = [pool.submit(run_cell, *a) for a in jobs]
            results = []
            for fut in futures:
                results.append(fut.result())
                if progress:
                    progress(results[-1])
    else:
        results = []
        for a in jobs:
            results.append(run_cell(*a))
            if progress:
                progress(results[-1])
    order = {s.name: i for i, s in enumerate(cfg.models)}
    results.sort(key=lambda c: (order[c.model], c.rep))
    return results


def build_report(cfg: ExperimentConfig, results: list[CellResult]) -> AggregateReport:
    runs = {spec.name: [] for spec in cfg.models}
    for cell in results:
        if cell.metrics is not None:
            runs[cell.model].append(cell.metrics)
    return aggregate({k: v for k, v in runs.items() if v}, cfg.baseline)


def _num(v) -> str:
    return "" if v is None else fmt_float(v)


def report_csv(report: AggregateReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["model", "metric", "mean", "se", "impr_pct"])
    for model, stats in report.rows.items():
        for metric in METRIC_NAMES:
            if metric in stats:
                s = stats[metric]
                w.writerow([model, metric, _num(s.mean), _num(s.se), _num(s.impr_pct)])
    return buf.getvalue()


def runs_csv(results: list[CellResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["model", "rep", *METRIC_NAMES, "error"])
    for cell in results:
        m = cell.metrics
        vals = [_num(getattr(m, k)) if m else "" for k in METRIC_NAMES]
        w.writerow([cell.model, cell.rep, *vals, cell.error or ""])
    return buf.getvalue()


def report_table(report: AggregateReport, cfg: ExperimentConfig, results: list[CellResult]) -> str:
    """Fixed-width grid: mean (+- s.e. when R >= 2) and Impr(baseline) per metric."""
    metrics = [m for m in METRIC_NAMES if any(m in s for s in report.rows.values())]
    show_se = cfg.repetitions >= 2
    head = ["model"]
    for m in metrics:
        head += [m + (" (mean +- s.e.)" if show_se else ""), f"Impr({report.baseline})"]
    rows = []
    failures = {}
    for cell in results:
        if cell.error:
            failures[cell.model] = failures.get(cell.model, 0) + 1
    for spec in cfg.models:
        stats = report.rows.get(spec.name, {})
        row = [spec.name]
        for m in metrics:
            s = stats.get(m)
            if s is None:
                row += ["n/a", ""]
                continue
            cell = f"{s.mean:.4f}"
            if show_se and s.se is not None:
                cell += f" +- {s.se:.4f}"
            row += [cell, "undefined" if s.impr_pct is None else f"{s.impr_pct:+.1f}%"]
        if spec.name in failures:
            row[0] += f" [{failures[spec.name]}/{cfg.repetitions} failed]"
        rows.append(row)
    widths = [max(len(r[i]) for r in [head] + rows) for i in range(len(head))]
    lines = ["  ".join(c.ljust(wd) for c, wd in zip(r, widths)).rstrip() for r in [head] + rows]
    return "\n".join(lines) + "\n"


def write_outputs(cfg: ExperimentConfig, results: list[CellResult], out_dir) -> dict[str, Path]:
    """Write ``aggregate.csv``, ``aggregate.txt``, ``runs.csv`` and figures."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report = build_report(cfg, results)
    paths = {
        "aggregate_csv": out / "aggregate.csv",
        "aggregate_txt": out / "aggregate.txt",
        "runs_csv": out / "runs.csv",
    }
    paths["aggregate_csv"].write_text(report_csv(report), encoding="utf-8")
    paths["aggregate_txt"].write_text(report_table(report, cfg, results), encoding="utf-8")
    paths["runs_csv"].write_text(runs_csv(results), encoding="utf-8")
    if cfg.figures and report.rows:
        from . import plotting

        paths["metrics_png"] = plotting.plot_metric_bars(report, out / "figures" / "metrics.png")
        histories = {spec.name: [c.history for c in results if c.model == spec.name and not c.error]
                     for spec in cfg.models}
        paths["loss_png"] = plotting.plot_training_curves(histories, out / "figures" / "training_loss.png")
        scores = {c.model: c.score for c in results if c.rep == 0 and c.score is not None}
        if scores:
            _, test = cfg.data.load(cfg.seed)
            if test.truth is not None:
                scores = {"true effect": test.truth.tau, **scores}
            paths["uplift_png"] = plotting.plot_uplift_curves(scores, test.y, test.w,
                                                             out / "figures" / "uplift_rep0.png")
    return paths


__all__ = [
    "KINDS",
    "CellResult",
    "DataSource",
    "ExperimentConfig",
    "ModelSpec",
    "build_report",
    "evaluate_model",
    "experiment_config",
    "load_experiment",
    "report_csv",
    "report_table",
    "run_cell",
    "run_experiment",
    "train_config_from",
    "write_outputs",
]
