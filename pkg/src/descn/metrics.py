"""Effect-estimation and uplift-ranking metrics, plus cross-run aggregation."""
from __future__ import annotations

import math
from dataclasses import dataclass, asdict
from typing import Mapping, Sequence

import numpy as np

METRIC_NAMES = ("sqrt_pehe", "ate_error", "att_error", "auuc")
# metrics where a larger value is better
HIGHER_IS_BETTER = {"auuc"}


class MetricError(ValueError):
    pass


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise MetricError(f"length mismatch: {a.size} vs {b.size}")
    if a.size == 0:
        raise MetricError("empty input")
    return a, b


def _groups(y, w):
    y = np.asarray(y, dtype=np.float64).ravel()
    w = np.asarray(w).ravel()
    if y.shape != w.shape:
        raise MetricError(f"length mismatch: {y.size} vs {w.size}")
    T = w == 1
    if not T.any() or T.all():
        raise MetricError("both treated and control rows are required")
    return y, T


def pehe(tau_hat, tau) -> float:
    """Root of the mean squared individual-effect error."""
    a, b = _pair(tau_hat, tau)
    return float(np.sqrt(np.mean((a - b) ** 2)))


def ate_error(tau_hat, tau) -> float:
    a, b = _pair(tau_hat, tau)
    return float(abs(a.mean() - b.mean()))


def observed_att(y, w) -> float:
    """Difference of observed outcome means, treated minus control."""
    y, T = _groups(y, w)
    return float(y[T].mean() - y[~T].mean())


def att_error(tau_hat, y, w) -> float:
    """|mean predicted effect over treated rows - observed treated/control gap|."""
    y, T = _groups(y, w)
    tau_hat = np.asarray(tau_hat, dtype=np.float64).ravel()
    if tau_hat.shape != y.shape:
        raise MetricError(f"length mismatch: {tau_hat.size} vs {y.size}")
    return float(abs(tau_hat[T].mean() - (y[T].mean() - y[~T].mean())))


def uplift_order(score) -> np.ndarray:
    """Indices by descending score; ties keep original order."""
    score = np.asarray(score, dtype=np.float64).ravel()
    return np.argsort(-score, kind="stable")


def uplift_curve(score, y, w) -> np.ndarray:
    """``uplift(k)`` for k = 1..n.

    ``uplift(k) = (mean y of treated in top k - mean y of control in top k) * k / n``,
    a group mean being 0 while that group has no rows in the top k.
    """
    y, T = _groups(y, w)
    order = uplift_order(score)
    if order.size != y.size:
        raise MetricError("score length mismatch")
    ys, ts = y[order], T[order]
    n = y.size
    cnt_t = np.cumsum(ts)
    cnt_c = np.cumsum(~ts)
    sum_t = np.cumsum(np.where(ts, ys, 0.0))
    sum_c = np.cumsum(np.where(ts, 0.0, ys))
    with np.errstate(invalid="ignore", divide="ignore"):
        mean_t = np.where(cnt_t > 0, sum_t / np.maximum(cnt_t, 1), 0.0)
        mean_c = np.where(cnt_c > 0, sum_c / np.maximum(cnt_c, 1), 0.0)
    k = np.arange(1, n + 1)
    return (mean_t - mean_c) * k / n


def auuc_baseline(y, w) -> float:
    n = np.asarray(y).size
    return observed_att(y, w) * (n + 1) / (2 * n)


def auuc(score, y, w) -> float:
    """Area under the uplift curve minus the random-ranking area.

    Area is ``sum_k uplift(k) / n``; the random baseline is
    ``ATT * (n + 1) / (2n)`` with ATT the whole-sample treated-minus-control
    outcome gap.
    """
    curve = uplift_curve(score, y, w)
    return float(curve.sum() / curve.size - auuc_baseline(y, w))


def auuc_oracle(score, y, w) -> float:
    """Same quantity as :func:`auuc`, recomputed by rescanning every prefix."""
    score = [float(s) for s in np.asarray(score).ravel()]
    y = [float(v) for v in np.asarray(y).ravel()]
    w = [int(v) for v in np.asarray(w).ravel()]
    n = len(y)
    if len(score) != n or len(w) != n:
        raise MetricError("length mismatch")
    if all(t == 1 for t in w) or all(t == 0 for t in w):
        raise MetricError("both treated and control rows are required")
    # selection of the best remaining row each time, lowest index on ties
    remaining = list(range(n))
    order = []
    while remaining:
        best = remaining[0]
        for i in remaining:
            if score[i] > score[best]:
                best = i
        order.append(best)
        remaining.remove(best)
    area = 0.0
    for k in range(1, n + 1):
        st = nt = sc = nc = 0.0
        for i in order[:k]:
            if w[i] == 1:
                st += y[i]
                nt += 1
            else:
                sc += y[i]
                nc += 1
        mt = st / nt if nt else 0.0
        mc = sc / nc if nc else 0.0
        area += (mt - mc) * k / n
    area /= n
    yt = [y[i] for i in range(n) if w[i] == 1]
    yc = [y[i] for i in range(n) if w[i] == 0]
    att = sum(yt) / len(yt) - sum(yc) / len(yc)
    return area - att * (n + 1) / (2 * n)


@dataclass
class RunMetrics:
    """Metrics of one run; truth-based ones are ``None`` without ground truth."""

    sqrt_pehe: float | None = None
    ate_error: float | None = None
    att_error: float | None = None
    auuc: float | None = None

    def items(self):
        return [(k, v) for k, v in asdict(self).items() if v is not None]


def run_metrics(tau_hat, y, w, tau=None, score=None) -> RunMetrics:
    """All computable metrics for one set of predictions.

    ``score`` ranks rows for AUUC and defaults to ``tau_hat``.
    """
    score = tau_hat if score is None else score
    out = RunMetrics(att_error=att_error(tau_hat, y, w), auuc=auuc(score, y, w))
    if tau is not None:
        out.sqrt_pehe = pehe(tau_hat, tau)
        out.ate_error = ate_error(tau_hat, tau)
    return out


def relative_improvement(model_value: float, baseline_value: float) -> float | None:
    """(model - baseline) / baseline in percent; ``None`` when the baseline is 0."""
    if baseline_value == 0 or not math.isfinite(baseline_value):
        return None
    return (model_value - baseline_value) / baseline_value * 100.0


@dataclass
class MetricSummary:
    mean: float
    se: float | None
    impr_pct: float | None
    n_runs: int


@dataclass
class AggregateReport:
    """Per-model, per-metric summaries against a named baseline."""

    baseline: str
    rows: dict[str, dict[str, MetricSummary]]

    def models(self) -> list[str]:
        return list(self.rows)


def mean_se(values: Sequence[float]) -> tuple[float, float | None]:
    """Mean and standard error (sample std / sqrt(R)); s.e. needs R >= 2."""
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise MetricError("no values to aggregate")
    if v.size < 2:
        return float(v.mean()), None
    if np.all(v == v[0]):
        return float(v[0]), 0.0
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))


def aggregate(runs: Mapping[str, Sequence[RunMetrics]], baseline: str) -> AggregateReport:
    """Summarise repeated runs per model and compare each to ``baseline``.

    Models keep the order of ``runs``. Improvement of a metric is left ``None``
    when the baseline has no value for it or its mean is 0.
    """
    means: dict[str, dict[str, tuple[float, float | None, int]]] = {}
    for model, lst in runs.items():
        means[model] = {}
        for name in METRIC_NAMES:
            vals = [getattr(r, name) for r in lst if getattr(r, name) is not None]
            if vals:
                m, se = mean_se(vals)
                means[model][name] = (m, se, len(vals))
    rows: dict[str, dict[str, MetricSummary]] = {}
    base = means.get(baseline, {})
    for model, stats in means.items():
        rows[model] = {}
        for name, (m, se, r) in stats.items():
            impr = relative_improvement(m, base[name][0]) if name in base else None
            rows[model][name] = MetricSummary(m, se, impr, r)
    return AggregateReport(baseline, rows)
