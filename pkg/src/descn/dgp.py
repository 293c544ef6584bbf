"""Synthetic observational data with known treatment effects.

Covariates are i.i.d. standard normal. For a covariate row ``x``:

    pi   = clip(sigmoid(a . x + a0), lo, hi)          propensity
    p0   = sigmoid(b . x + b0)                         control response
    tau* = scale * sigmoid(c . x + c0) - offset        raw effect
    p1   = clip(p0 + tau*, 0, 1)                       treated response
    tau  = p1 - p0

The training split assigns treatment with probability ``pi`` (confounded);
the test split assigns it by a fair coin, like a randomised trial.
"""
from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from .data_io import Dataset, Truth
from .nn_core import sigmoid

SCENARIOS = ("balanced", "imbalanced_biased")

# Seed of the coefficient recipe behind the presets. Preset coefficients are
# generated configuration, not measured values.
PRESET_RECIPE_SEED = 20220814
PRESET_EFFECT_SCALE = 0.5
PRESET_MEAN_EFFECT = 0.03
_CALIBRATION_ROWS = 200_000


@dataclass
class DgpConfig:
    d: int
    n_train: int
    n_test: int
    propensity_coefs: np.ndarray
    propensity_intercept: float
    base_coefs: np.ndarray
    base_intercept: float
    effect_coefs: np.ndarray
    effect_intercept: float
    effect_scale: float
    effect_offset: float
    propensity_clip: tuple[float, float] = (0.05, 0.95)
    seed: int = 0
    name: str = "custom"

    def __post_init__(self):
        lo, hi = self.propensity_clip
        if not 0 < lo < hi < 1:
            raise ValueError(f"propensity clip must satisfy 0 < lo < hi < 1, got {self.propensity_clip}")
        if self.d <= 0 or self.n_train <= 0 or self.n_test <= 0:
            raise ValueError("d, n_train and n_test must be positive")
        for name in ("propensity_coefs", "base_coefs", "effect_coefs"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.shape != (self.d,):
                raise ValueError(f"{name} must have length d={self.d}")
            setattr(self, name, arr)

    def to_dict(self) -> dict:
        out = asdict(self)
        for k, v in out.items():
            if isinstance(v, np.ndarray):
                out[k] = v.tolist()
        out["propensity_clip"] = list(self.propensity_clip)
        return out


def dgp_surfaces(x, cfg: DgpConfig):
    """Return ``(pi, p0, p1, tau)`` for one covariate row or a matrix of rows."""
    x = np.asarray(x, dtype=np.float64)
    lo, hi = cfg.propensity_clip
    pi = np.clip(sigmoid(x @ cfg.propensity_coefs + cfg.propensity_intercept), lo, hi)
    p0 = sigmoid(x @ cfg.base_coefs + cfg.base_intercept)
    raw = cfg.effect_scale * sigmoid(x @ cfg.effect_coefs + cfg.effect_intercept) - cfg.effect_offset
    p1 = np.clip(p0 + raw, 0.0, 1.0)
    return pi, p0, p1, p1 - p0


def sample_outcomes(p0, p1, rng: np.random.Generator):
    """Draw potential outcomes ``(y0, y1)`` as independent Bernoullis."""
    y0 = (rng.random(np.shape(p0)) < p0).astype(np.int64)
    y1 = (rng.random(np.shape(p1)) < p1).astype(np.int64)
    return y0, y1


def _split(cfg: DgpConfig, n: int, rng: np.random.Generator, randomized: bool) -> Dataset:
    X = rng.standard_normal((n, cfg.d))
    pi, p0, p1, tau = dgp_surfaces(X, cfg)
    assign = np.full(n, 0.5) if randomized else pi
    w = (rng.random(n) < assign).astype(np.int64)
    y0, y1 = sample_outcomes(p0, p1, rng)
    y = np.where(w == 1, y1, y0)
    return Dataset(X, w, y, Truth(assign.copy(), p0, p1, tau))


def generate(cfg: DgpConfig) -> tuple[Dataset, Dataset]:
    """Draw the biased training split and the randomised test split.

    One PCG64 stream seeded with ``cfg.seed`` is consumed in this order:
    train covariates, train assignment, train y0, train y1, then the same for
    the test split.
    """
    rng = np.random.default_rng(int(cfg.seed))
    train = _split(cfg, cfg.n_train, rng, randomized=False)
    test = _split(cfg, cfg.n_test, rng, randomized=True)
    return train, test


# Gauss-Hermite nodes for E[f(s Z)], Z ~ N(0, 1)
_GH_X, _GH_W = np.polynomial.hermite_e.hermegauss(80)
_GH_W = _GH_W / _GH_W.sum()


def _expected_sigmoid(intercept: float, scale: float, clip=(0.0, 1.0)) -> float:
    return float(np.clip(sigmoid(intercept + scale * _GH_X), *clip) @ _GH_W)


def _solve_intercept(target: float, scale: float, clip=(0.0, 1.0)) -> float:
    lo, hi = -30.0, 30.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if _expected_sigmoid(mid, scale, clip) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def default_config(scenario: str, d: int = 20, n_train: int = 50_000, n_test: int = 20_000,
                   seed: int = 0) -> DgpConfig:
    """Preset configurations.

    Coefficients come from ``default_rng(PRESET_RECIPE_SEED)`` regardless of
    ``seed`` (which only drives sampling). The first ``d // 4`` covariates are
    confounders: they drive assignment, the control response and the effect.

    * ``balanced``: assignment ignores covariates, about half treated.
    * ``imbalanced_biased``: confounded assignment with about 20% treated and
      an average effect near 0.03.

    Both share the response surfaces; the effect offset is calibrated on a
    fixed Monte-Carlo sample so the clipped effect averages 0.03.
    """
    if scenario not in SCENARIOS:
        raise ValueError(f"unknown scenario {scenario!r}; choose from {SCENARIOS}")
    if d < 4:
        raise ValueError("presets need d >= 4")
    rng = np.random.default_rng(PRESET_RECIPE_SEED)
    k_conf = d // 4
    k_resp = d // 2
    signs = rng.choice([-1.0, 1.0], size=k_conf)

    prop = np.zeros(d)
    prop[:k_conf] = signs * rng.uniform(0.4, 0.8, size=k_conf)

    base = np.zeros(d)
    base[:k_conf] = signs * rng.uniform(0.3, 0.6, size=k_conf)
    base[k_conf:k_resp] = rng.normal(0.0, 0.4, size=k_resp - k_conf)

    effect = np.zeros(d)
    effect[:k_resp] = rng.normal(0.0, 0.8, size=k_resp)

    clip = (0.05, 0.95)
    if scenario == "balanced":
        prop = np.zeros(d)
        prop_b = 0.0
    else:
        prop_b = _solve_intercept(0.2, float(np.linalg.norm(prop)), clip)
    base_b = _solve_intercept(0.25, float(np.linalg.norm(base)))

    # offset so the population mean of the clipped effect is PRESET_MEAN_EFFECT
    xs = rng.standard_normal((_CALIBRATION_ROWS, d))
    base_p = sigmoid(xs @ base + base_b)
    lift = PRESET_EFFECT_SCALE * sigmoid(xs @ effect)
    lo, hi = -1.0, 1.0
    for _ in range(100):
        offset = 0.5 * (lo + hi)
        if np.mean(np.clip(base_p + lift - offset, 0.0, 1.0) - base_p) > PRESET_MEAN_EFFECT:
            lo = offset
        else:
            hi = offset

    return DgpConfig(
        d=d, n_train=n_train, n_test=n_test,
        propensity_coefs=prop, propensity_intercept=prop_b,
        base_coefs=base, base_intercept=base_b,
        effect_coefs=effect, effect_intercept=0.0,
        effect_scale=PRESET_EFFECT_SCALE, effect_offset=offset,
        propensity_clip=clip, seed=seed, name=scenario,
    )
