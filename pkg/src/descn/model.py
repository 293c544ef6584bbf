"""Shared-trunk uplift networks: TARNet, ESN, X-network and DESCN.

Every model is a shared trunk followed by one small network per head. The
heads emit logits:

    pi   propensity P(W=1 | x)
    mu1  treated response P(Y=1 | W=1, x)
    mu0  control response P(Y=1 | W=0, x)
    tau  pseudo treatment effect, added to the mu0 logit / subtracted from the
         mu1 logit to form the cross responses

Losses are written directly in logit space and return their gradients with
respect to each head's logit, so back-propagation through the heads and the
trunk is exact.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace

import numpy as np

from .data_io import Dataset, batch_iter
from .nn_core import (
    LayerSpec,
    NumericError,
    OptimizerState,
    ParamStore,
    ShapeError,
    backward,
    bce_with_logits,
    forward,
    init_params,
    log_sigmoid,
    optimizer_step,
    sigmoid,
)

KINDS = ("tarnet", "esn_tarnet", "x_network", "esn_only", "descn")
HEAD_ORDER = ("pi", "mu1", "mu0", "tau")
HEADS = {
    "tarnet": ("mu1", "mu0"),
    "esn_tarnet": ("pi", "mu1", "mu0"),
    "esn_only": ("pi", "mu1", "mu0"),
    "x_network": ("mu1", "mu0", "tau"),
    "descn": ("pi", "mu1", "mu0", "tau"),
}
# initialisation stream per head; fixed so that kinds sharing a head start it identically
_HEAD_STREAM = {"pi": 1, "mu1": 2, "mu0": 3, "tau": 4}
ITE_MODES = ("head_diff", "pte", "esn_ratio")

LOSS_TERMS = ("pi", "estr", "escr", "tr", "cr", "cross_tr", "cross_cr")

# propensity clamp used when dividing the entire-space responses by pi
PI_CLAMP = 1e-3
# log-joint-probability ceiling for the label-0 branch of the entire-space loss
_ESTR_LOG_CEIL = -1e-12


class ModelError(ValueError):
    """Model kind, head set or configuration mismatch."""


@dataclass(frozen=True)
class LossWeights:
    """Loss-term weights.

    ``alpha`` propensity, ``beta1``/``beta0`` entire-space treated/control,
    ``gamma1``/``gamma0`` cross treated/control, ``w_tr``/``w_cr`` plain
    per-group responses (TARNet and X-network only).
    """

    alpha: float = 0.0
    beta1: float = 0.0
    beta0: float = 0.0
    gamma1: float = 0.0
    gamma0: float = 0.0
    w_tr: float = 0.0
    w_cr: float = 0.0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not (v >= 0 and math.isfinite(v)):
                raise ModelError(f"loss weight {f.name} must be finite and >= 0, got {v}")

    @classmethod
    def default(cls, kind: str, **overrides) -> "LossWeights":
        w = cls(**{name: 1.0 for name in RELEVANT_WEIGHTS[kind]})
        return replace(w, **overrides) if overrides else w

    def validate(self, kind: str) -> "LossWeights":
        relevant = RELEVANT_WEIGHTS[kind]
        stray = [f.name for f in fields(self) if f.name not in relevant and getattr(self, f.name) != 0]
        if stray:
            raise ModelError(f"weights {stray} do not apply to {kind} and must be 0")
        if not any(getattr(self, name) > 0 for name in relevant):
            raise ModelError("at least one loss weight must be positive")
        return self


RELEVANT_WEIGHTS = {
    "tarnet": ("w_tr", "w_cr"),
    "esn_tarnet": ("alpha", "beta1", "beta0"),
    "esn_only": ("alpha", "beta1", "beta0"),
    "x_network": ("w_tr", "w_cr", "gamma1", "gamma0"),
    "descn": ("alpha", "beta1", "beta0", "gamma1", "gamma0"),
}


@dataclass
class ForwardBundle:
    """Per-sample head logits; absent heads are ``None``."""

    pi_logit: np.ndarray | None = None
    mu1_logit: np.ndarray | None = None
    mu0_logit: np.ndarray | None = None
    tau_logit: np.ndarray | None = None

    def __post_init__(self):
        for name in ("pi_logit", "mu1_logit", "mu0_logit", "tau_logit"):
            v = getattr(self, name)
            if v is not None:
                setattr(self, name, np.atleast_1d(np.asarray(v, dtype=np.float64)))

    @property
    def n(self) -> int:
        for v in (self.mu1_logit, self.mu0_logit, self.pi_logit, self.tau_logit):
            if v is not None:
                return v.shape[0]
        return 0

    def _need(self, name):
        v = getattr(self, name)
        if v is None:
            raise ModelError(f"this model has no {name.split('_')[0]} head")
        return v

    @property
    def pi_hat(self):
        return sigmoid(self._need("pi_logit"))

    @property
    def mu1_hat(self):
        return sigmoid(self._need("mu1_logit"))

    @property
    def mu0_hat(self):
        return sigmoid(self._need("mu0_logit"))

    @property
    def tau_hat(self):
        return sigmoid(self._need("tau_logit"))

    @property
    def estr_log(self):
        """log(mu1_hat * pi_hat)."""
        return log_sigmoid(self._need("mu1_logit")) + log_sigmoid(self._need("pi_logit"))

    @property
    def escr_log(self):
        """log(mu0_hat * (1 - pi_hat))."""
        return log_sigmoid(self._need("mu0_logit")) + log_sigmoid(-self._need("pi_logit"))

    @property
    def cross_tr_logit(self):
        return self._need("mu0_logit") + self._need("tau_logit")

    @property
    def cross_cr_logit(self):
        return self._need("mu1_logit") - self._need("tau_logit")

    @property
    def mu1_cross_hat(self):
        return sigmoid(self.cross_tr_logit)

    @property
    def mu0_cross_hat(self):
        return sigmoid(self.cross_cr_logit)


def _log1mexp(s):
    """log(1 - exp(s)) for s < 0."""
    return np.where(s > -math.log(2.0), np.log(-np.expm1(s)), np.log1p(-np.exp(s)))


def _joint_bce(s, label):
    """BCE of a probability given by its log ``s`` against a 0/1 label.

    Returns per-sample losses and their derivative with respect to ``s``.
    The label-0 branch caps ``s`` at ``_ESTR_LOG_CEIL`` so ``log(1 - p)``
    stays finite when ``p`` rounds to 1.
    """
    capped = np.minimum(s, _ESTR_LOG_CEIL)
    loss = -(label * s + (1.0 - label) * _log1mexp(capped))
    ratio = np.exp(capped) / -np.expm1(capped)  # p / (1 - p)
    ratio = np.where(s > _ESTR_LOG_CEIL, 0.0, ratio)
    return loss, -label + (1.0 - label) * ratio


@dataclass
class LossResult:
    total: float
    parts: dict[str, float]
    logit_grads: dict[str, np.ndarray]
    empty_subsets: int = 0


def compute_loss(bundle: ForwardBundle, y, w, weights: LossWeights) -> LossResult:
    """Weighted sum of all loss terms with non-zero weight.

    Entire-space terms (pi, estr, escr) average over the whole batch; group
    terms (tr, cross_tr / cr, cross_cr) average over the treated / control
    rows. A weighted group term whose group is empty contributes 0 and is
    counted in ``empty_subsets``.
    """
    y = np.asarray(y, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    n = y.shape[0]
    if n == 0:
        raise ModelError("empty batch")
    if w.shape != (n,) or bundle.n != n:
        raise ShapeError("bundle, y and w must have the same length")

    parts = {}
    grads: dict[str, np.ndarray] = {}

    def acc(head, g):
        if head in grads:
            grads[head] += g
        else:
            grads[head] = g

    if weights.alpha:
        z = bundle._need("pi_logit")
        parts["pi"] = float(np.mean(bce_with_logits(z, w)))
        acc("pi", weights.alpha * (sigmoid(z) - w) / n)

    if weights.beta1:
        pl, m1 = bundle._need("pi_logit"), bundle._need("mu1_logit")
        loss, ds = _joint_bce(bundle.estr_log, y * w)
        parts["estr"] = float(np.mean(loss))
        acc("mu1", weights.beta1 * ds * sigmoid(-m1) / n)
        acc("pi", weights.beta1 * ds * sigmoid(-pl) / n)

    if weights.beta0:
        pl, m0 = bundle._need("pi_logit"), bundle._need("mu0_logit")
        loss, ds = _joint_bce(bundle.escr_log, y * (1.0 - w))
        parts["escr"] = float(np.mean(loss))
        acc("mu0", weights.beta0 * ds * sigmoid(-m0) / n)
        acc("pi", -weights.beta0 * ds * sigmoid(pl) / n)

    T = w == 1
    C = ~T
    nT, nC = int(T.sum()), int(C.sum())
    empty = 0

    def group_term(name, weight, logit_fn, subset, size, heads_signs):
        nonlocal empty
        if not weight:
            return
        logit = logit_fn()
        if size == 0:
            parts[name] = 0.0
            empty += 1
            for head, _ in heads_signs:
                acc(head, np.zeros(n))
            return
        parts[name] = float(np.mean(bce_with_logits(logit[subset], y[subset])))
        g = np.where(subset, sigmoid(logit) - y, 0.0) * (weight / size)
        for head, sign in heads_signs:
            acc(head, sign * g)

    group_term("tr", weights.w_tr, lambda: bundle._need("mu1_logit"), T, nT, [("mu1", 1.0)])
    group_term("cr", weights.w_cr, lambda: bundle._need("mu0_logit"), C, nC, [("mu0", 1.0)])
    group_term("cross_tr", weights.gamma1, lambda: bundle.cross_tr_logit, T, nT,
               [("mu0", 1.0), ("tau", 1.0)])
    group_term("cross_cr", weights.gamma0, lambda: bundle.cross_cr_logit, C, nC,
               [("mu1", 1.0), ("tau", -1.0)])

    coef = {"pi": weights.alpha, "estr": weights.beta1, "escr": weights.beta0, "tr": weights.w_tr,
            "cr": weights.w_cr, "cross_tr": weights.gamma1, "cross_cr": weights.gamma0}
    total = float(sum(coef[k] * v for k, v in parts.items()))
    return LossResult(total, parts, grads, empty)


def loss_esn(bundle: ForwardBundle, y, w, weights: LossWeights) -> float:
    """alpha * L_pi + beta1 * L_ESTR + beta0 * L_ESCR."""
    sub = LossWeights(alpha=weights.alpha, beta1=weights.beta1, beta0=weights.beta0)
    return compute_loss(bundle, y, w, sub).total


def loss_xnetwork(bundle: ForwardBundle, y, w, weights: LossWeights) -> float:
    """w_tr * L_TR + w_cr * L_CR + gamma1 * L_CrossTR + gamma0 * L_CrossCR."""
    sub = LossWeights(w_tr=weights.w_tr, w_cr=weights.w_cr, gamma1=weights.gamma1, gamma0=weights.gamma0)
    return compute_loss(bundle, y, w, sub).total


def loss_descn(bundle: ForwardBundle, y, w, weights: LossWeights) -> float:
    """Entire-space loss plus the two cross terms; plain TR/CR terms are dropped."""
    sub = LossWeights(alpha=weights.alpha, beta1=weights.beta1, beta0=weights.beta0,
                      gamma1=weights.gamma1, gamma0=weights.gamma0)
    return compute_loss(bundle, y, w, sub).total


def loss_tarnet(bundle: ForwardBundle, y, w) -> float:
    return compute_loss(bundle, y, w, LossWeights(w_tr=1.0, w_cr=1.0)).total


# ---------------------------------------------------------------------------
# networks


@dataclass
class ModelParams:
    """Trunk and head parameter stores of one model instance."""

    kind: str
    trunk: ParamStore
    heads: dict[str, ParamStore]

    def _stores(self) -> list[ParamStore]:
        return [self.trunk] + [self.heads[h] for h in HEAD_ORDER if h in self.heads]

    def arrays(self) -> list[np.ndarray]:
        return [a for s in self._stores() for a in s.arrays()]

    def weight_flags(self) -> list[bool]:
        return [f for s in self._stores() for f in s.weight_flags()]

    def copy(self) -> "ModelParams":
        return ModelParams(self.kind, self.trunk.copy(), {h: p.copy() for h, p in self.heads.items()})


@dataclass
class TrainConfig:
    shared_hidden: int = 128
    head_hidden: int = 64
    depth: int = 3
    batch_size: int = 500
    epochs: int = 15
    lr: float = 1e-3
    decay: float = 0.95
    l2: float = 1e-3
    loss_weights: LossWeights | None = None
    seed: int = 0
    ite_mode: str = "head_diff"

    def __post_init__(self):
        for name in ("shared_hidden", "head_hidden", "depth", "batch_size"):
            if getattr(self, name) < 1:
                raise ModelError(f"{name} must be >= 1")
        if self.epochs < 0:
            raise ModelError("epochs must be >= 0")
        if self.ite_mode not in ITE_MODES:
            raise ModelError(f"unknown ite_mode {self.ite_mode!r}")

    def weights_for(self, kind: str) -> LossWeights:
        w = self.loss_weights if self.loss_weights is not None else LossWeights.default(kind)
        return w.validate(kind)


def check_kind(kind: str) -> None:
    if kind not in KINDS:
        raise ModelError(f"unknown model kind {kind!r}; choose from {KINDS}")


def check_ite_mode(kind: str, mode: str) -> None:
    if mode not in ITE_MODES:
        raise ModelError(f"unknown ite_mode {mode!r}")
    if mode == "pte" and "tau" not in HEADS[kind]:
        raise ModelError(f"ite_mode 'pte' needs a tau head, which {kind} lacks")
    if mode == "esn_ratio" and "pi" not in HEADS[kind]:
        raise ModelError(f"ite_mode 'esn_ratio' needs a pi head, which {kind} lacks")


def trunk_specs(d: int, cfg: TrainConfig) -> list[LayerSpec]:
    specs = [LayerSpec(d, cfg.shared_hidden, "elu")]
    specs += [LayerSpec(cfg.shared_hidden, cfg.shared_hidden, "elu") for _ in range(cfg.depth - 1)]
    return specs


def head_specs(cfg: TrainConfig) -> list[LayerSpec]:
    specs = []
    width = cfg.shared_hidden
    for _ in range(cfg.depth - 1):
        specs.append(LayerSpec(width, cfg.head_hidden, "elu"))
        width = cfg.head_hidden
    specs.append(LayerSpec(width, 1, "identity"))
    return specs


def init_model(kind: str, d: int, cfg: TrainConfig) -> ModelParams:
    check_kind(kind)
    trunk = init_params(trunk_specs(d, cfg), cfg.seed, stream=0)
    heads = {h: init_params(head_specs(cfg), cfg.seed, stream=_HEAD_STREAM[h]) for h in HEADS[kind]}
    return ModelParams(kind, trunk, heads)


def forward_heads(params: ModelParams, X, record: bool = False):
    """Run the trunk once and every head on its output.

    Returns the bundle, plus the tapes ``(trunk_tape, {head: tape})`` when
    ``record`` is set.
    """
    rep, trunk_tape = forward(params.trunk, X, record=record)
    logits, tapes = {}, {}
    for h, store in params.heads.items():
        out, tape = forward(store, rep, record=record)
        logits[h] = out[:, 0]
        tapes[h] = tape
    bundle = ForwardBundle(*(logits.get(h) for h in HEAD_ORDER))
    if record:
        return bundle, (trunk_tape, tapes)
    return bundle


def loss_and_grads(params: ModelParams, X, y, w, weights: LossWeights):
    """Loss on one batch and its gradient aligned with ``params.arrays()``."""
    bundle, (trunk_tape, tapes) = forward_heads(params, X, record=True)
    result = compute_loss(bundle, y, w, weights)
    n = bundle.n
    d_rep = None
    head_grads = {}
    for h in params.heads:
        g = result.logit_grads.get(h)
        if g is None:
            g = np.zeros(n)
        gs, d_in = backward(tapes[h], g[:, None])
        head_grads[h] = gs
        d_rep = d_in if d_rep is None else d_rep + d_in
    trunk_grads, _ = backward(trunk_tape, d_rep)
    flat = list(trunk_grads.arrays())
    for h in HEAD_ORDER:
        if h in head_grads:
            flat.extend(head_grads[h].arrays())
    return result, flat


def evaluate_loss(params: ModelParams, data: Dataset, weights: LossWeights) -> LossResult:
    bundle = forward_heads(params, data.X)
    return compute_loss(bundle, data.y, data.w, weights)


def train(kind: str, train_data: Dataset, cfg: TrainConfig, init: ModelParams | None = None):
    """Mini-batch Adam training of ``kind`` on ``train_data``.

    Returns ``(params, history)``; ``history`` has one dict per epoch with the
    batch-averaged total and per-term losses, the learning rate used and the
    number of empty-group batch terms.
    """
    check_kind(kind)
    check_ite_mode(kind, cfg.ite_mode)
    weights = cfg.weights_for(kind)
    params = init.copy() if init is not None else init_model(kind, train_data.d, cfg)
    state = OptimizerState(lr=cfg.lr, decay=cfg.decay, l2=cfg.l2)
    history = []
    for epoch in range(cfg.epochs):
        sums = dict.fromkeys(("total",) + LOSS_TERMS, 0.0)
        empty = 0
        batches = batch_iter(train_data.n, cfg.batch_size, cfg.seed, epoch)
        lr = state.lr
        for b, idx in enumerate(batches):
            result, grads = loss_and_grads(params, train_data.X[idx], train_data.y[idx], train_data.w[idx], weights)
            if not math.isfinite(result.total):
                raise NumericError(f"non-finite loss at epoch {epoch} batch {b}")
            try:
                optimizer_step(params, grads, state)
            except NumericError as exc:
                raise NumericError(f"epoch {epoch} batch {b}: {exc}") from None
            sums["total"] += result.total
            for k, v in result.parts.items():
                sums[k] += v
            empty += result.empty_subsets
        state.end_epoch()
        nb = len(batches)
        row = {"epoch": epoch}
        row.update({k: v / nb for k, v in sums.items()})
        row["lr"] = lr
        row["empty_subsets"] = empty
        history.append(row)
    return params, history


def predict_ite(params: ModelParams, X, mode: str = "head_diff") -> np.ndarray:
    """Per-row effect estimate.

    ``head_diff``: mu1_hat - mu0_hat. ``esn_ratio``: ESTR / pi - ESCR / (1 - pi)
    with pi clamped to [1e-3, 1 - 1e-3]. ``pte``: 2 * tau_hat - 1, a signed
    ranking score in (-1, 1) rather than a calibrated effect.
    """
    check_ite_mode(params.kind, mode)
    bundle = forward_heads(params, X)
    return ite_from_bundle(bundle, mode)


def ite_from_bundle(bundle: ForwardBundle, mode: str) -> np.ndarray:
    if mode == "head_diff":
        return bundle.mu1_hat - bundle.mu0_hat
    if mode == "pte":
        return 2.0 * bundle.tau_hat - 1.0
    if mode == "esn_ratio":
        pi = np.clip(bundle.pi_hat, PI_CLAMP, 1.0 - PI_CLAMP)
        return np.exp(bundle.estr_log) / pi - np.exp(bundle.escr_log) / (1.0 - pi)
    raise ModelError(f"unknown ite_mode {mode!r}")
