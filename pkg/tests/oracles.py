"""Independent reference computations used by the tests.

Losses here are written in probability space with plain Python loops, so
they share no code path with the logit-space implementation.
"""
import math

import numpy as np

from descn.model import LossWeights, ModelParams, TrainConfig, init_model, loss_and_grads
from descn.nn_core import finite_diff_check


def sig(z):
    return 1.0 / (1.0 + math.exp(-z))


def bce(p, label):
    return -(label * math.log(p) + (1 - label) * math.log(1 - p))


def naive_loss(logits, y, w, weights: LossWeights) -> float:
    """Weighted loss evaluated one row at a time from probabilities."""
    n = len(y)
    pi = [sig(v) for v in logits.get("pi", [0.0] * n)]
    m1 = logits.get("mu1", [0.0] * n)
    m0 = logits.get("mu0", [0.0] * n)
    tl = logits.get("tau", [0.0] * n)
    terms = {k: [] for k in ("pi", "estr", "escr", "tr", "cr", "cross_tr", "cross_cr")}
    for i in range(n):
        yi, wi = int(y[i]), int(w[i])
        terms["pi"].append(bce(pi[i], wi))
        terms["estr"].append(bce(sig(m1[i]) * pi[i], yi * wi))
        terms["escr"].append(bce(sig(m0[i]) * (1 - pi[i]), yi * (1 - wi)))
        if wi == 1:
            terms["tr"].append(bce(sig(m1[i]), yi))
            terms["cross_tr"].append(bce(sig(m0[i] + tl[i]), yi))
        else:
            terms["cr"].append(bce(sig(m0[i]), yi))
            terms["cross_cr"].append(bce(sig(m1[i] - tl[i]), yi))
    coef = {"pi": weights.alpha, "estr": weights.beta1, "escr": weights.beta0, "tr": weights.w_tr,
            "cr": weights.w_cr, "cross_tr": weights.gamma1, "cross_cr": weights.gamma0}
    total = 0.0
    for k, vals in terms.items():
        if coef[k] and vals:
            total += coef[k] * sum(vals) / len(vals)
    return total


LOSS_KINDS = {
    "loss_esn": ("esn_tarnet", ("alpha", "beta1", "beta0")),
    "loss_xnetwork": ("x_network", ("w_tr", "w_cr", "gamma1", "gamma0")),
    "loss_descn": ("descn", ("alpha", "beta1", "beta0", "gamma1", "gamma0")),
    "loss_tarnet": ("tarnet", ()),
}


def random_instance(rng: np.random.Generator, kind: str, n: int = 8, d: int = 3):
    """A small network with perturbed parameters and a batch holding both groups."""
    cfg = TrainConfig(shared_hidden=5, head_hidden=4, depth=2, seed=int(rng.integers(1 << 30)))
    params = init_model(kind, d, cfg)
    for a in params.arrays():
        a += rng.normal(scale=0.2, size=a.shape)
    X = rng.normal(size=(n, d))
    w = rng.integers(0, 2, size=n)
    w[0], w[1] = 1, 0
    y = rng.integers(0, 2, size=n)
    return params, X, y, w


def gradient_gap(loss_name: str, rng: np.random.Generator) -> float:
    """finite_diff_check of one named loss on one random (net, batch) instance."""
    kind, names = LOSS_KINDS[loss_name]
    if names:
        weights = LossWeights(**{k: float(rng.uniform(0.3, 2.0)) for k in names})
    else:
        weights = LossWeights(w_tr=1.0, w_cr=1.0)
    params, X, y, w = random_instance(rng, kind)

    def fn(p: ModelParams):
        result, grads = loss_and_grads(p, X, y, w, weights)
        return result.total, grads

    return finite_diff_check(fn, params, eps=1e-5)


def loop_pehe(tau_hat, tau):
    return math.sqrt(sum((a - b) ** 2 for a, b in zip(tau_hat, tau)) / len(tau))


def loop_ate_error(tau_hat, tau):
    return abs(sum(tau_hat) / len(tau_hat) - sum(tau) / len(tau))


def loop_att_error(tau_hat, y, w):
    t = [i for i in range(len(y)) if w[i] == 1]
    c = [i for i in range(len(y)) if w[i] == 0]
    pred = sum(tau_hat[i] for i in t) / len(t)
    obs = sum(y[i] for i in t) / len(t) - sum(y[i] for i in c) / len(c)
    return abs(pred - obs)
