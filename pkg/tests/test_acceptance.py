"""Acceptance criteria, one or more tests per criterion.

The terminal summary (see conftest.py) prints one PASS/FAIL line per
criterion followed by the effect sizes of the desk-scale comparisons.
"""
import math
import time

import numpy as np
import pytest

from descn.cli import main
from descn.dgp import SCENARIOS, default_config, generate
from descn.experiment import DataSource, ExperimentConfig, ModelSpec, run_experiment
from descn.metrics import ate_error, att_error, auuc, auuc_oracle, pehe
from descn.model import ForwardBundle, LossWeights, TrainConfig, loss_descn, loss_esn, loss_tarnet, loss_xnetwork

from oracles import LOSS_KINDS, gradient_gap, loop_ate_error, loop_att_error, loop_pehe

SEEDS = range(5)


# 1 -------------------------------------------------------------------------


def test_criterion_1_gradient_suite(acceptance_note):
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    worst = {name: max(gradient_gap(name, rng) for _ in range(20)) for name in sorted(LOSS_KINDS)}
    elapsed = time.perf_counter() - start
    acceptance_note("criterion 1: worst gap " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
                    + f"; {elapsed:.1f} s")
    assert all(v < 1e-4 for v in worst.values()), worst
    assert elapsed < 60


# 2 -------------------------------------------------------------------------


def test_criterion_2_reductions():
    rng = np.random.default_rng(7)
    for _ in range(50):
        n = int(rng.integers(2, 40))
        b = ForwardBundle(*rng.normal(scale=3, size=(4, n)))
        y, w = rng.integers(0, 2, n), rng.integers(0, 2, n)
        a, b1, b0 = rng.uniform(0.1, 2, 3)
        esn_w = LossWeights(alpha=a, beta1=b1, beta0=b0, gamma1=0.0, gamma0=0.0)
        assert abs(loss_descn(b, y, w, esn_w) - loss_esn(b, y, w, esn_w)) <= 1e-12
        x_w = LossWeights(w_tr=1.0, w_cr=1.0, gamma1=0.0, gamma0=0.0)
        assert abs(loss_xnetwork(b, y, w, x_w) - loss_tarnet(b, y, w)) <= 1e-12


def _zero(n):
    z = np.zeros(n)
    return ForwardBundle(z, z, z, z)


def test_criterion_2_single_term_hand_values():
    from descn.model import compute_loss

    ones = LossWeights(alpha=1, beta1=1, beta0=1, gamma1=1, gamma0=1)
    one_pos = compute_loss(_zero(1), np.array([1]), np.array([1]), ones).parts
    one_neg = compute_loss(_zero(1), np.array([0]), np.array([1]), ones).parts
    assert abs(one_pos["pi"] - 0.693147) < 1e-6
    assert abs(one_pos["estr"] - 1.386294) < 1e-6
    assert abs(one_neg["estr"] - 0.287682) < 1e-6


def test_criterion_2_descn_two_sample_total(acceptance_note):
    # the stated batch: one treated responder, one control non-responder
    ones = LossWeights(alpha=1, beta1=1, beta0=1, gamma1=1, gamma0=1)
    total = loss_descn(_zero(2), np.array([1, 0]), np.array([1, 0]), ones)
    acceptance_note(f"criterion 2: DESCN two-sample total = {total:.6f} (stated 3.753418)")
    assert abs(total - 3.753418) < 1e-6


# 3 -------------------------------------------------------------------------


def test_criterion_3_auuc_oracle():
    rng = np.random.default_rng(31)
    for _ in range(200):
        n = int(rng.integers(2, 301))
        w = rng.integers(0, 2, n)
        w[0], w[-1] = 1, 0
        y = rng.integers(0, 2, n)
        score = rng.integers(0, 6, n).astype(float) if rng.random() < 0.5 else rng.normal(size=n)
        assert abs(auuc(score, y, w) - auuc_oracle(score, y, w)) <= 1e-12


def test_criterion_3_effect_metric_oracles():
    rng = np.random.default_rng(32)
    for _ in range(200):
        n = int(rng.integers(2, 301))
        tau_hat, tau = rng.normal(size=n), rng.normal(size=n)
        y, w = rng.integers(0, 2, n), rng.integers(0, 2, n)
        w[0], w[-1] = 1, 0
        assert abs(pehe(tau_hat, tau) - loop_pehe(tau_hat, tau)) <= 1e-12
        assert abs(ate_error(tau_hat, tau) - loop_ate_error(tau_hat, tau)) <= 1e-12
        assert abs(att_error(tau_hat, y, w) - loop_att_error(tau_hat, y, w)) <= 1e-12


# 4 -------------------------------------------------------------------------


@pytest.mark.parametrize("scenario", SCENARIOS)
def test_criterion_4_overlap(scenario):
    cfg = default_config(scenario, n_train=50_000, n_test=1000)
    train, _ = generate(cfg)
    lo, hi = cfg.propensity_clip
    assert np.all((train.truth.pi >= lo) & (train.truth.pi <= hi))


def test_criterion_4_randomised_test_split():
    _, test = generate(default_config("imbalanced_biased", n_train=100, n_test=100_000))
    assert abs(test.w.mean() - 0.5) <= 4 * math.sqrt(0.25 / test.n)


def test_criterion_4_confounding_witness(acceptance_note):
    cfg = default_config("imbalanced_biased")
    train, _ = generate(cfg)
    score = train.X @ cfg.propensity_coefs
    gap = score[train.w == 1].mean() - score[train.w == 0].mean()
    acceptance_note(f"criterion 4: confounder-score gap treated - control = {gap:.3f}, "
                    f"treated fraction {train.w.mean():.3f}")
    assert gap > 0


# 5, 6 ----------------------------------------------------------------------

DESK_MODELS = ("tarnet", "esn_tarnet", "x_network", "descn")


@pytest.fixture(scope="module")
def desk_run():
    cfg = ExperimentConfig(
        data=DataSource(preset="imbalanced_biased", n_train=50_000, n_test=20_000, d=20),
        models=[ModelSpec(k, k, TrainConfig(epochs=15)) for k in DESK_MODELS],
        repetitions=len(SEEDS),
        seed=0,
        baseline="tarnet",
    )
    start = time.perf_counter()
    results = run_experiment(cfg)
    elapsed = time.perf_counter() - start
    failed = [c for c in results if c.error]
    assert not failed, [c.error for c in failed]
    per_model = {k: [c.metrics for c in results if c.model == k] for k in DESK_MODELS}
    return per_model, elapsed


def _effect(per_model, metric, model, base):
    a = np.array([getattr(m, metric) for m in per_model[model]])
    b = np.array([getattr(m, metric) for m in per_model[base]])
    diff = a - b
    se = diff.std(ddof=1) / math.sqrt(diff.size)
    wins = int(np.sum(diff <= 0))
    return (f"{model} {a.mean():.4f} vs {base} {b.mean():.4f}: diff {diff.mean():+.4f} "
            f"(paired s.e. {se:.4f}, better on {wins}/{diff.size} seeds)"), a.mean() <= b.mean()


@pytest.mark.slow
def test_criterion_5_pehe_ordering(desk_run, acceptance_note):
    per_model, _ = desk_run
    ok = True
    for model in ("descn", "x_network"):
        line, holds = _effect(per_model, "sqrt_pehe", model, "tarnet")
        acceptance_note("criterion 5: sqrt PEHE " + line)
        ok &= holds
    assert ok


@pytest.mark.slow
def test_criterion_5_runtime(desk_run, acceptance_note):
    _, elapsed = desk_run
    acceptance_note(f"criterion 5: 4 models x {len(SEEDS)} seeds trained and evaluated in {elapsed / 60:.1f} min")
    assert elapsed < 15 * 60


@pytest.mark.slow
def test_criterion_6_esn_ate(desk_run, acceptance_note):
    per_model, _ = desk_run
    line, holds = _effect(per_model, "ate_error", "esn_tarnet", "tarnet")
    acceptance_note("criterion 6: ATE error " + line)
    assert holds


# 7 -------------------------------------------------------------------------

SMALL_EXPERIMENT = """\
data.preset = imbalanced_biased
data.n_train = 2000
data.n_test = 1000
data.d = 8
experiment.models = tarnet, esn_tarnet, x_network, descn
experiment.repetitions = 3
train.epochs = 3
train.shared_hidden = 32
train.head_hidden = 16
"""


def test_criterion_7_determinism(tmp_path):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text(SMALL_EXPERIMENT)
    for name in ("first", "second"):
        assert main(["experiment", "--config", str(cfg), "--out", str(tmp_path / name), "--quiet"]) == 0
    for rel in ("aggregate.csv", "aggregate.txt", "runs.csv"):
        assert (tmp_path / "first" / rel).read_bytes() == (tmp_path / "second" / rel).read_bytes()


# 8 -------------------------------------------------------------------------


@pytest.mark.parametrize("scenario", SCENARIOS)
def test_criterion_8_true_effect_ranking(scenario):
    for seed in SEEDS:
        _, test = generate(default_config(scenario, n_train=10, seed=seed))
        tau = test.truth.tau
        assert auuc(tau, test.y, test.w) > auuc(-tau, test.y, test.w), seed
