"""Built-in oracle and property checks, runnable from the CLI.

Each check re-derives its expected values through an independent route
(finite differences, exhaustive enumeration, sorting) rather than through
the code path it validates, and prints one ok/FAIL line.
"""

from __future__ import annotations

import tempfile
from dataclasses import replace
from itertools import combinations

import numpy as np

from . import synth
from .aggregation import (AggregationRule, ClientUpdate, coordinate_median, fairfed,
                          fedavg, krum, multikrum, trimmed_mean)
from .attack import AttackConfig, honest_local_train, malicious_local_train
from .config import dict_to_config, config_to_dict
from .data import DatasetSchema, load_csv
from .fairness import fairness_loss, fairness_loss_grad_probs
from .model import (ModelParams, backward, bce_loss, flatten, forward, init_params,
                    unflatten)
from .simulator import (DatasetConfig, ExperimentConfig, PartitionSpec, Seeds, run)


def _loss_at(vec: np.ndarray, like: ModelParams, X, y, extra) -> float:
    p = unflatten(vec, like)
    probs = forward(p, X)
    val = bce_loss(probs, y)
    if extra is not None:
        val += float(extra @ probs)
    return val


def check_gradients(trials: int = 100, tol: float = 1e-4) -> tuple[bool, str]:
    """backward() vs central finite differences over every coordinate."""
    rng = np.random.default_rng(1234)
    worst = 0.0
    for trial in range(trials):
        d = int(rng.integers(2, 5))
        n = int(rng.integers(3, 8))
        params = init_params(d, seed=int(rng.integers(1 << 30)), hidden_dims=(4, 3))
        X = rng.normal(size=(n, d))
        y = rng.integers(0, 2, size=n).astype(float)
        extra = rng.normal(scale=0.5, size=n) if trial % 2 else None
        grad = flatten(backward(params, X, y, extra_output_grad=extra))
        vec = flatten(params)
        h = 1e-5
        for i in range(len(vec)):
            up, down = vec.copy(), vec.copy()
            up[i] += h
            down[i] -= h
            fd = (_loss_at(up, params, X, y, extra) - _loss_at(down, params, X, y, extra)) / (2 * h)
            denom = max(abs(fd), abs(grad[i]), 1e-8)
            worst = max(worst, abs(fd - grad[i]) / denom)
    return worst <= tol, f"max relative error {worst:.2e} over {trials} instances"


def pairwise_loss_oracle(probs, sensitive, mode, labels, epsilon, k) -> float:
    """Fairness loss by direct enumeration of group pairs, no constraint matrix."""
    if mode == "dp":
        mask = np.ones(len(probs), dtype=bool)
    else:
        mask = labels == (1 if mode == "eod_tpr" else 0)
    moments = []
    for a in range(k):
        cell = (sensitive == a) & mask
        moments.append(probs[cell].mean() if cell.any() else 0.0)
    total = 0.0
    for i, j in combinations(range(k), 2):
        for diff in (moments[i] - moments[j], moments[j] - moments[i]):
            total += max(diff - epsilon, 0.0) ** 2
    return float(np.sqrt(total))


def check_fairness_loss(trials: int = 200, tol: float = 1e-12) -> tuple[bool, str]:
    rng = np.random.default_rng(77)
    worst = 0.0
    for _ in range(trials):
        k = int(rng.integers(2, 4))
        n = int(rng.integers(k * 2, 13))
        probs = rng.random(n)
        sensitive = np.concatenate([np.arange(k), rng.integers(0, k, size=n - k)])
        labels = rng.integers(0, 2, size=n)
        eps = float(rng.choice([0.0, 0.05, 0.2]))
        mode = ("dp", "eod_tpr", "eod_fpr")[int(rng.integers(0, 3))]
        got = fairness_loss(probs, sensitive, mode, labels=labels, epsilon_budget=eps,
                            group_count=k, fill_value=0.0)
        want = pairwise_loss_oracle(probs, sensitive, mode, labels, eps, k)
        worst = max(worst, abs(got - want))
    return worst <= tol, f"max abs deviation {worst:.2e} over {trials} instances"


def check_fairness_grad(trials: int = 50, tol: float = 1e-3) -> tuple[bool, str]:
    rng = np.random.default_rng(99)
    worst = 0.0
    for _ in range(trials):
        n = 12
        probs = rng.uniform(0.05, 0.95, size=n)
        sensitive = np.concatenate([[0, 1], rng.integers(0, 2, size=n - 2)])
        analytic = fairness_loss_grad_probs(probs, sensitive, "dp", group_count=2)
        fd = fairness_loss_grad_probs(probs, sensitive, "dp", group_count=2,
                                      path="finite_difference")
        scale = max(np.abs(fd).max(), 1e-6)
        # Skip instances sitting on a ReLU kink, where the subgradient is free.
        loss = fairness_loss(probs, sensitive, "dp", group_count=2)
        if loss < 1e-4:
            continue
        worst = max(worst, np.abs(analytic - fd).max() / scale)
    return worst <= tol, f"max relative deviation {worst:.2e}"


def check_krum(trials: int = 50) -> tuple[bool, str]:
    rng = np.random.default_rng(5)
    for _ in range(trials):
        n = int(rng.integers(4, 9))
        f = int(rng.integers(0, n - 3 + 1))
        dim = int(rng.integers(1, 6))
        ups = [ClientUpdate(delta=rng.normal(size=dim), sample_count=1, client_id=i)
               for i in range(n)]
        # Exhaustive score: for every candidate, sum of its n-f-2 smallest
        # squared distances to the other updates.
        best, best_key = None, None
        for i in range(n):
            dists = sorted(
                float(((ups[i].delta - ups[j].delta) ** 2).sum())
                for j in range(n) if j != i
            )
            score = sum(dists[:n - f - 2])
            if best_key is None or (score, i) < best_key:
                best_key, best = (score, i), ups[i].delta
        if not np.array_equal(krum(ups, f), best):
            return False, "krum disagreed with exhaustive minimization"
    return True, f"{trials} exhaustive-score instances"


def check_coordinate_rules(trials: int = 20) -> tuple[bool, str]:
    rng = np.random.default_rng(6)
    for _ in range(trials):
        n = int(rng.integers(3, 9))
        dim = 50
        ups = [ClientUpdate(delta=rng.normal(size=dim), sample_count=1, client_id=i)
               for i in range(n)]
        mat = np.stack([u.delta for u in ups])
        med_oracle = np.array([
            (lambda s: s[len(s) // 2] if len(s) % 2 else 0.5 * (s[len(s) // 2 - 1] + s[len(s) // 2]))
            (np.sort(mat[:, c])) for c in range(dim)
        ])
        if not np.allclose(coordinate_median(ups), med_oracle, atol=0, rtol=0):
            return False, "median disagreed with sort oracle"
        t = 1 if n >= 3 else 0
        ratio = (t + 0.01) / n
        trim_oracle = np.array([np.sort(mat[:, c])[t:n - t].mean() for c in range(dim)])
        if not np.allclose(trimmed_mean(ups, ratio), trim_oracle, atol=1e-15):
            return False, "trimmed mean disagreed with hand-trim oracle"
        if not np.allclose(fedavg(ups), mat.mean(axis=0), atol=1e-15):
            return False, "equal-count fedavg is not the unweighted mean"
    return True, f"{trials} random instances"


def check_reductions() -> tuple[bool, str]:
    rng = np.random.default_rng(7)
    frame_path = tempfile.mktemp(suffix=".csv")
    synth.write_csv("adult", frame_path, n_rows=400)
    ds = load_csv(frame_path, synth.builtin_schema("adult"))
    params = init_params(ds.features.shape[1], seed=3)
    honest = honest_local_train(params, ds, epochs=1, lr=0.01, seed=11)
    lam0 = malicious_local_train(params, ds, AttackConfig(lam=0.0), epochs=1, lr=0.01, seed=11)
    if not np.array_equal(honest.update.delta, lam0.update.delta):
        return False, "lambda=0 attack differs from honest training"
    ups = [ClientUpdate(delta=rng.normal(size=8), sample_count=int(rng.integers(1, 30)),
                        client_id=i, local_fairness=float(rng.random()))
           for i in range(6)]
    if not np.allclose(fairfed(ups, global_fairness=0.3, beta=0.0), fedavg(ups), atol=1e-15):
        return False, "beta=0 fairfed differs from fedavg"
    if not np.array_equal(multikrum(ups, f_assumed=1, select_m=1), krum(ups, f_assumed=1)):
        return False, "select_m=1 multikrum differs from krum"
    return True, "lambda=0, beta=0 and select_m=1 identities hold"


def check_determinism() -> tuple[bool, str]:
    path = tempfile.mktemp(suffix=".csv")
    synth.write_csv("adult", path, n_rows=600)
    cfg = ExperimentConfig(
        dataset=DatasetConfig(path=path, schema=synth.builtin_schema("adult")),
        rule=AggregationRule(kind="fedavg"),
        attack=AttackConfig(),
        partition=PartitionSpec(kind="random"),
        seeds=Seeds(data=5, init=6, train=7),
        n_clients=4, n_malicious=1, rounds=3, repeats=1,
    )
    a, b = run(cfg), run(cfg, max_workers=3)
    same = all(
        la.report == lb.report and la.selected_ids == lb.selected_ids
        for la, lb in zip(a.rounds, b.rounds)
    ) and a.final_report == b.final_report
    return same, "sequential and threaded runs are bit-identical"


def check_config_roundtrip() -> tuple[bool, str]:
    cfg = ExperimentConfig(
        dataset=DatasetConfig(path="x.csv", schema=synth.builtin_schema("adult"), synth="adult"),
        rule=AggregationRule(kind="tmean", trim_ratio=0.1),
        attack=AttackConfig(lam=42.0, mode="eod"),
        seeds=Seeds(1, 2, 3), rounds=5,
    )
    again = dict_to_config(config_to_dict(cfg))
    return again == cfg, "config -> tree -> config is the identity"


CHECKS = [
    ("gradient check (backprop vs finite differences)", check_gradients),
    ("fairness loss vs pairwise brute force", check_fairness_loss),
    ("fairness gradient vs finite differences", check_fairness_grad),
    ("krum vs exhaustive score minimization", check_krum),
    ("median / trimmed mean / fedavg coordinate oracles", check_coordinate_rules),
    ("reduction identities", check_reductions),
    ("run determinism across parallelism", check_determinism),
    ("config round-trip", check_config_roundtrip),
]


def run_all(out=print) -> int:
    """Run every check; returns the number of failures."""
    failures = 0
    for name, fn in CHECKS:
        try:
            ok, detail = fn()
        except Exception as exc:
            ok, detail = False, f"raised {type(exc).__name__}: {exc}"
        failures += 0 if ok else 1
        out(f"[{'ok' if ok else 'FAIL'}] {name}: {detail}")
    return failures
