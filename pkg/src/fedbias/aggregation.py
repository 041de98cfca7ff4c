"""Server-side aggregation rules over flat client update vectors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

RULE_KINDS = ("fedavg", "krum", "multikrum", "median", "tmean", "fairfed", "fairtrade")


@dataclass
class ClientUpdate:
    """One client's parameter delta for a round, in model serialization order."""

    delta: np.ndarray
    sample_count: int
    client_id: int
    local_fairness: float | None = None

    def __post_init__(self):
        if self.sample_count < 1:
            raise ValueError(f"sample_count must be >= 1, got {self.sample_count}")
        if not np.all(np.isfinite(self.delta)):
            raise ValueError(f"client {self.client_id}: non-finite update")


@dataclass
class AggregationRule:
    """Which rule the server runs, plus its parameters.

    f_assumed is the Byzantine count krum/multikrum are configured against;
    select_m=None lets multikrum default to n - f_assumed - 2 at aggregation
    time; fairtrade_lambda is the benign fairness-regularization strength
    applied on honest clients when the fairtrade pipeline is active.
    """

    kind: str
    f_assumed: int = 2
    trim_ratio: float = 0.2
    select_m: int | None = None
    fairfed_beta: float = 1.0
    fairtrade_lambda: float = 40.0

    def __post_init__(self):
        if self.kind not in RULE_KINDS:
            raise ValueError(f"unknown aggregation kind {self.kind!r}, expected one of {RULE_KINDS}")
        if self.f_assumed < 0:
            raise ValueError(f"f_assumed must be >= 0, got {self.f_assumed}")
        if not 0.0 <= self.trim_ratio < 0.5:
            raise ValueError(f"trim_ratio must be in [0, 0.5), got {self.trim_ratio}")
        if self.fairfed_beta < 0:
            raise ValueError(f"fairfed_beta must be >= 0, got {self.fairfed_beta}")


@dataclass(frozen=True)
class AggregateResult:
    delta: np.ndarray
    selected_ids: tuple[int, ...] = ()


def _stack(updates: list[ClientUpdate]) -> np.ndarray:
    if not updates:
        raise ValueError("no updates to aggregate")
    lengths = {len(u.delta) for u in updates}
    if len(lengths) != 1:
        raise ValueError(f"inconsistent update lengths: {sorted(lengths)}")
    return np.stack([u.delta for u in updates])


def fedavg(updates: list[ClientUpdate]) -> np.ndarray:
    """Sample-count weighted mean of the deltas."""
    mat = _stack(updates)
    counts = np.array([u.sample_count for u in updates], dtype=float)
    return (counts / counts.sum()) @ mat


def _krum_scores(updates: list[ClientUpdate], f_assumed: int) -> np.ndarray:
    """Per-candidate sum of squared distances to its n-f-2 nearest neighbors."""
    n = len(updates)
    if n < f_assumed + 3:
        raise ValueError(f"krum needs n >= f+3, got n={n}, f={f_assumed}")
    mat = _stack(updates)
    sq = ((mat[:, None, :] - mat[None, :, :]) ** 2).sum(axis=2)
    keep = n - f_assumed - 2
    scores = np.empty(n)
    for i in range(n):
        others = np.delete(sq[i], i)
        scores[i] = np.sort(others)[:keep].sum()
    return scores


def _krum_order(updates: list[ClientUpdate], f_assumed: int) -> list[int]:
    # Positions sorted by (score, client_id): deterministic tie-breaking.
    scores = _krum_scores(updates, f_assumed)
    return sorted(range(len(updates)), key=lambda i: (scores[i], updates[i].client_id))


def krum(updates: list[ClientUpdate], f_assumed: int) -> np.ndarray:
    """The single update minimizing the Krum score (ties to lowest client id)."""
    return updates[_krum_order(updates, f_assumed)[0]].delta.copy()


def krum_select(updates: list[ClientUpdate], f_assumed: int) -> int:
    """client_id of the update krum() would return; exposed for round logs."""
    return updates[_krum_order(updates, f_assumed)[0]].client_id


def multikrum(updates: list[ClientUpdate], f_assumed: int, select_m: int) -> np.ndarray:
    """Unweighted mean of the select_m lowest-scoring updates."""
    n = len(updates)
    if not 1 <= select_m <= n - f_assumed - 2:
        raise ValueError(f"select_m must be in [1, n-f-2] = [1, {n - f_assumed - 2}], got {select_m}")
    order = _krum_order(updates, f_assumed)[:select_m]
    return np.stack([updates[i].delta for i in order]).mean(axis=0)


def coordinate_median(updates: list[ClientUpdate]) -> np.ndarray:
    """Per-coordinate median (even counts average the two middle values)."""
    return np.median(_stack(updates), axis=0)


def trimmed_mean(updates: list[ClientUpdate], trim_ratio: float) -> np.ndarray:
    """Per-coordinate mean after dropping the t largest and t smallest values."""
    mat = _stack(updates)
    n = mat.shape[0]
    t = int(np.floor(trim_ratio * n))
    if 2 * t >= n:
        raise ValueError(f"trim count {t} per side leaves nothing of {n} updates")
    if t == 0:
        return mat.mean(axis=0)
    return np.sort(mat, axis=0)[t:n - t].mean(axis=0)


def fairfed(updates: list[ClientUpdate], global_fairness: float, beta: float) -> np.ndarray:
    """Sample weights rescaled by exp(-beta * |local fairness - global fairness|).

    Clients whose reported local disparity sits far from the global value are
    exponentially down-weighted; beta=0 recovers fedavg.
    """
    mat = _stack(updates)
    for u in updates:
        if u.local_fairness is None:
            raise ValueError(f"client {u.client_id}: fairfed requires local_fairness")
    counts = np.array([u.sample_count for u in updates], dtype=float)
    gaps = np.array([abs(u.local_fairness - global_fairness) for u in updates])
    weights = (counts / counts.sum()) * np.exp(-beta * gaps)
    return (weights / weights.sum()) @ mat


def fairtrade(updates: list[ClientUpdate]) -> np.ndarray:
    """Server side of the fairtrade pipeline: plain weighted averaging.

    The scheme's substance is client-side (honest clients add a benign
    fairness regularizer, see the trainer module); the server aggregates
    exactly like fedavg.
    """
    return fedavg(updates)


def aggregate(
    rule: AggregationRule,
    updates: list[ClientUpdate],
    global_fairness: float | None = None,
) -> AggregateResult:
    """Dispatch one round of aggregation; reduction order is fixed by client id."""
    updates = sorted(updates, key=lambda u: u.client_id)
    if rule.kind == "fedavg":
        return AggregateResult(delta=fedavg(updates))
    if rule.kind == "krum":
        return AggregateResult(delta=krum(updates, rule.f_assumed),
                               selected_ids=(krum_select(updates, rule.f_assumed),))
    if rule.kind == "multikrum":
        m = rule.select_m or len(updates) - rule.f_assumed - 2
        order = _krum_order(updates, rule.f_assumed)[:m]
        return AggregateResult(delta=multikrum(updates, rule.f_assumed, m),
                               selected_ids=tuple(updates[i].client_id for i in order))
    if rule.kind == "median":
        return AggregateResult(delta=coordinate_median(updates))
    if rule.kind == "tmean":
        return AggregateResult(delta=trimmed_mean(updates, rule.trim_ratio))
    if rule.kind == "fairfed":
        if global_fairness is None:
            raise ValueError("fairfed requires the global fairness value")
        return AggregateResult(delta=fairfed(updates, global_fairness, rule.fairfed_beta))
    if rule.kind == "fairtrade":
        return AggregateResult(delta=fairtrade(updates))
    raise ValueError(f"unknown aggregation kind {rule.kind!r}")
