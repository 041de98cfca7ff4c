"""Group-fairness metrics and the pairwise-constraint fairness loss.

The loss side follows the reduction view of fair classification: per-group
conditional moments of the model output are mapped through a signed
constraint matrix to pairwise-difference violations, and the loss is the
L2 norm of the ReLU'd violations beyond a budget. Soft (probability)
moments keep the quantity differentiable; hard 0/1 moments are available
for metric-faithful evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

MOMENT_MODES = ("dp", "eod_tpr", "eod_fpr")

FD_PROB_STEP = 1e-4


@dataclass(frozen=True)
class ConstraintMatrix:
    """Signed matrix mapping k group moments to pairwise-difference rows.

    Rows come in (+, -) pairs, one pair per unordered group pair: the
    positive row bounds moment[i] - moment[j], the negative row bounds the
    reverse, so rows[2m+1] == -rows[2m].
    """

    rows: np.ndarray
    row_labels: list[tuple[tuple[int, int], str]]

    @property
    def group_count(self) -> int:
        return self.rows.shape[1]


@dataclass(frozen=True)
class MomentVector:
    """Per-group mean prediction plus the sample count behind each mean."""

    values: np.ndarray
    counts: np.ndarray


@dataclass(frozen=True)
class FairnessReport:
    accuracy: float
    dp: float
    eod: float


def _group_positive_rates(preds: np.ndarray, sensitive: np.ndarray, k: int) -> np.ndarray:
    rates = np.empty(k)
    for a in range(k):
        mask = sensitive == a
        if not mask.any():
            raise ValueError(f"group {a} absent from the sample")
        rates[a] = preds[mask].mean()
    return rates


def demographic_parity(preds: np.ndarray, sensitive: np.ndarray, group_count: int | None = None) -> float:
    """Gap in positive-prediction rates: max over group pairs of |rate_i - rate_j|."""
    k = int(sensitive.max()) + 1 if group_count is None else group_count
    if k < 2:
        raise ValueError(f"need at least 2 groups, got {k}")
    rates = _group_positive_rates(preds, sensitive, k)
    return float(max(abs(rates[i] - rates[j]) for i, j in combinations(range(k), 2)))


def equalized_odds(
    preds: np.ndarray,
    labels: np.ndarray,
    sensitive: np.ndarray,
    group_count: int | None = None,
) -> float:
    """Max over y in {0,1} of the cross-group gap in P(pred=1 | group, Y=y).

    y=1 compares true-positive rates, y=0 false-positive rates; the metric
    is the larger of the two gaps (max over group pairs when k > 2).
    """
    k = int(sensitive.max()) + 1 if group_count is None else group_count
    if k < 2:
        raise ValueError(f"need at least 2 groups, got {k}")
    worst = 0.0
    for y in (0, 1):
        rates = np.empty(k)
        for a in range(k):
            cell = (sensitive == a) & (labels == y)
            if not cell.any():
                raise ValueError(f"empty cell: group {a}, label {y}")
            rates[a] = preds[cell].mean()
        gap = max(abs(rates[i] - rates[j]) for i, j in combinations(range(k), 2))
        worst = max(worst, gap)
    return float(worst)


def build_constraint_matrix(group_count: int) -> ConstraintMatrix:
    """One (+,-) row pair per unordered group pair, 2*C(k,2) rows total.

    For k=2 this is the two-row matrix {[+1,-1], [-1,+1]}; the construction
    keeps one pair per unordered group pair, so the binary case carries no
    duplicated rows.
    """
    if group_count < 2:
        raise ValueError(f"need at least 2 groups, got {group_count}")
    rows = []
    labels = []
    for i, j in combinations(range(group_count), 2):
        plus = np.zeros(group_count)
        plus[i], plus[j] = 1.0, -1.0
        rows.append(plus)
        labels.append(((i, j), "+"))
        rows.append(-plus)
        labels.append(((i, j), "-"))
    return ConstraintMatrix(rows=np.array(rows), row_labels=labels)


def conditional_moments(
    probs: np.ndarray,
    sensitive: np.ndarray,
    mode: str,
    labels: np.ndarray | None = None,
    group_count: int | None = None,
    fill_value: float | None = None,
) -> MomentVector:
    """Per-group mean prediction, optionally restricted by true label.

    mode "dp" averages over every sample of the group; "eod_tpr" restricts
    to Y=1 and "eod_fpr" to Y=0. An empty (group, restriction) cell raises
    unless fill_value is given, in which case the cell's moment reads
    fill_value with count 0 (callers opting in decide what a missing group
    should look like).
    """
    if mode not in MOMENT_MODES:
        raise ValueError(f"unknown mode {mode!r}, expected one of {MOMENT_MODES}")
    if mode != "dp":
        if labels is None:
            raise ValueError(f"mode {mode!r} requires labels")
        restrict = labels == (1 if mode == "eod_tpr" else 0)
    else:
        restrict = np.ones(len(probs), dtype=bool)
    k = int(sensitive.max()) + 1 if group_count is None else group_count
    values = np.zeros(k)
    counts = np.zeros(k, dtype=int)
    for a in range(k):
        cell = (sensitive == a) & restrict
        counts[a] = cell.sum()
        if counts[a] == 0:
            if fill_value is None:
                raise ValueError(f"empty cell: group {a}, mode {mode}")
            values[a] = fill_value
            continue
        values[a] = probs[cell].mean()
    return MomentVector(values=values, counts=counts)


def fairness_loss(
    probs: np.ndarray,
    sensitive: np.ndarray,
    mode: str,
    labels: np.ndarray | None = None,
    epsilon_budget: float = 0.0,
    group_count: int | None = None,
    hard: bool = False,
    fill_value: float | None = None,
) -> float:
    """L2 norm of the positive part of the pairwise constraint violations.

    Computes ||relu(Q @ moments - epsilon_budget)||_2 on soft probability
    moments by default (hard=True thresholds predictions at 0.5 first).
    Only violations exceeding the budget contribute.
    """
    if epsilon_budget < 0:
        raise ValueError(f"epsilon_budget must be >= 0, got {epsilon_budget}")
    vals = (probs >= 0.5).astype(float) if hard else probs
    m = conditional_moments(vals, sensitive, mode, labels=labels,
                            group_count=group_count, fill_value=fill_value)
    q = build_constraint_matrix(len(m.values))
    violations = np.maximum(q.rows @ m.values - epsilon_budget, 0.0)
    return float(np.linalg.norm(violations))


def fairness_loss_grad_probs(
    probs: np.ndarray,
    sensitive: np.ndarray,
    mode: str,
    labels: np.ndarray | None = None,
    epsilon_budget: float = 0.0,
    group_count: int | None = None,
    fill_value: float | None = None,
    path: str = "analytic",
) -> np.ndarray:
    """d(fairness_loss)/d(prob_i) for every sample.

    The analytic path chains through the norm, the ReLU mask, the constraint
    matrix and the per-group means; at the loss's kink points (zero loss, or
    a violation exactly at the budget) the subgradient 0 is returned. The
    finite-difference path re-evaluates the loss under central perturbation
    of each probability and exists as an independent cross-check.
    """
    if path == "finite_difference":
        grad = np.zeros(len(probs))
        for i in range(len(probs)):
            bumped = probs.copy()
            bumped[i] = probs[i] + FD_PROB_STEP
            up = fairness_loss(bumped, sensitive, mode, labels=labels,
                               epsilon_budget=epsilon_budget, group_count=group_count,
                               fill_value=fill_value)
            bumped[i] = probs[i] - FD_PROB_STEP
            down = fairness_loss(bumped, sensitive, mode, labels=labels,
                                 epsilon_budget=epsilon_budget, group_count=group_count,
                                 fill_value=fill_value)
            grad[i] = (up - down) / (2.0 * FD_PROB_STEP)
        return grad
    if path != "analytic":
        raise ValueError(f"unknown gradient path {path!r}")

    m = conditional_moments(probs, sensitive, mode, labels=labels,
                            group_count=group_count, fill_value=fill_value)
    k = len(m.values)
    q = build_constraint_matrix(k)
    violations = np.maximum(q.rows @ m.values - epsilon_budget, 0.0)
    norm = np.linalg.norm(violations)
    if norm == 0.0:
        return np.zeros(len(probs))
    # d||r||/d(moments) = Q^T (r / ||r||) restricted to active rows.
    dmoments = q.rows.T @ (violations / norm)
    if mode == "dp":
        restrict = np.ones(len(probs), dtype=bool)
    else:
        restrict = labels == (1 if mode == "eod_tpr" else 0)
    grad = np.zeros(len(probs))
    for a in range(k):
        if m.counts[a] == 0:
            continue
        cell = (sensitive == a) & restrict
        grad[cell] = dmoments[a] / m.counts[a]
    return grad


def evaluate_model(probs: np.ndarray, labels: np.ndarray, sensitive: np.ndarray,
                   group_count: int | None = None) -> FairnessReport:
    """Accuracy / DP / EOD of thresholded predictions, as one report.

    A group (or group-label cell) absent from the sample makes the
    corresponding metric read 0: with a single group represented there is
    no cross-group disparity to measure. Evaluation sets used for the
    headline numbers always contain every cell.
    """
    preds = (probs >= 0.5).astype(int)
    acc = float((preds == labels).mean())
    try:
        dp = demographic_parity(preds, sensitive, group_count=group_count)
    except ValueError:
        dp = 0.0
    try:
        eod = equalized_odds(preds, labels, sensitive, group_count=group_count)
    except ValueError:
        eod = 0.0
    return FairnessReport(accuracy=acc, dp=dp, eod=eod)
