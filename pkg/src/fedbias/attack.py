"""Client-side local training: honest SGD, the fairness-poisoning objective,
benign fairness regularization, and a crude update-scaling baseline."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .aggregation import ClientUpdate
from .data import TabularDataset
from .fairness import (FairnessReport, evaluate_model, fairness_loss_grad_probs)
from .model import ModelParams, backward, bce_loss, flatten, forward, sgd_step

logger = logging.getLogger(__name__)

ATTACK_MODES = ("dp", "eod")
GRAD_PATHS = ("analytic_soft", "finite_difference")
MOMENT_SCOPES = ("shard", "batch")


@dataclass
class AttackConfig:
    """Strength and shape of the fairness-poisoning objective.

    lam scales the fairness term subtracted from the training loss; mode
    picks which disparity is amplified; moment_scope controls whether the
    group moments behind the fairness gradient are taken over the full
    local shard (refreshed once per epoch) or over each mini-batch.
    """

    lam: float = 100.0
    mode: str = "dp"
    epsilon_budget: float = 0.0
    grad_path: str = "analytic_soft"
    moment_scope: str = "shard"

    def __post_init__(self):
        if not np.isfinite(self.lam) or self.lam < 0:
            raise ValueError(f"lambda must be finite and >= 0, got {self.lam}")
        if self.mode not in ATTACK_MODES:
            raise ValueError(f"unknown attack mode {self.mode!r}")
        if self.epsilon_budget < 0:
            raise ValueError(f"epsilon_budget must be >= 0, got {self.epsilon_budget}")
        if self.grad_path not in GRAD_PATHS:
            raise ValueError(f"unknown grad_path {self.grad_path!r}")
        if self.moment_scope not in MOMENT_SCOPES:
            raise ValueError(f"unknown moment_scope {self.moment_scope!r}")


@dataclass
class LocalTrainResult:
    update: ClientUpdate
    local_report: FairnessReport


def _fairness_grad(probs: np.ndarray, shard: TabularDataset, rows: np.ndarray,
                   modes: tuple[str, ...], epsilon_budget: float, grad_path: str,
                   reference_rate: float | None) -> np.ndarray:
    """Summed fairness-loss gradient over the given shard rows.

    Group/label cells that are empty on these rows take a reference rate as
    their moment instead of raising: the unobservable group is assumed to
    receive base-rate treatment, so a client holding only one group
    amplifies whichever deviation from that reference the model shows on
    its own data. The reference defaults to the shard's label mean; an
    attacker coalition passes the base rate pooled over everything it
    controls.
    """
    path = "finite_difference" if grad_path == "finite_difference" else "analytic"
    if reference_rate is None:
        reference_rate = float(shard.labels[rows].mean())
    grad = np.zeros(len(probs))
    for mode in modes:
        grad += fairness_loss_grad_probs(
            probs, shard.sensitive[rows], mode,
            labels=shard.labels[rows], epsilon_budget=epsilon_budget,
            group_count=shard.group_count, fill_value=reference_rate, path=path,
        )
    return grad


def _local_train(
    global_params: ModelParams,
    shard: TabularDataset,
    epochs: int,
    lr: float,
    seed: int | tuple[int, ...],
    batch_size: int,
    client_id: int,
    fairness_sign_lambda: float = 0.0,
    modes: tuple[str, ...] = ("dp",),
    epsilon_budget: float = 0.0,
    grad_path: str = "analytic_soft",
    moment_scope: str = "shard",
    reference_rate: float | None = None,
) -> LocalTrainResult:
    if shard.n_rows == 0:
        raise ValueError("cannot train on an empty shard")
    if epochs < 0:
        raise ValueError(f"epochs must be >= 0, got {epochs}")
    X, y = shard.features, shard.labels
    n = shard.n_rows
    entropy = seed if isinstance(seed, tuple) else (seed,)
    rng = np.random.default_rng((*entropy, 0x7247))
    params = global_params
    with_fairness = fairness_sign_lambda != 0.0
    all_rows = np.arange(n)
    for _ in range(epochs):
        if with_fairness and moment_scope == "shard":
            shard_hook = fairness_sign_lambda * _fairness_grad(
                forward(params, X), shard, all_rows, modes, epsilon_budget, grad_path,
                reference_rate)
        perm = rng.permutation(n)
        for start in range(0, n, batch_size):
            batch = perm[start:start + batch_size]
            extra = None
            if with_fairness:
                if moment_scope == "shard":
                    extra = shard_hook[batch]
                else:
                    extra = fairness_sign_lambda * _fairness_grad(
                        forward(params, X[batch]), shard, batch, modes,
                        epsilon_budget, grad_path, reference_rate)
            grad = backward(params, X[batch], y[batch], extra_output_grad=extra)
            params = sgd_step(params, grad, lr)
    final_probs = forward(params, X)
    if not np.isfinite(bce_loss(final_probs, y)):
        raise ValueError(f"client {client_id}: local training diverged")
    delta = flatten(params) - flatten(global_params)
    report = evaluate_model(final_probs, y, shard.sensitive, group_count=shard.group_count)
    update = ClientUpdate(delta=delta, sample_count=n, client_id=client_id,
                          local_fairness=report.dp)
    return LocalTrainResult(update=update, local_report=report)


def honest_local_train(global_params: ModelParams, shard: TabularDataset, epochs: int,
                       lr: float, seed: int | tuple[int, ...], batch_size: int = 64,
                       client_id: int = 0) -> LocalTrainResult:
    """Plain mini-batch SGD on BCE from the broadcast parameters."""
    return _local_train(global_params, shard, epochs, lr, seed, batch_size, client_id)


def malicious_local_train(global_params: ModelParams, shard: TabularDataset,
                          cfg: AttackConfig, epochs: int, lr: float, seed: int | tuple[int, ...],
                          batch_size: int = 64, client_id: int = 0,
                          reference_rate: float | None = None) -> LocalTrainResult:
    """SGD on (BCE - lambda * fairness loss): widens the group disparity.

    Only the objective changes; the shard itself is never touched. With
    lam=0 this is bit-identical to honest training. In eod mode the
    true-positive-rate and false-positive-rate violation losses are summed;
    if some (group, label) cell is missing from the shard, eod mode falls
    back to dp with a logged warning.
    """
    if cfg.lam == 0.0:
        return _local_train(global_params, shard, epochs, lr, seed, batch_size, client_id)
    modes: tuple[str, ...] = ("dp",)
    if cfg.mode == "eod":
        cells_ok = all(
            ((shard.sensitive == a) & (shard.labels == yv)).any()
            for a in range(shard.group_count) for yv in (0, 1)
        )
        if cells_ok:
            modes = ("eod_tpr", "eod_fpr")
        else:
            logger.warning("client %d: shard misses a (group, label) cell; "
                           "eod attack falls back to dp mode", client_id)
    return _local_train(global_params, shard, epochs, lr, seed, batch_size, client_id,
                        fairness_sign_lambda=-cfg.lam, modes=modes,
                        epsilon_budget=cfg.epsilon_budget, grad_path=cfg.grad_path,
                        moment_scope=cfg.moment_scope, reference_rate=reference_rate)


def fair_regularized_local_train(global_params: ModelParams, shard: TabularDataset,
                                 benign_lambda: float, epochs: int, lr: float, seed: int | tuple[int, ...],
                                 batch_size: int = 64, client_id: int = 0) -> LocalTrainResult:
    """SGD on (BCE + lambda * fairness loss): the client half of fairtrade."""
    if benign_lambda < 0:
        raise ValueError(f"benign_lambda must be >= 0, got {benign_lambda}")
    if benign_lambda == 0.0:
        return _local_train(global_params, shard, epochs, lr, seed, batch_size, client_id)
    return _local_train(global_params, shard, epochs, lr, seed, batch_size, client_id,
                        fairness_sign_lambda=benign_lambda)


def scaling_baseline(global_params: ModelParams, shard: TabularDataset, factor: float,
                     epochs: int, lr: float, seed: int | tuple[int, ...], batch_size: int = 64,
                     client_id: int = 0) -> LocalTrainResult:
    """Honest update multiplied elementwise; sanity baseline for robust rules."""
    result = honest_local_train(global_params, shard, epochs, lr, seed,
                                batch_size=batch_size, client_id=client_id)
    result.update.delta = result.update.delta * factor
    return result
