"""Round orchestration: broadcast, local training, aggregation, evaluation."""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import synth
from .aggregation import AggregateResult, AggregationRule, aggregate
from .attack import (AttackConfig, LocalTrainResult, fair_regularized_local_train,
                     honest_local_train, malicious_local_train)
from .data import (DatasetSchema, TabularDataset, load_csv, partition_by_attribute,
                   partition_random, train_test_split)
from .fairness import FairnessReport, evaluate_model
from .model import ModelParams, add_delta, forward, init_params


@dataclass
class DatasetConfig:
    path: str
    schema: DatasetSchema
    synth: str | None = None
    synth_rows: int | None = None


@dataclass
class PartitionSpec:
    kind: str = "random"
    skew: float = 1.0

    def __post_init__(self):
        if self.kind not in ("random", "attribute"):
            raise ValueError(f"unknown partition kind {self.kind!r}")


@dataclass
class Seeds:
    data: int = 1
    init: int = 2
    train: int = 3

    def offset(self, by: int) -> "Seeds":
        return Seeds(data=self.data + by, init=self.init + by, train=self.train + by)


@dataclass
class ExperimentConfig:
    dataset: DatasetConfig
    rule: AggregationRule = field(default_factory=lambda: AggregationRule(kind="fedavg"))
    attack: AttackConfig = field(default_factory=AttackConfig)
    partition: PartitionSpec = field(default_factory=PartitionSpec)
    seeds: Seeds = field(default_factory=Seeds)
    n_clients: int = 10
    n_malicious: int = 0
    rounds: int = 50
    local_epochs: int = 1
    lr: float = 0.001
    batch_size: int = 64
    test_fraction: float = 0.2
    repeats: int = 10
    name: str = ""

    def __post_init__(self):
        if self.n_malicious >= self.n_clients:
            raise ValueError(f"n_malicious ({self.n_malicious}) must be < n_clients ({self.n_clients})")
        if self.n_malicious < 0 or self.rounds < 0 or self.local_epochs < 0:
            raise ValueError("n_malicious, rounds and local_epochs must be >= 0")
        if self.lr < 0 or self.batch_size < 1 or self.repeats < 1:
            raise ValueError("invalid lr / batch_size / repeats")


@dataclass
class RoundLog:
    round_index: int
    report: FairnessReport
    client_local_dp: list[float]
    selected_ids: tuple[int, ...]
    wall_time: float


@dataclass
class RunResult:
    final_report: FairnessReport
    rounds: list[RoundLog]
    config: ExperimentConfig
    seeds: Seeds


@dataclass
class GridCell:
    rule_kind: str
    n_malicious: int
    runs: list[RunResult] = field(default_factory=list)
    mean: FairnessReport | None = None
    std: FairnessReport | None = None
    error: str | None = None


def load_dataset(dcfg: DatasetConfig) -> TabularDataset:
    """Load the configured CSV, generating the synthetic stand-in if asked.

    When `synth` names a built-in corpus and the path does not exist yet,
    the file is generated there first (deterministically), so experiment
    configs are self-contained.
    """
    if dcfg.synth and not os.path.exists(dcfg.path):
        os.makedirs(os.path.dirname(os.path.abspath(dcfg.path)), exist_ok=True)
        synth.write_csv(dcfg.synth, dcfg.path, n_rows=dcfg.synth_rows)
    return load_csv(dcfg.path, dcfg.schema)


def evaluate(params: ModelParams, ds: TabularDataset) -> FairnessReport:
    return evaluate_model(forward(params, ds.features), ds.labels, ds.sensitive,
                          group_count=ds.group_count)


def _client_result(cfg: ExperimentConfig, shards: list[TabularDataset],
                   params: ModelParams, round_index: int, client: int,
                   coalition_rate: float | None) -> LocalTrainResult:
    seed = (cfg.seeds.train, round_index, client)
    common = dict(epochs=cfg.local_epochs, lr=cfg.lr, seed=seed,
                  batch_size=cfg.batch_size, client_id=client)
    if client < cfg.n_malicious:
        return malicious_local_train(params, shards[client], cfg.attack,
                                     reference_rate=coalition_rate, **common)
    if cfg.rule.kind == "fairtrade":
        return fair_regularized_local_train(params, shards[client],
                                            cfg.rule.fairtrade_lambda, **common)
    return honest_local_train(params, shards[client], **common)


def _run_loaded(cfg: ExperimentConfig, ds: TabularDataset, max_workers: int = 1) -> RunResult:
    train_idx, _test_idx = train_test_split(ds, cfg.test_fraction, cfg.seeds.data)
    test_ds = ds.subset(_test_idx)
    train_ds = ds.subset(train_idx)
    if cfg.partition.kind == "random":
        part = partition_random(train_ds, cfg.n_clients, cfg.seeds.data)
    else:
        part = partition_by_attribute(train_ds, cfg.n_clients, cfg.partition.skew, cfg.seeds.data)
    shards = [train_ds.subset(ix) for ix in part.client_shards]
    # The attacker coalition knows the label statistics of the shards it
    # controls; that pooled base rate anchors its fairness objective when a
    # shard does not cover every group.
    coalition_rate = None
    if cfg.n_malicious > 0:
        pooled = np.concatenate([shards[c].labels for c in range(cfg.n_malicious)])
        coalition_rate = float(pooled.mean())

    params = init_params(ds.features.shape[1], cfg.seeds.init)
    logs: list[RoundLog] = []
    for t in range(cfg.rounds):
        started = time.perf_counter()
        global_fairness = None
        if cfg.rule.kind == "fairfed":
            global_fairness = evaluate(params, test_ds).dp
        clients = range(cfg.n_clients)
        if max_workers > 1:
            with ThreadPoolExecutor(max_workers=max_workers) as pool:
                results = list(pool.map(
                    lambda c: _client_result(cfg, shards, params, t, c, coalition_rate),
                    clients))
        else:
            results = [_client_result(cfg, shards, params, t, c, coalition_rate)
                       for c in clients]
        try:
            agg: AggregateResult = aggregate(cfg.rule, [r.update for r in results],
                                             global_fairness=global_fairness)
            params = add_delta(params, agg.delta)
        except Exception as exc:
            raise RuntimeError(f"round {t}: aggregation failed: {exc}") from exc
        logs.append(RoundLog(
            round_index=t,
            report=evaluate(params, test_ds),
            client_local_dp=[r.local_report.dp for r in results],
            selected_ids=agg.selected_ids,
            wall_time=time.perf_counter() - started,
        ))
    final = logs[-1].report if logs else evaluate(params, test_ds)
    return RunResult(final_report=final, rounds=logs, config=cfg, seeds=cfg.seeds)


def run(cfg: ExperimentConfig, max_workers: int = 1) -> RunResult:
    """Execute one federated run; a pure function of the config and its seeds."""
    return _run_loaded(cfg, load_dataset(cfg.dataset), max_workers=max_workers)


def run_repeats(cfg: ExperimentConfig, max_workers: int = 1) -> list[RunResult]:
    """cfg.repeats runs with all three seeds offset by the repeat index."""
    ds = load_dataset(cfg.dataset)
    out = []
    for r in range(cfg.repeats):
        shifted = replace(cfg, seeds=cfg.seeds.offset(r))
        out.append(_run_loaded(shifted, ds, max_workers=max_workers))
    return out


def mean_report(results: list[RunResult]) -> FairnessReport:
    return FairnessReport(
        accuracy=float(np.mean([r.final_report.accuracy for r in results])),
        dp=float(np.mean([r.final_report.dp for r in results])),
        eod=float(np.mean([r.final_report.eod for r in results])),
    )


def std_report(results: list[RunResult]) -> FairnessReport:
    return FairnessReport(
        accuracy=float(np.std([r.final_report.accuracy for r in results])),
        dp=float(np.std([r.final_report.dp for r in results])),
        eod=float(np.std([r.final_report.eod for r in results])),
    )


def run_grid(base: ExperimentConfig, rules: list[AggregationRule],
             malicious_counts: list[int], max_workers: int = 1,
             progress: bool = False) -> list[GridCell]:
    """Cross-product of rules x malicious counts, averaged over repeats.

    A failing cell is recorded with its error message and the grid carries
    on; cell order is (rule, count) in the given order.
    """
    cells = []
    for rule in rules:
        for m in malicious_counts:
            cell = GridCell(rule_kind=rule.kind, n_malicious=m)
            try:
                cfg = replace(base, rule=rule, n_malicious=m)
                cell.runs = run_repeats(cfg, max_workers=max_workers)
                cell.mean = mean_report(cell.runs)
                cell.std = std_report(cell.runs)
            except Exception as exc:
                cell.error = f"{type(exc).__name__}: {exc}"
            if progress:
                status = cell.error or (
                    f"acc={cell.mean.accuracy:.3f} dp={cell.mean.dp:.3f} eod={cell.mean.eod:.3f}")
                print(f"[grid] {rule.kind} n_malicious={m}: {status}", flush=True)
            cells.append(cell)
    return cells


def attack_impact(no_attack: FairnessReport, attacked: FairnessReport) -> dict[str, float | None]:
    """Relative DP/EOD increase in percent, with the attacked value as denominator.

    This denominator convention (100 * (attacked - clean) / attacked) is what
    reproduces the headline percentages the experiment protocol reports; a
    zero attacked value makes the increase undefined (None).
    """
    out: dict[str, float | None] = {}
    for key in ("dp", "eod"):
        att, no = getattr(attacked, key), getattr(no_attack, key)
        out[key] = None if att == 0 else 100.0 * (att - no) / att
    return out
