"""Loading, preprocessing and client partitioning of tabular fairness datasets."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd


class SchemaError(ValueError):
    """The source file does not match the declared schema."""


@dataclass(frozen=True)
class DatasetSchema:
    """Column roles for one CSV source.

    The sensitive column may also appear in categorical_columns, in which
    case it is one-hot encoded into the features as well as extracted as
    the group vector (the usual setup for these benchmarks: the model sees
    the attribute it is audited on).
    """

    label_column: str
    label_positive_value: str
    sensitive_column: str
    categorical_columns: list[str] = field(default_factory=list)
    numeric_columns: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.label_column == self.sensitive_column:
            raise SchemaError("label and sensitive columns must differ")


@dataclass(frozen=True)
class TabularDataset:
    """Encoded feature matrix with binary labels and group memberships."""

    features: np.ndarray
    labels: np.ndarray
    sensitive: np.ndarray
    feature_names: list[str]
    group_count: int

    def __post_init__(self):
        n = self.features.shape[0]
        if not (len(self.labels) == len(self.sensitive) == n):
            raise ValueError(
                f"row mismatch: {n} feature rows, {len(self.labels)} labels, "
                f"{len(self.sensitive)} sensitive entries"
            )
        if self.features.shape[1] != len(self.feature_names):
            raise ValueError("feature_names out of sync with feature matrix")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("non-finite feature values after preprocessing")
        if not np.isin(self.labels, (0, 1)).all():
            raise ValueError("labels must be 0/1")
        if self.group_count < 2:
            raise ValueError(f"need at least 2 groups, got {self.group_count}")
        if self.sensitive.min() < 0 or self.sensitive.max() >= self.group_count:
            raise ValueError("sensitive values outside 0..group_count-1")

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    def subset(self, indices: np.ndarray) -> "TabularDataset":
        """Row-sliced copy; group_count is preserved even if groups drop out."""
        return TabularDataset(
            features=self.features[indices],
            labels=self.labels[indices],
            sensitive=self.sensitive[indices],
            feature_names=self.feature_names,
            group_count=self.group_count,
        )


@dataclass(frozen=True)
class Partition:
    """Disjoint per-client row-index lists into one dataset."""

    client_shards: list[np.ndarray]

    def __post_init__(self):
        seen: set[int] = set()
        for i, shard in enumerate(self.client_shards):
            if len(shard) == 0:
                raise ValueError(f"client {i} received an empty shard")
            ids = set(int(x) for x in shard)
            if seen & ids:
                raise ValueError("client shards overlap")
            seen |= ids


def load_csv(path: str, schema: DatasetSchema) -> TabularDataset:
    """Load and encode one CSV: one-hot categoricals, min-max numerics.

    Numeric columns are scaled to [0,1] (a constant column maps to all
    zeros), categorical columns expand to indicator columns named
    "col=value" with values in sorted order, labels binarize against the
    schema's positive value, and the sensitive column maps to contiguous
    group indices in sorted-value order. Re-loading an already-encoded dump
    fails the header check rather than being encoded twice.
    """
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except pd.errors.EmptyDataError:
        raise ValueError(f"{path}: empty dataset") from None
    if len(frame) == 0:
        raise ValueError(f"{path}: empty dataset")
    frame = frame.apply(lambda col: col.str.strip())

    needed = ([schema.label_column, schema.sensitive_column]
              + list(schema.categorical_columns) + list(schema.numeric_columns))
    missing = [c for c in needed if c not in frame.columns]
    if missing:
        raise SchemaError(f"{path}: columns missing from header: {missing}")

    columns: list[np.ndarray] = []
    names: list[str] = []
    for col in schema.numeric_columns:
        raw = pd.to_numeric(frame[col], errors="coerce").to_numpy(dtype=float)
        bad = np.flatnonzero(~np.isfinite(raw))
        if len(bad):
            # +2: header line plus 1-based numbering.
            raise ValueError(
                f"{path}: line {bad[0] + 2}: cannot parse {frame[col].iloc[bad[0]]!r} "
                f"as a number in column {col!r}"
            )
        lo, hi = raw.min(), raw.max()
        columns.append(np.zeros_like(raw) if hi == lo else (raw - lo) / (hi - lo))
        names.append(col)
    for col in schema.categorical_columns:
        values = sorted(frame[col].unique())
        for v in values:
            columns.append((frame[col] == v).to_numpy(dtype=float))
            names.append(f"{col}={v}")

    labels = (frame[schema.label_column] == schema.label_positive_value).to_numpy(dtype=int)
    groups = sorted(frame[schema.sensitive_column].unique())
    if len(groups) < 2:
        raise ValueError(f"{path}: sensitive column {schema.sensitive_column!r} "
                         f"has {len(groups)} distinct value(s), need >= 2")
    group_index = {v: i for i, v in enumerate(groups)}
    sensitive = frame[schema.sensitive_column].map(group_index).to_numpy(dtype=int)

    return TabularDataset(
        features=np.column_stack(columns),
        labels=labels,
        sensitive=sensitive,
        feature_names=names,
        group_count=len(groups),
    )


def train_test_split(ds: TabularDataset, test_fraction: float, seed: int):
    """Label-stratified split; returns (train_idx, test_idx) into ds rows."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test_fraction must be in (0,1), got {test_fraction}")
    rng = np.random.default_rng((seed, 0x5EED))
    train_parts, test_parts = [], []
    for y in (0, 1):
        idx = np.flatnonzero(ds.labels == y)
        idx = rng.permutation(idx)
        n_test = int(round(len(idx) * test_fraction))
        test_parts.append(idx[:n_test])
        train_parts.append(idx[n_test:])
    return np.sort(np.concatenate(train_parts)), np.sort(np.concatenate(test_parts))


def partition_random(ds: TabularDataset, n_clients: int, seed: int) -> Partition:
    """Shuffle rows and split into near-equal shards (sizes differ by <= 1)."""
    if n_clients < 1:
        raise ValueError(f"n_clients must be >= 1, got {n_clients}")
    if n_clients > ds.n_rows:
        raise ValueError(f"cannot split {ds.n_rows} rows among {n_clients} clients")
    rng = np.random.default_rng((seed, 0xA55))
    order = rng.permutation(ds.n_rows)
    return Partition(client_shards=[np.sort(s) for s in np.array_split(order, n_clients)])


def partition_by_attribute(ds: TabularDataset, n_clients: int, skew: float, seed: int) -> Partition:
    """Group-skewed shards: each client draws `skew` of its rows from a home group.

    Home groups rotate round-robin over clients (client i homes group
    i mod k). The skew fraction of each client's shard comes from its home
    group's pool (capped by the pool size when groups are small), and the
    remainder is drawn uniformly from the rows left over across all groups,
    so skew=0 reduces to a plain random split and skew=1 yields single-group
    shards. Shards need not be exhaustive.
    """
    if not 0.0 <= skew <= 1.0:
        raise ValueError(f"skew must be in [0,1], got {skew}")
    k = ds.group_count
    if n_clients < k:
        raise ValueError(f"need n_clients >= {k} groups, got {n_clients}")
    rng = np.random.default_rng((seed, 0xA77))
    group_pools = []
    for g in range(k):
        pool = np.flatnonzero(ds.sensitive == g)
        if len(pool) == 0:
            raise ValueError(f"group {g} has no rows")
        group_pools.append(rng.permutation(pool))

    shard_size = ds.n_rows // n_clients
    home_target = int(round(skew * shard_size))
    homes = [c % k for c in range(n_clients)]
    clients_per_group = [homes.count(g) for g in range(k)]

    shards: list[list[int]] = [[] for _ in range(n_clients)]
    cursor = [0] * k
    for c in range(n_clients):
        g = homes[c]
        take = min(home_target, len(group_pools[g]) // clients_per_group[g])
        shards[c].extend(group_pools[g][cursor[g]:cursor[g] + take])
        cursor[g] += take

    leftover = np.concatenate([group_pools[g][cursor[g]:] for g in range(k)])
    leftover = rng.permutation(leftover)
    away_target = shard_size - home_target
    pos = 0
    for c in range(n_clients):
        take = min(away_target, len(leftover) - pos)
        shards[c].extend(leftover[pos:pos + take])
        pos += take

    return Partition(client_shards=[np.sort(np.array(s, dtype=int)) for s in shards])
