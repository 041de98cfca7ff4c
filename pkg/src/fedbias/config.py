"""Experiment configuration files: TOML in, dataclasses out, and back.

The file is a small key-value tree; every leaf can be overridden from the
command line with dotted keys (e.g. attack.lambda=0). All randomness is
pinned by the three named seeds; there are no environment variables.
"""

from __future__ import annotations

import sys
from dataclasses import asdict, dataclass, field

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .aggregation import RULE_KINDS, AggregationRule
from .attack import AttackConfig
from .data import DatasetSchema
from .simulator import DatasetConfig, ExperimentConfig, PartitionSpec, Seeds


class ConfigError(ValueError):
    """Bad configuration file or override (exit code 2 territory)."""


@dataclass
class GridSpec:
    rules: list[str] = field(default_factory=lambda: list(RULE_KINDS))
    malicious_counts: list[int] = field(default_factory=lambda: [0, 1, 2])


def _section(tree: dict, name: str, required: bool = True) -> dict:
    if name not in tree:
        if required:
            raise ConfigError(f"missing [{name}] section")
        return {}
    if not isinstance(tree[name], dict):
        raise ConfigError(f"[{name}] must be a table")
    return tree[name]


def _build(cls, table: dict, context: str, rename: dict[str, str] | None = None):
    rename = rename or {}
    kwargs = {rename.get(k, k): v for k, v in table.items()}
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"[{context}]: {exc}") from None
    except ValueError as exc:
        raise ConfigError(f"[{context}]: {exc}") from None


def dict_to_config(tree: dict) -> ExperimentConfig:
    dataset_tbl = dict(_section(tree, "dataset"))
    schema_tbl = dataset_tbl.pop("schema", None)
    if schema_tbl is None:
        raise ConfigError("missing [dataset.schema] section")
    schema = _build(DatasetSchema, schema_tbl, "dataset.schema")
    dataset = _build(DatasetConfig, {**dataset_tbl, "schema": schema}, "dataset")

    rule = _build(AggregationRule, _section(tree, "aggregation"), "aggregation")
    attack = _build(AttackConfig, _section(tree, "attack", required=False),
                    "attack", rename={"lambda": "lam"})
    partition = _build(PartitionSpec, _section(tree, "partition", required=False), "partition")
    seeds = _build(Seeds, _section(tree, "seeds", required=False), "seeds")
    fed = _section(tree, "federation", required=False)
    known = {"dataset": dataset, "rule": rule, "attack": attack,
             "partition": partition, "seeds": seeds, "name": tree.get("name", "")}
    return _build(ExperimentConfig, {**fed, **known}, "federation")


def config_to_dict(cfg: ExperimentConfig) -> dict:
    """TOML-shaped tree for one config; inverse of dict_to_config."""
    attack = asdict(cfg.attack)
    attack["lambda"] = attack.pop("lam")
    dataset = asdict(cfg.dataset)
    if dataset.get("synth") is None:
        dataset.pop("synth")
    if dataset.get("synth_rows") is None:
        dataset.pop("synth_rows")
    rule = asdict(cfg.rule)
    if rule.get("select_m") is None:
        rule.pop("select_m")
    tree = {
        "name": cfg.name,
        "dataset": dataset,
        "federation": {
            "n_clients": cfg.n_clients, "n_malicious": cfg.n_malicious,
            "rounds": cfg.rounds, "local_epochs": cfg.local_epochs,
            "lr": cfg.lr, "batch_size": cfg.batch_size,
            "test_fraction": cfg.test_fraction, "repeats": cfg.repeats,
        },
        "partition": asdict(cfg.partition),
        "attack": attack,
        "aggregation": rule,
        "seeds": asdict(cfg.seeds),
    }
    return tree


def grid_spec_from_dict(tree: dict) -> GridSpec:
    return _build(GridSpec, _section(tree, "grid", required=False), "grid")


def load_config_tree(path: str) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def load_config(path: str, overrides: list[str] | None = None) -> tuple[ExperimentConfig, GridSpec]:
    tree = load_config_tree(path)
    if overrides:
        apply_overrides(tree, overrides)
    return dict_to_config(tree), grid_spec_from_dict(tree)


def _coerce(text: str, old):
    if isinstance(old, bool):
        if text.lower() in ("true", "1", "yes"):
            return True
        if text.lower() in ("false", "0", "no"):
            return False
        raise ConfigError(f"cannot parse {text!r} as a boolean")
    try:
        if isinstance(old, int):
            return int(text)
        if isinstance(old, float):
            return float(text)
    except ValueError:
        raise ConfigError(f"cannot parse {text!r} as {type(old).__name__}") from None
    if isinstance(old, list):
        items = [t.strip() for t in text.split(",") if t.strip()]
        return [_coerce(t, old[0]) if old else t for t in items]
    return text


def apply_overrides(tree: dict, overrides: list[str]) -> dict:
    """In-place dotted-key assignments; keys must already exist in the tree."""
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        dotted, text = item.split("=", 1)
        parts = dotted.strip().split(".")
        node = tree
        for part in parts[:-1]:
            if not isinstance(node, dict) or part not in node:
                raise ConfigError(f"override references unknown section {dotted!r}")
            node = node[part]
        leaf = parts[-1]
        if not isinstance(node, dict) or leaf not in node:
            raise ConfigError(f"override references unknown config key {dotted!r}")
        node[leaf] = _coerce(text.strip(), node[leaf])
    return tree


def _toml_scalar(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        return repr(value)
    if isinstance(value, str):
        escaped = value.replace("\\", "\\\\").replace('"', '\\"')
        return f'"{escaped}"'
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_toml_scalar(v) for v in value) + "]"
    raise ConfigError(f"cannot serialize {type(value).__name__} to TOML")


def dumps_toml(tree: dict) -> str:
    """Serialize the restricted config tree (tables of scalars/lists) to TOML."""
    lines: list[str] = []

    def emit(table: dict, prefix: str):
        subtables = []
        for key, value in table.items():
            if isinstance(value, dict):
                subtables.append((key, value))
            else:
                lines.append(f"{key} = {_toml_scalar(value)}")
        for key, value in subtables:
            full = f"{prefix}.{key}" if prefix else key
            lines.append("")
            lines.append(f"[{full}]")
            emit(value, full)

    emit(tree, "")
    return "\n".join(lines) + "\n"
