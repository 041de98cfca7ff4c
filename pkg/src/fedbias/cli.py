"""Command-line front end: run / grid / report / verify / synth."""

from __future__ import annotations

import argparse
import os
import sys

from . import report, synth, verify
from .aggregation import AggregationRule
from .config import ConfigError, GridSpec, load_config
from .data import SchemaError
from .simulator import (ExperimentConfig, attack_impact, mean_report, run_grid,
                        run_repeats)


def _offset_seeds(cfg: ExperimentConfig, by: int) -> ExperimentConfig:
    from dataclasses import replace
    return replace(cfg, seeds=cfg.seeds.offset(by))


def _write_outputs(records: list[dict], out_dir: str,
                   errors: dict | None = None) -> None:
    os.makedirs(out_dir, exist_ok=True)
    report.write_records(records, os.path.join(out_dir, "records.jsonl"))
    report.emit_csv(records, os.path.join(out_dir, "summary.csv"))
    md = report.markdown_table(records, errors=errors)
    with open(os.path.join(out_dir, "report.md"), "w", encoding="utf-8") as fh:
        fh.write(md)
    report.render_figures(records, out_dir)
    print(md)
    print(f"wrote records.jsonl, summary.csv, report.md and figures to {out_dir}")


def _cmd_run(args) -> int:
    cfg, _ = load_config(args.config, overrides=args.overrides)
    if args.seed:
        cfg = _offset_seeds(cfg, args.seed)
    results = run_repeats(cfg, max_workers=args.workers)
    mean = mean_report(results)
    print(f"{cfg.rule.kind} n_malicious={cfg.n_malicious} over {cfg.repeats} repeats: "
          f"acc={mean.accuracy:.3f} dp={mean.dp:.3f} eod={mean.eod:.3f}")
    records = [report.result_record(res, i) for i, res in enumerate(results)]
    _write_outputs(records, args.out)
    return 0


def _cmd_grid(args) -> int:
    cfg, grid = load_config(args.config, overrides=args.overrides)
    if args.seed:
        cfg = _offset_seeds(cfg, args.seed)
    rules = [AggregationRule(**{**_rule_params(cfg.rule), "kind": kind})
             for kind in grid.rules]
    cells = run_grid(cfg, rules, grid.malicious_counts, max_workers=args.workers,
                     progress=True)
    baseline = {c.rule_kind: c.mean for c in cells if c.n_malicious == 0 and c.mean}
    for cell in cells:
        if cell.mean and cell.n_malicious > 0 and cell.rule_kind in baseline:
            impact = attack_impact(baseline[cell.rule_kind], cell.mean)
            dp = "n/a" if impact["dp"] is None else f"{impact['dp']:.2f}%"
            eod = "n/a" if impact["eod"] is None else f"{impact['eod']:.2f}%"
            print(f"[impact] {cell.rule_kind} m={cell.n_malicious}: dp +{dp}, eod +{eod}")
    records = report.records_from_cells(cells)
    _write_outputs(records, args.out, errors=report.cell_errors(cells))
    return 0


def _rule_params(rule: AggregationRule) -> dict:
    from dataclasses import asdict
    return asdict(rule)


def _cmd_report(args) -> int:
    records = report.load_records(args.records)
    _write_outputs(records, args.out)
    return 0


def _cmd_verify(args) -> int:
    failures = verify.run_all()
    print(f"{len(verify.CHECKS) - failures}/{len(verify.CHECKS)} checks passed")
    return 1 if failures else 0


def _cmd_synth(args) -> int:
    os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
    path = synth.write_csv(args.name, args.out, n_rows=args.rows)
    print(f"wrote {args.name} corpus to {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedbias",
        description="Federated-learning simulator for fairness-targeted model poisoning.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="experiment TOML file")
    common.add_argument("--overrides", nargs="*", default=[], metavar="KEY=VALUE",
                        help="dotted-key config overrides, e.g. attack.lambda=0")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--seed", type=int, default=0,
                        help="offset added to all three seeds")
    common.add_argument("--workers", type=int, default=1,
                        help="parallel client-training slots")

    p_run = sub.add_parser("run", parents=[common],
                           help="run one experiment config (all repeats)")
    p_run.set_defaults(fn=_cmd_run)
    p_grid = sub.add_parser("grid", parents=[common],
                            help="run the config's [grid] cross-product")
    p_grid.set_defaults(fn=_cmd_grid)

    p_rep = sub.add_parser("report", help="render stored records to table + figures")
    p_rep.add_argument("--records", required=True, help="records.jsonl from a previous run")
    p_rep.add_argument("--out", default="out", help="output directory")
    p_rep.set_defaults(fn=_cmd_report)

    p_ver = sub.add_parser("verify", help="run the built-in oracle/property checks")
    p_ver.set_defaults(fn=_cmd_verify)

    p_syn = sub.add_parser("synth", help="generate a benchmark-shaped synthetic CSV")
    p_syn.add_argument("--name", required=True, choices=sorted(synth.SPECS))
    p_syn.add_argument("--out", required=True, help="destination CSV path")
    p_syn.add_argument("--rows", type=int, default=None)
    p_syn.set_defaults(fn=_cmd_synth)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, SchemaError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
