"""Rendering of stored run results: records file, summary CSV, markdown, figures.

Everything here works off stored records; nothing is re-simulated at render
time. Figures are written as PNG files next to the delimited output.
"""

from __future__ import annotations

import csv
import json
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .aggregation import RULE_KINDS
from .config import config_to_dict
from .simulator import GridCell, RunResult

METRICS = ("acc", "dp", "eod")
CSV_HEADER = ("scheme", "n_malicious", "repeat", "round", "acc", "dp", "eod")


def result_record(result: RunResult, repeat: int) -> dict:
    """One run as a plain-JSON record (line format of the records file)."""
    cfg = result.config
    return {
        "name": cfg.name,
        "scheme": cfg.rule.kind,
        "n_malicious": cfg.n_malicious,
        "repeat": repeat,
        "seeds": {"data": result.seeds.data, "init": result.seeds.init,
                  "train": result.seeds.train},
        "final": {"acc": result.final_report.accuracy,
                  "dp": result.final_report.dp,
                  "eod": result.final_report.eod},
        "rounds": [
            {"acc": log.report.accuracy, "dp": log.report.dp, "eod": log.report.eod,
             "selected": list(log.selected_ids)}
            for log in result.rounds
        ],
        "config": config_to_dict(cfg),
    }


def records_from_cells(cells: list[GridCell]) -> list[dict]:
    records = []
    for cell in cells:
        for repeat, res in enumerate(cell.runs):
            records.append(result_record(res, repeat))
    return records


def write_records(records: list[dict], path: str) -> str:
    if not records:
        raise ValueError("no results to write")
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    return path


def load_records(path: str) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def emit_csv(records: list[dict], path: str) -> str:
    """Summary CSV: one row per round per repeat, deterministically ordered."""
    if not records:
        raise ValueError("no results to write")
    rows = []
    for rec in records:
        for rnd, entry in enumerate(rec["rounds"]):
            rows.append((rec["scheme"], rec["n_malicious"], rec["repeat"], rnd,
                         entry["acc"], entry["dp"], entry["eod"]))
    rows.sort(key=lambda r: (r[0], r[1], r[2], r[3]))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        writer.writerows(rows)
    return path


def _scheme_order(schemes) -> list[str]:
    known = [k for k in RULE_KINDS if k in schemes]
    return known + sorted(set(schemes) - set(known))


def markdown_table(records: list[dict], errors: dict[tuple[str, int], str] | None = None) -> str:
    """Scheme-by-malicious-count table of mean final Acc/DP/EOD values."""
    if not records and not errors:
        raise ValueError("no results to render")
    grouped: dict[tuple[str, int], list[dict]] = {}
    for rec in records:
        grouped.setdefault((rec["scheme"], rec["n_malicious"]), []).append(rec["final"])
    counts = sorted({key[1] for key in grouped} | {key[1] for key in (errors or {})})
    schemes = _scheme_order({key[0] for key in grouped} | {key[0] for key in (errors or {})})

    def label(m: int) -> str:
        return "No attack" if m == 0 else f"{m} malicious"

    header = ["Scheme"] + [f"{label(m)} {metric.upper()}" for m in counts for metric in METRICS]
    lines = ["| " + " | ".join(header) + " |",
             "|" + "---|" * len(header)]
    for scheme in schemes:
        row = [scheme]
        for m in counts:
            finals = grouped.get((scheme, m))
            if finals is None:
                msg = (errors or {}).get((scheme, m), "")
                row += ["n/a" if not msg else "error"] * 3
            else:
                for metric in METRICS:
                    row.append(f"{np.mean([f[metric] for f in finals]):.3f}")
        lines.append("| " + " | ".join(row) + " |")
    if errors:
        lines.append("")
        for (scheme, m), msg in sorted(errors.items()):
            lines.append(f"- {scheme} / {label(m)}: {msg}")
    return "\n".join(lines) + "\n"


def render_figures(records: list[dict], out_dir: str) -> list[str]:
    """Per-metric convergence figures (mean over repeats), one PNG each."""
    if not records:
        raise ValueError("no results to render")
    os.makedirs(out_dir, exist_ok=True)
    grouped: dict[tuple[str, int], list[list[dict]]] = {}
    for rec in records:
        grouped.setdefault((rec["scheme"], rec["n_malicious"]), []).append(rec["rounds"])
    paths = []
    for metric in METRICS:
        fig, ax = plt.subplots(figsize=(7, 4.5))
        for (scheme, m), all_rounds in sorted(grouped.items()):
            depth = min(len(r) for r in all_rounds)
            if depth == 0:
                continue
            curve = np.mean(
                [[entry[metric] for entry in rounds[:depth]] for rounds in all_rounds], axis=0)
            ax.plot(range(depth), curve, label=f"{scheme}, m={m}", linewidth=1.2)
        ax.set_xlabel("round")
        ax.set_ylabel(metric.upper())
        ax.set_title(f"{metric.upper()} per round (mean over repeats)")
        ax.legend(fontsize=7)
        ax.grid(alpha=0.3)
        path = os.path.join(out_dir, f"{metric}_per_round.png")
        fig.tight_layout()
        fig.savefig(path, dpi=130)
        plt.close(fig)
        paths.append(path)
    return paths


def cell_errors(cells: list[GridCell]) -> dict[tuple[str, int], str]:
    return {(c.rule_kind, c.n_malicious): c.error for c in cells if c.error}
