"""Write run artifacts: summary, per-run metrics, accuracy matrices, curves and traces."""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from ..metrics import export_confusion
from .runner import RunRecord
from .svg import line_charts


def ensure_writable(out_dir) -> Path:
    """Create ``out_dir`` and prove it accepts files; raises ``OSError`` otherwise."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    probe = out / ".write-test"
    probe.write_text("")
    probe.unlink()
    return out


def _num(v):
    return None if v is None or (isinstance(v, float) and math.isnan(v)) else v


def _fmt(v) -> str:
    return "" if v is None else f"{v:.12g}"


def _summary(records: list) -> dict:
    out = {"runs": len(records), "config_hashes": sorted({r.config_hash for r in records}), "per_run": [],
           "aggregate": {}}
    for r in records:
        out["per_run"].append({"seed": r.seed, "config_hash": r.config_hash,
                               "metrics": {k: _num(v) for k, v in r.metrics.items()}, "counts": r.counts,
                               "notes": r.notes, "wall_clock": r.wall_clock})
    for m in ("acc", "bwt", "fwt"):
        vals = [r.metrics[m] for r in records if r.metrics.get(m) is not None]
        out["aggregate"][m] = {"mean": float(np.mean(vals)) if vals else None,
                               "std": float(np.std(vals)) if vals else None}
    return out


def _curves(records: list) -> str:
    def series(key):
        return {f"seed {r.seed}": [(t, v) for t, v in enumerate(r.curves[key])] for r in records}
    return line_charts([("labeled loss per task", "task", series("task_loss")),
                        ("accuracy on seen tasks", "task", series("task_acc")),
                        ("fitness loss per task", "task", series("task_fit_loss"))])


def emit_report(records: list, out_dir, *, with_trace: bool = True) -> dict:
    """Write all report files for ``records`` into ``out_dir``; returns the paths written."""
    if not records:
        raise ValueError("no records to report")
    out = ensure_writable(out_dir)
    paths = {}

    summary = _summary(records)
    paths["summary"] = out / "summary.json"
    paths["summary"].write_text(json.dumps(summary, indent=2, sort_keys=True, allow_nan=False) + "\n")

    paths["metrics"] = out / "metrics.csv"
    with open(paths["metrics"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["seed", "ACC", "BWT", "FWT"])
        for r in records:
            w.writerow([r.seed, _fmt(r.metrics["acc"]), _fmt(r.metrics["bwt"]), _fmt(r.metrics["fwt"])])

    for r in records:
        p = out / f"R_matrix_{r.seed}.csv"
        export_confusion(np.array(r.R), p)
        paths[f"R_{r.seed}"] = p

    paths["curves"] = out / "curves.svg"
    paths["curves"].write_text(_curves(records))

    paths["records"] = out / "records.json"
    paths["records"].write_text(json.dumps([r.to_dict() for r in records], indent=1, sort_keys=True) + "\n")

    if with_trace and any(r.trace for r in records):
        paths["trace"] = out / "trace.jsonl"
        with open(paths["trace"], "w") as fh:
            for r in records:
                for entry in r.trace:
                    fh.write(json.dumps({"seed": r.seed, **entry}, sort_keys=True) + "\n")
    return paths


def load_records(in_dir) -> list:
    path = Path(in_dir) / "records.json"
    return [RunRecord.from_dict(d) for d in json.loads(path.read_text())]


def read_trace(path) -> list:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def analyze_trace(entries: list) -> dict:
    """Cosine and fitness-loss diagnostics per seed from a step trace."""
    by_seed: dict = {}
    for e in entries:
        by_seed.setdefault(e.get("seed", 0), []).append(e)
    out = {}
    for seed, steps in sorted(by_seed.items()):
        labeled = [e for e in steps if e["kind"] == "labeled"]
        unlabeled = [e for e in steps if e["kind"] == "unlabeled"]
        cos = [e["cos"] for e in labeled if e.get("cos") is not None]
        fit = [e["fit_loss"] for e in labeled if e.get("fit_loss") is not None]
        w = max(1, len(fit) // 5)
        per_task = {}
        for e in labeled:
            if e.get("cos") is not None:
                per_task.setdefault(str(e["task"]), []).append(e["cos"])
        out[str(seed)] = {
            "labeled_steps": len(labeled),
            "unlabeled_draws": len(unlabeled),
            "unlabeled_applied": sum(1 for e in unlabeled if e.get("applied")),
            "unlabeled_fraction": len(unlabeled) / len(labeled) if labeled else None,
            "cos_mean": float(np.mean(cos)) if cos else None,
            "cos_by_task": {t: float(np.mean(v)) for t, v in per_task.items()},
            "fit_loss_first_window": float(np.mean(fit[:w])) if fit else None,
            "fit_loss_last_window": float(np.mean(fit[-w:])) if fit else None,
        }
    return out


def write_sweep(report, out_dir) -> Path:
    out = ensure_writable(out_dir)
    path = out / f"sweep_{report.axis}.json"
    path.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    return path
