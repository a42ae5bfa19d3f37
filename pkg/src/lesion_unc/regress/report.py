"""Plain-text and CSV renderings of fit reports."""
from __future__ import annotations

import csv
import io


def _fmt(stat) -> str:
    if stat is None:
        return "n/a"
    return f"{stat['mean']:.3f} ± {stat['stderr']:.3f}"


def r2_table(reports: dict) -> str:
    """One row per feature set: CV and test R^2 (mean ± stderr)."""
    rows = [("features", "CV R2", "test R2 (per patient)", "test R2 (pooled)")]
    for name, rep in reports.items():
        rows.append((name, _fmt(rep["cv_r2"]), _fmt(rep["test_r2"]), _fmt(rep["test_r2_pooled"])))
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip() for r in rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def coefficient_table(report: dict, only_selected: bool = True) -> str:
    coefs = report["coefficients"]
    items = sorted(coefs.items(), key=lambda kv: -abs(kv[1]["mean"]))
    if only_selected:
        items = [kv for kv in items if kv[1]["selected"] > 0]
    if not items:
        return "(no features selected)\n"
    w = max(len(k) for k, _ in items)
    n = len(report["seeds"])
    lines = [f"{'feature'.ljust(w)}  {'coef':>9}  {'stderr':>8}  selected"]
    for k, v in items:
        lines.append(f"{k.ljust(w)}  {v['mean']:>9.4f}  {v['stderr']:>8.4f}  {v['selected']}/{n}")
    return "\n".join(lines) + "\n"


def render(reports: dict) -> str:
    """Full text report for a ``{feature_set: report}`` mapping."""
    parts = [r2_table(reports)]
    for name, rep in reports.items():
        parts.append(f"\n[{name}] coefficients (standardised units)\n")
        parts.append(coefficient_table(rep))
    return "".join(parts)


def coefficients_csv(reports: dict) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["feature_set", "feature", "mean", "stderr", "selected"])
    for name, rep in reports.items():
        for feat, v in rep["coefficients"].items():
            writer.writerow([name, feat, repr(float(v["mean"])), repr(float(v["stderr"])), v["selected"]])
    return out.getvalue()
