"""Experiment report: per-cell results, fold records, derived summaries and file output."""

from __future__ import annotations

import csv
import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

CELL_COLUMNS = ("seed", "fold", "variant", "method", "grid", "epsilon",
                "clean_accuracy", "success_rate", "robustness")

FIGURES = {
    "attack_success_base": ("model1", "model2"),
    "inoculation_model1": ("model1", "model1_inoc"),
    "inoculation_model2": ("model2", "model2_inoc"),
}


class ReportError(Exception):
    pass


def _plain(obj):
    """Recursively convert numpy scalars/arrays to JSON-native values."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def mean_std(values) -> dict:
    """Mean and population standard deviation."""
    v = np.asarray(list(values), dtype=float)
    if v.size == 0:
        return {"n": 0, "mean": None, "std": None}
    return {"n": int(v.size), "mean": float(v.mean()), "std": float(v.std())}


@dataclass
class ExperimentReport:
    config: dict
    cells: list[dict] = field(default_factory=list)
    folds: list[dict] = field(default_factory=list)
    provenance: dict = field(default_factory=dict)

    def aggregates(self) -> list[dict]:
        """Mean/stdev over (seed, fold) of every (variant, method, grid, epsilon) cell."""
        groups: dict[tuple, list[dict]] = defaultdict(list)
        for c in self.cells:
            groups[(c["variant"], c["method"], c["grid"], c["epsilon"])].append(c)
        out = []
        for (variant, method, grid, eps), rows in groups.items():
            s = mean_std(r["success_rate"] for r in rows)
            r_ = mean_std(r["robustness"] for r in rows)
            out.append({"variant": variant, "method": method, "grid": grid, "epsilon": eps,
                        "n": s["n"], "mean_success": s["mean"], "std_success": s["std"],
                        "mean_robustness": r_["mean"], "std_robustness": r_["std"]})
        return out

    def inoculation_deltas(self) -> dict:
        """Robustness gain of each inoculated variant over its base, per method.

        ``sweep`` averages over runs and the whole epsilon grid, ``default``
        over runs at the reference attack settings.
        """
        index = {(c["seed"], c["fold"], c["variant"], c["method"], c["grid"], c["epsilon"]):
                 c["robustness"] for c in self.cells}
        out: dict = {}
        for c in self.cells:
            if c["variant"].endswith("_inoc"):
                continue
            key = (c["seed"], c["fold"], c["variant"] + "_inoc", c["method"], c["grid"],
                   c["epsilon"])
            if key in index:
                out.setdefault(c["variant"], {}).setdefault(c["method"], {}).setdefault(
                    c["grid"], []).append(index[key] - c["robustness"])
        return {v: {m: {g: mean_std(d) for g, d in grids.items()} for m, grids in ms.items()}
                for v, ms in out.items()}

    def accuracy_summary(self) -> dict:
        per: dict[str, list[float]] = defaultdict(list)
        for rec in self.folds:
            for variant, acc in rec["clean_accuracy"].items():
                per[variant].append(acc)
        return {v: mean_std(a) for v, a in per.items()}

    def score_summary(self) -> dict:
        per: dict[str, list[float]] = defaultdict(list)
        for rec in self.folds:
            for k, s in rec["scores"].items():
                per[k].append(s)
        return {k: mean_std(v) for k, v in per.items()}

    def atgan_summary(self) -> dict:
        per: dict[str, dict[str, list]] = defaultdict(lambda: defaultdict(list))
        for rec in self.folds:
            for variant, a in rec["atgan"].items():
                per[variant]["orig"].append(a["target_accuracy_orig"])
                per[variant]["attack"].append(a["target_accuracy_attack"])
                per[variant]["gap"].append(a["target_accuracy_orig"] - a["target_accuracy_attack"])
                obj = a["objective"]
                if len(obj) >= 2:
                    per[variant]["descent"].append(float(obj[1] < obj[0]))
        return {v: {k: mean_std(x) for k, x in d.items()} for v, d in per.items()}

    def summary(self) -> dict:
        return {"aggregates": self.aggregates(), "inoculation": self.inoculation_deltas(),
                "clean_accuracy": self.accuracy_summary(), "scores": self.score_summary(),
                "attack_generator": self.atgan_summary()}

    def to_dict(self) -> dict:
        return _plain({"config": self.config, "provenance": self.provenance,
                       "summary": self.summary(), "folds": self.folds, "cells": self.cells})

    def to_json(self) -> str:
        # repr-based float output is the shortest string that parses back to the same double
        return json.dumps(self.to_dict(), indent=1, allow_nan=False) + "\n"

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json())
        return path

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentReport":
        try:
            return cls(config=d["config"], cells=d["cells"], folds=d["folds"],
                       provenance=d.get("provenance", {}))
        except (KeyError, TypeError) as exc:
            raise ReportError(f"malformed report: {exc}") from None

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentReport":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except json.JSONDecodeError as exc:
            raise ReportError(f"{path}: not a JSON report ({exc})") from None

    def merge(self, other: "ExperimentReport") -> "ExperimentReport":
        return ExperimentReport(self.config, self.cells + other.cells, self.folds + other.folds,
                                {**self.provenance, **other.provenance})


def write_cells_csv(report: ExperimentReport, path: Path) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CELL_COLUMNS)
        for c in report.cells:
            w.writerow(["" if c.get(k) is None else repr(c[k]) if isinstance(c[k], float)
                         else c[k] for k in CELL_COLUMNS])
    return path


def plot_series(report: ExperimentReport, method: str = "FGSM") -> dict[str, list[dict]]:
    """Success-versus-epsilon series for the base and inoculation comparisons."""
    aggs = [a for a in report.aggregates() if a["method"] == method and a["grid"] == "sweep"]
    out = {}
    for fig, variants in FIGURES.items():
        rows = [{"variant": a["variant"], "epsilon": a["epsilon"],
                 "mean_success": a["mean_success"], "std_success": a["std_success"]}
                for v in variants for a in aggs if a["variant"] == v]
        if rows:
            out[fig] = rows
    return out


def _render(fig_name: str, rows: list[dict], method: str, path: Path) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 3.5))
    for variant in dict.fromkeys(r["variant"] for r in rows):
        pts = [r for r in rows if r["variant"] == variant]
        eps = np.array([r["epsilon"] for r in pts])
        mean = np.array([r["mean_success"] for r in pts])
        std = np.array([r["std_success"] for r in pts])
        ax.plot(eps, mean, marker="o", ms=3, label=variant)
        ax.fill_between(eps, mean - std, mean + std, alpha=0.2)
    ax.set_xlabel("epsilon")
    ax.set_ylabel(f"{method} attack success rate")
    ax.set_ylim(0, 1)
    ax.set_title(fig_name.replace("_", " "))
    ax.legend()
    fig.tight_layout()
    # fixed metadata keeps the PNG bytes reproducible
    fig.savefig(path, dpi=100, metadata={"Software": None})
    plt.close(fig)


def emit_report(report: ExperimentReport, out_dir: str | Path, formats=("csv", "json"),
                plot_data: bool = False, method: str = "FGSM") -> list[Path]:
    """Write ``cells.csv`` / ``report.json`` and, with ``plot_data``, per-figure series + PNGs."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ReportError(f"cannot write to {out}: {exc}") from None
    written = []
    for fmt in formats:
        if fmt == "csv":
            written.append(write_cells_csv(report, out / "cells.csv"))
        elif fmt == "json":
            written.append(report.save(out / "report.json"))
        else:
            raise ReportError(f"unknown format {fmt!r}")
    if plot_data:
        for fig, rows in plot_series(report, method).items():
            path = out / f"series_{fig}.csv"
            with open(path, "w", newline="") as fh:
                w = csv.DictWriter(fh, ["variant", "epsilon", "mean_success", "std_success"])
                w.writeheader()
                for r in rows:
                    w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})
            written.append(path)
            png = out / f"series_{fig}.png"
            _render(fig, rows, method, png)
            written.append(png)
    return written


def fmt_mean_std(d: dict, digits: int = 3) -> str:
    if d["mean"] is None or math.isnan(d["mean"]):
        return "n/a"
    return f"{d['mean']:.{digits}f} ± {d['std']:.{digits}f}"
