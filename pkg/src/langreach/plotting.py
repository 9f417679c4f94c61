"""Success-rate curves from metrics CSVs: mean with standard-error band."""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import yaml

from .harness import read_metrics


def _run_label(path: str) -> tuple[str, str]:
    """(mode, curve label) for a metrics.csv, via the run's config if present."""
    cfg_path = os.path.join(os.path.dirname(os.path.abspath(path)), "config.yaml")
    if os.path.exists(cfg_path):
        with open(cfg_path) as fh:
            cfg = yaml.safe_load(fh) or {}
        mode = str(cfg.get("mode", "default"))
        method = str(cfg.get("method", "run"))
        label = method
        if method in ("heir", "hipss"):
            label = f"{method}-{cfg.get('strategy', 'future')}"
        return mode, label
    stem = os.path.splitext(os.path.basename(path))[0]
    return "default", stem


def _resolve_csv(path: str) -> str:
    if os.path.isdir(path):
        return os.path.join(path, "metrics.csv")
    return path


def _common_grid(curves: list[tuple[np.ndarray, np.ndarray]]) -> np.ndarray:
    lo = max(float(x.min()) for x, _ in curves)
    hi = min(float(x.max()) for x, _ in curves)
    grid = sorted({float(v) for x, _ in curves for v in x if lo <= v <= hi})
    if not grid:
        raise ValueError("metric step grids do not overlap")
    return np.asarray(grid)


def plot_metrics(inputs: list[str], out_dir: str, metric: str = "success_rate") -> list[str]:
    """One figure per mode; runs sharing a label are averaged across seeds.

    Inconsistent step grids are linearly resampled onto their common grid.
    Returns the written file paths.
    """
    if not inputs:
        raise ValueError("need at least one metrics file")
    os.makedirs(out_dir, exist_ok=True)
    groups: dict[str, dict[str, list]] = {}
    for raw in inputs:
        path = _resolve_csv(raw)
        mode, label = _run_label(path)
        data = read_metrics(path)
        curve = (data["env_steps"], data[metric])
        groups.setdefault(mode, {}).setdefault(label, []).append(curve)

    written = []
    for mode in sorted(groups):
        fig, ax = plt.subplots(figsize=(6, 4))
        for label in sorted(groups[mode]):
            curves = groups[mode][label]
            grid = _common_grid(curves)
            stacked = np.stack([np.interp(grid, x, y) for x, y in curves])
            mean = stacked.mean(axis=0)
            (line,) = ax.plot(grid, mean, label=f"{label} (n={len(curves)})")
            if len(curves) > 1:
                sem = stacked.std(axis=0, ddof=1) / np.sqrt(len(curves))
                ax.fill_between(grid, mean - sem, mean + sem, alpha=0.25, color=line.get_color())
        ax.set_xlabel("environment steps")
        ax.set_ylabel(metric.replace("_", " "))
        ax.set_title(f"mode: {mode}")
        ax.set_ylim(-0.05, 1.05)
        ax.legend()
        fig.tight_layout()
        path = os.path.join(out_dir, f"{metric}_{mode}.png")
        fig.savefig(path, dpi=120, metadata={"Software": "langreach"})
        plt.close(fig)
        written.append(path)
    return written
