"""
Plot data export: epsilon-versus-r curves per anchor strategy (quadrature
study) and E-versus-L curves per method (diffusion study).

Each figure is written twice, as a tidy CSV with exactly the plotted
values and as an SVG line chart. SVG output is made reproducible by fixing
the hash salt and dropping the date stamp.
"""

from __future__ import annotations

import math
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .config import read_csv, write_csv  # noqa: E402
from .errors import ParameterError  # noqa: E402

plt.rcParams["svg.hashsalt"] = "cvthdmr"


def _slug(s: str) -> str:
    return "".join(c if c.isalnum() else "_" for c in s).strip("_")


def _save(fig, path: Path):
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _series_label(strategy, L):
    return f"{strategy} L={L}" if strategy in ("CVT", "Ave") else strategy


def plot_quadrature(errors_csv, out_dir) -> list[Path]:
    chash, rows = read_csv(errors_csv)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    by_density = defaultdict(lambda: defaultdict(list))
    for row in rows:
        eps = float(row["epsilon"])
        by_density[row["density"]][_series_label(row["strategy"], row["L"])].append((int(row["r"]), eps))
    written = []
    for density, series in by_density.items():
        stem = out / f"epsilon_vs_r_{_slug(density)}"
        table = [[name, r, eps] for name, pts in series.items() for r, eps in pts]
        written.append(write_csv(stem.with_suffix(".csv"), ["series", "r", "epsilon"], table, chash or ""))
        fig, ax = plt.subplots(figsize=(5.5, 4))
        for name, pts in series.items():
            pts = [(r, e) for r, e in pts if math.isfinite(e) and e > 0]
            if pts:
                ax.semilogy(*zip(*pts), marker="o", label=name)
        ax.set_xlabel("truncation order r")
        ax.set_ylabel("relative integral error")
        ax.set_title(density)
        ax.legend(fontsize=7)
        _save(fig, stem.with_suffix(".svg"))
        written.append(stem.with_suffix(".svg"))
    return written


def plot_diffusion(models_csv, out_dir) -> list[Path]:
    chash, rows = read_csv(models_csv)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    series = defaultdict(list)
    for row in rows:
        name = row["method"] if row["node_scope"] == "global" else f"{row['method']} ({row['node_scope']} box)"
        series[name].append((int(row["L"]), float(row["E"])))
    stem = out / "E_vs_L"
    table = [[name, L, E] for name, pts in series.items() for L, E in pts]
    written = [write_csv(stem.with_suffix(".csv"), ["series", "L", "E"], table, chash or "")]
    fig, ax = plt.subplots(figsize=(5.5, 4))
    for name, pts in series.items():
        pts = [(L, E) for L, E in pts if math.isfinite(E)]
        if len(pts) == 1:
            ax.axhline(pts[0][1], linestyle="--", linewidth=1, label=name)
        elif pts:
            ax.plot(*zip(*pts), marker="o", label=name)
    ax.set_xlabel("number of anchors L")
    ax.set_ylabel("mean relative squared error E")
    ax.legend(fontsize=7)
    _save(fig, stem.with_suffix(".svg"))
    written.append(stem.with_suffix(".svg"))
    return written


def export_plots(results_dir, out_dir=None) -> list[Path]:
    """Write plot data for whatever experiment reports ``results_dir`` holds."""
    res = Path(results_dir)
    out = Path(out_dir) if out_dir is not None else res / "plots"
    written = []
    if (res / "quadrature_errors.csv").exists():
        written += plot_quadrature(res / "quadrature_errors.csv", out)
    if (res / "diffusion_models.csv").exists():
        written += plot_diffusion(res / "diffusion_models.csv", out)
    if not written:
        raise ParameterError(f"no experiment reports found in {res}")
    return written
