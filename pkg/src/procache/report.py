"""CSV emission and the matplotlib figures rendered next to each CSV."""
from __future__ import annotations

import csv
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

SCHEME_STYLE = {
    "reactive": dict(color="tab:gray", marker="s"),
    "random": dict(color="tab:brown", marker="x"),
    "lb-uc": dict(color="tab:green", marker="^", linestyle="--"),
    "lb-nck": dict(color="tab:olive", marker="v", linestyle="--"),
    "liso-fdm": dict(color="tab:blue", marker="o"),
    "liso-lrm": dict(color="tab:cyan", marker="o", linestyle="-."),
    "lfa-fdm": dict(color="tab:red", marker="d"),
    "lfa-lrm": dict(color="tab:orange", marker="d", linestyle="-."),
}


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    return path


def read_csv(path) -> list[dict]:
    with open(path) as fh:
        return list(csv.DictReader(fh))


def _style(scheme: str) -> dict:
    return SCHEME_STYLE.get(scheme, dict(marker="."))


def render_sweep_figure(csv_path, png_path, x_label: str) -> Path:
    """Average cost vs the swept variable, one errorbar line per scheme."""
    rows = read_csv(csv_path)
    by_scheme = defaultdict(list)
    for r in rows:
        by_scheme[r["scheme"]].append(
            (float(r["sweep_var"]), float(r["mean_mw"]), float(r["stderr_mw"]))
        )
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for scheme, pts in by_scheme.items():
        pts.sort()
        x, y, e = zip(*pts)
        ax.errorbar(x, y, yerr=e, label=scheme, capsize=2, **_style(scheme))
    ax.set_xlabel(x_label)
    ax.set_ylabel("average energy cost (mW)")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(png_path, dpi=150)
    plt.close(fig)
    return Path(png_path)


def render_memory_figure(csv_path, png_path) -> Path:
    """Memory sweep: cost vs p2, one line per (scheme, p1)."""
    rows = read_csv(csv_path)
    by_line = defaultdict(list)
    for r in rows:
        p1, p2 = (float(v) for v in r["sweep_var"].split(":"))
        by_line[(r["scheme"], p1)].append((p2, float(r["mean_mw"]),
                                           float(r["stderr_mw"])))
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for (scheme, p1), pts in sorted(by_line.items()):
        pts.sort()
        x, y, e = zip(*pts)
        style = dict(_style(scheme))
        style["alpha"] = 0.45 + 0.55 * p1
        ax.errorbar(x, y, yerr=e, label=f"{scheme} p1={p1}", capsize=2, **style)
    ax.set_xlabel("long-regime persistence p2")
    ax.set_ylabel("average energy cost (mW)")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(png_path, dpi=150)
    plt.close(fig)
    return Path(png_path)


def render_curves_figure(csv_path, png_path) -> Path:
    """Held-out cost vs trajectories consumed, per trained scheme."""
    rows = read_csv(csv_path)
    by_scheme = defaultdict(list)
    for r in rows:
        by_scheme[r["scheme"]].append(
            (int(r["trajectories_consumed"]), float(r["j_mean"]),
             float(r["j_stderr"]))
        )
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for scheme, pts in by_scheme.items():
        pts.sort()
        x, y, e = zip(*pts)
        ax.errorbar(x, y, yerr=e, label=scheme, capsize=2, **_style(scheme))
    ax.set_xlabel("trajectories consumed")
    ax.set_ylabel("held-out average energy cost (mW)")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(png_path, dpi=150)
    plt.close(fig)
    return Path(png_path)


def write_threshold_table(path, values, start_index: int = 1) -> Path:
    """Two-column text: index and threshold value in mW."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        for i, v in enumerate(values, start_index):
            fh.write(f"{i} {v!r}\n")
    return path


def render_threshold_figure(png_path, named_series) -> Path:
    """Threshold vectors (index vs mW) for the bound policies."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for name, values in named_series:
        ax.plot(range(1, len(values) + 1), values, marker="o", label=name)
    ax.set_xlabel("index (lifetime L / gap G)")
    ax.set_ylabel("threshold (mW)")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(png_path, dpi=150)
    plt.close(fig)
    return Path(png_path)
